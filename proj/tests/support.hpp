#pragma once

// Shared helpers for the test binaries: random inputs and independent numerical oracles.

#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nfiekf/lie.hpp"

namespace testsupport {

inline std::mt19937_64& rng() {
  static std::mt19937_64 engine(20240607);
  return engine;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng());
  return m;
}

inline Eigen::VectorXd gaussian(Eigen::Index n) { return gaussian(n, 1); }

/// Random tangent whose rotation part has magnitude below max_angle.
inline nfiekf::Tangent random_tangent(nfiekf::Space s, double max_angle = 3.0, double scale = 1.0) {
  Eigen::VectorXd xi = scale * gaussian(nfiekf::tangent_dim(s));
  const Eigen::Index k = nfiekf::rotation_dof(s);
  const Eigen::VectorXd axis = gaussian(k).normalized();
  xi.head(k) = uniform(0.0, max_angle) * axis;
  return {s, xi};
}

inline nfiekf::GroupElement random_element(nfiekf::Space s) { return nfiekf::exp(random_tangent(s, 2.5, 2.0)); }

/// PSD matrix of the requested rank.
inline Eigen::MatrixXd random_psd(Eigen::Index n, Eigen::Index rank) {
  const Eigen::MatrixXd l = gaussian(n, rank);
  return l * l.transpose();
}

/// Matrix exponential by its power series with scaling and squaring: the oracle for exp.
inline Eigen::MatrixXd series_expm(const Eigen::MatrixXd& a) {
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2.0;
    ++squarings;
  }
  const Eigen::MatrixXd scaled = a / std::pow(2.0, squarings);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd term = sum;
  for (int k = 1; k < 30; ++k) {
    term = term * scaled / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Pseudo-inverse through a complete orthogonal decomposition (independent of the SVD path).
inline Eigen::MatrixXd cod_pinv(const Eigen::MatrixXd& a, double threshold) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  cod.setThreshold(threshold);
  return cod.pseudoInverse();
}

/// Central-difference Jacobian of f at x.
inline Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

/// Rounds entries to multiples of 2^-10 so that products of a few of them stay exact in quad precision.
inline Eigen::MatrixXd on_grid(const Eigen::MatrixXd& m) { return (m * 1024.0).array().round() / 1024.0; }

/**
 * Kalman gain P H^T (H P H^T + delta I)^-1 with P = L L^T, evaluated in quad precision by
 * Gaussian elimination. In double the solve loses eps * |S| / delta, which at delta = 1e-10
 * swamps the quantity under test; in quad the same loss is far below double resolution.
 */
inline Eigen::MatrixXd quad_noisy_gain(const Eigen::MatrixXd& l, const Eigen::MatrixXd& h, double delta) {
  using Q = __float128;
  const Eigen::Index n = l.rows();
  const Eigen::Index r = l.cols();
  const Eigen::Index m = h.rows();
  std::vector<Q> p(n * n, 0), hp(m * n, 0), s(m * m, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < r; ++k) p[i * n + j] += Q(l(i, k)) * Q(l(j, k));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) hp[i * n + j] += Q(h(i, k)) * p[k * n + j];
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < n; ++k) s[i * m + j] += hp[i * n + k] * Q(h(j, k));
    s[i * m + i] += Q(delta);
  }
  // Solve S X = H P, X is m x n; K = X^T.
  auto qabs = [](Q v) { return v < 0 ? -v : v; };
  for (Eigen::Index c = 0; c < m; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index i = c + 1; i < m; ++i)
      if (qabs(s[i * m + c]) > qabs(s[piv * m + c])) piv = i;
    for (Eigen::Index j = 0; j < m; ++j) std::swap(s[c * m + j], s[piv * m + j]);
    for (Eigen::Index j = 0; j < n; ++j) std::swap(hp[c * n + j], hp[piv * n + j]);
    for (Eigen::Index i = c + 1; i < m; ++i) {
      const Q f = s[i * m + c] / s[c * m + c];
      for (Eigen::Index j = c; j < m; ++j) s[i * m + j] -= f * s[c * m + j];
      for (Eigen::Index j = 0; j < n; ++j) hp[i * n + j] -= f * hp[c * n + j];
    }
  }
  Eigen::MatrixXd k(n, m);
  std::vector<Q> x(m);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = m - 1; i >= 0; --i) {
      Q acc = hp[i * n + j];
      for (Eigen::Index t = i + 1; t < m; ++t) acc -= s[i * m + t] * x[t];
      x[i] = acc / s[i * m + i];
    }
    for (Eigen::Index i = 0; i < m; ++i) k(j, i) = static_cast<double>(x[i]);
  }
  return k;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace testsupport
