#include "nfiekf/gain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nfiekf/errors.hpp"

namespace nfiekf {
namespace {

void require_square(const Eigen::MatrixXd& p, const char* what) {
  if (p.rows() != p.cols()) throw DimensionError(std::string(what) + " must be square");
}

void require_compatible(const Eigen::MatrixXd& p, const Eigen::MatrixXd& h) {
  require_square(p, "covariance");
  if (h.cols() != p.rows()) {
    throw DimensionError("measurement Jacobian has " + std::to_string(h.cols()) +
                         " columns, covariance is " + std::to_string(p.rows()) + "x" +
                         std::to_string(p.rows()));
  }
}

double spectral_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return a.jacobiSvd().singularValues()(0);
}

// Singular values at or below abs_cutoff are treated as zero.
Eigen::MatrixXd pinv_below(const Eigen::MatrixXd& a, double abs_cutoff) {
  if (a.size() == 0) return Eigen::MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > abs_cutoff) inv(i) = 1.0 / sigma(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// H L is rank-tested against the scale of its factors rather than its own largest
// singular value: after a noise-free update H L is pure round-off and must count as zero.
Eigen::MatrixXd pinv_of_product(const Eigen::MatrixXd& h, const Eigen::MatrixXd& l, double rel_tol) {
  return pinv_below(h * l, rel_tol * spectral_norm(h) * spectral_norm(l));
}

}  // namespace

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& p) { return 0.5 * (p + p.transpose()); }

PsdFactor factor_psd(const Eigen::MatrixXd& p, double rel_tol) {
  require_square(p, "covariance");
  const Eigen::Index n = p.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0)};

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(p));
  const Eigen::VectorXd& lambda = eig.eigenvalues();  // ascending
  const double lambda_max = std::max(lambda(n - 1), 0.0);
  const double cutoff = rel_tol * lambda_max;
  if (lambda(0) < -cutoff) {
    throw NotPsdError("covariance has eigenvalue " + std::to_string(lambda(0)) +
                      " below -rel_tol * lambda_max");
  }

  Eigen::Index rank = 0;
  while (rank < n && lambda(n - 1 - rank) > cutoff) ++rank;

  PsdFactor f{Eigen::MatrixXd(n, rank)};
  for (Eigen::Index j = 0; j < rank; ++j) {
    const Eigen::Index src = n - 1 - j;
    f.L.col(j) = eig.eigenvectors().col(src) * std::sqrt(lambda(src));
  }
  return f;
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, double rel_tol) {
  return pinv_below(a, rel_tol * spectral_norm(a));
}

Eigen::MatrixXd limit_gain(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h, double rel_tol) {
  require_compatible(p_prior, h);
  const PsdFactor f = factor_psd(p_prior, rel_tol);
  if (f.rank() == 0) return Eigen::MatrixXd::Zero(p_prior.rows(), h.rows());
  return f.L * pinv_of_product(h, f.L, rel_tol);
}

Eigen::MatrixXd noisy_gain(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                           const Eigen::MatrixXd& n) {
  require_compatible(p_prior, h);
  if (n.rows() != h.rows() || n.cols() != h.rows()) {
    throw DimensionError("measurement covariance does not match the measurement dimension");
  }
  const Eigen::MatrixXd s = symmetrize(h * p_prior * h.transpose() + n);
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SingularInnovationError("innovation covariance is not positive definite");
  }
  // K = P H^T S^-1  <=>  S K^T = H P
  return llt.solve(h * p_prior).transpose();
}

Eigen::MatrixXd joseph_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                  const Eigen::MatrixXd& k, const Eigen::MatrixXd& n) {
  require_compatible(p_prior, h);
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(p_prior.rows(), p_prior.cols()) - k * h;
  return symmetrize(a * p_prior * a.transpose() + k * n * k.transpose());
}

Eigen::MatrixXd noise_free_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                      const Eigen::MatrixXd& k) {
  require_compatible(p_prior, h);
  const Eigen::Index n = p_prior.rows();
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - k * h;
  // The exact posterior factor (I - K H) L lives in ker H. Forming it from the prior's factor and
  // projecting keeps round-off at the posterior's scale; a badly conditioned prior would
  // otherwise leave a measured direction that looks significant next to a small posterior.
  const PsdFactor f = factor_psd(p_prior);
  const Eigen::MatrixXd kernel = Eigen::MatrixXd::Identity(n, n) - pinv(h) * h;
  const Eigen::MatrixXd l_post = kernel * (a * f.L);
  return clamp_psd(l_post * l_post.transpose(), max_eigenvalue(p_prior));
}

Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& p, double scale, double rel_tol) {
  require_square(p, "covariance");
  if (p.size() == 0) return p;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrize(p));
  const double cutoff = rel_tol * scale;
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  if (lambda.minCoeff() > cutoff) return symmetrize(p);
  const Eigen::VectorXd kept = (lambda.array() > cutoff).select(lambda, 0.0);
  return symmetrize(eig.eigenvectors() * kept.asDiagonal() * eig.eigenvectors().transpose());
}

double max_eigenvalue(const Eigen::MatrixXd& p) {
  if (p.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(symmetrize(p), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

Eigen::MatrixXd plain_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                 const Eigen::MatrixXd& k) {
  require_compatible(p_prior, h);
  return (Eigen::MatrixXd::Identity(p_prior.rows(), p_prior.cols()) - k * h) * p_prior;
}

Eigen::MatrixXd innovation_range_projector(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                           double rel_tol) {
  require_compatible(p_prior, h);
  const PsdFactor f = factor_psd(p_prior, rel_tol);
  if (f.rank() == 0) return Eigen::MatrixXd::Zero(h.rows(), h.rows());
  return h * f.L * pinv_of_product(h, f.L, rel_tol);
}

}  // namespace nfiekf
