#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nfiekf/gain.hpp"
#include "nfiekf/lie.hpp"
#include "nfiekf/model.hpp"

namespace nfiekf {

// ---------------------------------------------------------------------------
// Linear Kalman filter

struct LinearBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

enum class CovarianceForm { Joseph, Plain };

LinearBelief kf_propagate(const LinearBelief& b, const Eigen::MatrixXd& f, const Eigen::MatrixXd& b_in,
                          const Eigen::VectorXd& u, const Eigen::MatrixXd& q);

/// Measurement update. An empty noise covariance routes the gain through limit_gain.
LinearBelief kf_update(const LinearBelief& b, const Eigen::MatrixXd& h, const Eigen::VectorXd& y,
                       const std::optional<Eigen::MatrixXd>& n,
                       CovarianceForm form = CovarianceForm::Joseph);

// ---------------------------------------------------------------------------
// Group-valued beliefs

/// Concentrated Gaussian chi = mean * exp(xi), xi ~ N(0, cov).
struct Belief {
  GroupElement mean;
  Eigen::MatrixXd cov;
};

struct UpdateReport {
  int iterations = 0;
  /// ||z^i|| for i = 0..iterations.
  std::vector<double> residual_norms;
  /// Split of the first innovation along range(H P H^T) and its orthogonal complement.
  double parallel_norm = 0.0;
  double perpendicular_norm = 0.0;
  bool diverged = false;
};

Belief iekf_propagate(const Belief& b, const ImuSample& u, const NoiseParams& noise,
                      const Eigen::VectorXd& g);

/// Single-shot IEKF update chi_hat exp(K z). Noisy gain when noise.meas_cov is set, limit gain otherwise.
std::pair<Belief, UpdateReport> iekf_update(const Belief& b, const Constraint& c, const NoiseParams& noise);

inline constexpr double kDefaultCycleTol = 1e-7;
inline constexpr int kDefaultMaxCycles = 20;

/**
 * Noise-free IEKF update.
 *
 * The limit gain is computed once from the prior and reused while the innovation keeps
 * changing by more than tol. The covariance receives a single Joseph update at the end.
 * An innovation that grows by more than tol, or hitting max_iter, flags divergence and
 * returns the iterate with the smallest residual.
 */
std::pair<Belief, UpdateReport> nf_iekf_update(const Belief& b, const Constraint& c,
                                               double tol = kDefaultCycleTol,
                                               int max_iter = kDefaultMaxCycles);

// ---------------------------------------------------------------------------
// Conventional EKF on the planar chart x = (theta, v, p) with additive error

struct EkfBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GroupElement ekf_to_group(const Eigen::VectorXd& x);
Eigen::VectorXd ekf_from_group(const GroupElement& chi);

Eigen::VectorXd ekf_propagate_state(const Eigen::VectorXd& x, const ImuSample& u,
                                    const Eigen::VectorXd& g);
Eigen::MatrixXd ekf_jacobian_F(const Eigen::VectorXd& x, const ImuSample& u);
/// R(theta) r + alpha v + beta p
Eigen::VectorXd ekf_output(const Eigen::VectorXd& x, const Constraint& c);
Eigen::MatrixXd ekf_jacobian_H(const Eigen::VectorXd& x, const Constraint& c);

EkfBelief ekf_propagate(const EkfBelief& b, const ImuSample& u, const NoiseParams& noise,
                        const Eigen::VectorXd& g);
std::pair<EkfBelief, UpdateReport> ekf_update(const EkfBelief& b, const Constraint& c,
                                              const NoiseParams& noise);

// ---------------------------------------------------------------------------
// Common run-time interface used by the benchmark

enum class FilterKind { Ekf, Iekf, NoiseFreeIekf };

std::string to_string(FilterKind kind);
/// Accepts "ekf", "iekf" and "nf-iekf".
std::optional<FilterKind> parse_filter_kind(const std::string& name);

class Filter {
public:
  virtual ~Filter() = default;

  virtual FilterKind kind() const = 0;
  virtual void propagate(const ImuSample& u) = 0;
  virtual UpdateReport update(const Constraint& c) = 0;
  virtual GroupElement estimate() const = 0;
  virtual const Eigen::MatrixXd& covariance() const = 0;
};

struct FilterSettings {
  NoiseParams noise;       ///< meas_cov is the baseline noise; the noise-free filter ignores it
  Eigen::VectorXd gravity;
  double tol = kDefaultCycleTol;
  int max_iter = kDefaultMaxCycles;
};

std::unique_ptr<Filter> make_filter(FilterKind kind, const GroupElement& initial_mean,
                                    const Eigen::MatrixXd& initial_cov, const FilterSettings& settings);

}  // namespace nfiekf
