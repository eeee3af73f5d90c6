#pragma once

#include <Eigen/Dense>

namespace nfiekf {

/// Relative cutoff for numerical rank, shared by the PSD factorization and the pseudo-inverse.
inline constexpr double kDefaultRelTol = 1e-10;

/// P = L L^T with L of full column rank.
struct PsdFactor {
  Eigen::MatrixXd L;

  Eigen::Index rank() const { return L.cols(); }
  Eigen::Index dim() const { return L.rows(); }
};

/// (P + P^T) / 2
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& p);

/**
 * Spectral factorization of a symmetric PSD matrix.
 *
 * Eigenvalues above rel_tol * lambda_max are kept; L = U_l diag(sqrt(lambda_l)).
 * Throws NotPsdError when an eigenvalue is below -rel_tol * lambda_max.
 */
PsdFactor factor_psd(const Eigen::MatrixXd& p, double rel_tol = kDefaultRelTol);

/// Moore-Penrose pseudo-inverse by SVD, dropping singular values below rel_tol * sigma_max.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, double rel_tol = kDefaultRelTol);

/**
 * Kalman gain in the limit of vanishing measurement noise, K = L (H L)^+.
 *
 * Well defined whatever the rank of H P H^T, so repeated or overlapping noise-free
 * measurements never hit a singular inversion.
 */
Eigen::MatrixXd limit_gain(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                           double rel_tol = kDefaultRelTol);

/// Standard gain P H^T (H P H^T + N)^-1; throws SingularInnovationError if S is not invertible.
Eigen::MatrixXd noisy_gain(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                           const Eigen::MatrixXd& n);

/// Joseph form (I - K H) P (I - K H)^T + K N K^T, symmetrized.
Eigen::MatrixXd joseph_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                  const Eigen::MatrixXd& k, const Eigen::MatrixXd& n);

/// Joseph form with N = 0, for K from limit_gain; the result is projected onto ker H, so H P_post = 0.
Eigen::MatrixXd noise_free_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                      const Eigen::MatrixXd& k);

/**
 * Zeroes eigenvalues at or below rel_tol * scale.
 *
 * A noise-free update can collapse P to round-off; measured against the prior's scale those
 * directions are exactly zero, and keeping them would fail the next PSD factorization.
 */
Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& p, double scale, double rel_tol = kDefaultRelTol);

/// Largest eigenvalue of a symmetric matrix (0 for an empty one).
double max_eigenvalue(const Eigen::MatrixXd& p);

/// Plain Riccati update (I - K H) P.
Eigen::MatrixXd plain_update_cov(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                 const Eigen::MatrixXd& k);

/// Orthogonal projector onto range(H L), i.e. onto range(H P H^T).
Eigen::MatrixXd innovation_range_projector(const Eigen::MatrixXd& p_prior, const Eigen::MatrixXd& h,
                                           double rel_tol = kDefaultRelTol);

}  // namespace nfiekf
