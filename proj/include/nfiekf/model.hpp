#pragma once

#include <optional>

#include <Eigen/Dense>

#include "nfiekf/lie.hpp"

namespace nfiekf {

inline constexpr double kGravity = 9.81;

/// Gravity in the world frame: (0, -g) in the plane, (0, 0, -g) in space.
Eigen::VectorXd gravity_vector(Space space, double g = kGravity);

/// One IMU reading held over a step of length dt.
struct ImuSample {
  Eigen::VectorXd omega;  ///< angular rate, rad/s (1 entry in 2D, 3 in 3D)
  Eigen::VectorXd accel;  ///< specific force, m/s^2
  double dt = 0.0;

  Space space() const;
};

/// Process and measurement noise. An empty meas_cov means the measurement is exactly noise-free.
struct NoiseParams {
  /// White-noise densities; process_noise scales them by dt.
  Eigen::MatrixXd gyro_cov;
  Eigen::MatrixXd accel_cov;
  std::optional<Eigen::MatrixXd> meas_cov;

  bool noise_free() const { return !meas_cov.has_value(); }
};

/// Equality constraint R r + alpha v + beta p = y.
struct Constraint {
  Eigen::VectorXd r;
  double alpha = 0.0;
  double beta = 0.0;
  Eigen::VectorXd y;

  Space space() const;
  /// Group-form descriptor d = (r, alpha, beta), so that the constraint reads chi d = (y, alpha, beta).
  Eigen::VectorXd descriptor() const;
  Eigen::VectorXd lifted_observation() const;
};

/// Hook of a crane hanging from the origin on a cable of the given length (2D or 3D).
Constraint crane_constraint(Space space, double cable_length);

/**
 * First-order strapdown step:
 *   R+ = R exp(omega dt), v+ = v + (R a + g) dt, p+ = p + v dt.
 * The position uses the pre-update velocity.
 */
GroupElement propagate_mean(const GroupElement& chi, const ImuSample& u, const Eigen::VectorXd& g);

/// Left-invariant error transition matrix; does not depend on the state estimate.
Eigen::MatrixXd jacobian_F(const ImuSample& u);

/// Left-invariant output Jacobian, [-(r)x, alpha I, beta I] in 3D and [J r, alpha I, beta I] in 2D.
Eigen::MatrixXd jacobian_H(const Constraint& c);

/**
 * z = chi_hat^-1 (y, alpha, beta) - d, truncated to its spatial block.
 * Throws MalformedConstraintError if the homogeneous tail does not cancel.
 */
Eigen::VectorXd innovation(const GroupElement& chi_hat, const Constraint& c);

/// Discretized process noise Q dt: gyro covariance on the rotation block, accel on velocity.
Eigen::MatrixXd process_noise(const NoiseParams& noise, Space space, double dt);

}  // namespace nfiekf
