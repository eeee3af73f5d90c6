#include "nfiekf/model.hpp"

#include <cmath>
#include <string>

#include "nfiekf/errors.hpp"

namespace nfiekf {
namespace {

Space space_of_spatial(Eigen::Index n, const char* what) {
  if (n == 2) return Space::Planar;
  if (n == 3) return Space::Spatial;
  throw DimensionError(std::string(what) + " must be 2D or 3D");
}

Eigen::MatrixXd rotation_increment(const ImuSample& u) {
  if (u.space() == Space::Planar) return so2::exp(u.omega(0) * u.dt);
  return so3::exp(u.omega * u.dt);
}

}  // namespace

Eigen::VectorXd gravity_vector(Space space, double g) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(spatial_dim(space));
  v(v.size() - 1) = -g;
  return v;
}

Space ImuSample::space() const {
  const Space s = space_of_spatial(accel.size(), "accelerometer reading");
  if (omega.size() != rotation_dof(s)) throw DimensionError("gyro reading does not match accelerometer");
  return s;
}

Space Constraint::space() const {
  const Space s = space_of_spatial(r.size(), "lever vector");
  if (y.size() != r.size()) throw DimensionError("observation and lever vector differ in size");
  return s;
}

Eigen::VectorXd Constraint::descriptor() const {
  Eigen::VectorXd d(r.size() + 2);
  d << r, alpha, beta;
  return d;
}

Eigen::VectorXd Constraint::lifted_observation() const {
  Eigen::VectorXd lifted(y.size() + 2);
  lifted << y, alpha, beta;
  return lifted;
}

Constraint crane_constraint(Space space, double cable_length) {
  Constraint c;
  c.r = Eigen::VectorXd::Zero(spatial_dim(space));
  c.r(c.r.size() - 1) = -cable_length;
  c.alpha = 0.0;
  c.beta = 1.0;
  c.y = Eigen::VectorXd::Zero(spatial_dim(space));
  return c;
}

GroupElement propagate_mean(const GroupElement& chi, const ImuSample& u, const Eigen::VectorXd& g) {
  if (u.space() != chi.space() || g.size() != spatial_dim(chi.space())) {
    throw DimensionError("IMU sample, gravity and state disagree on dimension");
  }
  const Eigen::MatrixXd r = chi.rotation();
  const Eigen::VectorXd v = chi.velocity();
  const Eigen::VectorXd p = chi.position();
  return {r * rotation_increment(u), v + (r * u.accel + g) * u.dt, p + v * u.dt};
}

Eigen::MatrixXd jacobian_F(const ImuSample& u) {
  const Space s = u.space();
  const Eigen::Index n = spatial_dim(s);
  const Eigen::Index k = rotation_dof(s);
  const Eigen::MatrixXd omega_inv = rotation_increment(u).transpose();

  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(tangent_dim(s), tangent_dim(s));
  if (s == Space::Planar) {
    f(0, 0) = 1.0;
    f.block(k, 0, n, 1) = u.dt * omega_inv * so2::generator() * u.accel;
  } else {
    f.topLeftCorner(3, 3) = omega_inv;
    f.block(k, 0, n, 3) = -u.dt * omega_inv * so3::hat(u.accel);
  }
  f.block(k, k, n, n) = omega_inv;
  f.block(k + n, k, n, n) = u.dt * omega_inv;
  f.block(k + n, k + n, n, n) = omega_inv;
  return f;
}

Eigen::MatrixXd jacobian_H(const Constraint& c) {
  const Space s = c.space();
  const Eigen::Index n = spatial_dim(s);
  const Eigen::Index k = rotation_dof(s);
  Eigen::MatrixXd h(n, tangent_dim(s));
  if (s == Space::Planar) {
    h.col(0) = so2::generator() * c.r;
  } else {
    h.leftCols(3) = -so3::hat(c.r);
  }
  h.block(0, k, n, n) = c.alpha * Eigen::MatrixXd::Identity(n, n);
  h.block(0, k + n, n, n) = c.beta * Eigen::MatrixXd::Identity(n, n);
  return h;
}

Eigen::VectorXd innovation(const GroupElement& chi_hat, const Constraint& c) {
  if (c.space() != chi_hat.space()) throw DimensionError("constraint and state disagree on dimension");
  const Eigen::VectorXd full = act(inverse(chi_hat), c.lifted_observation()) - c.descriptor();
  const Eigen::Index n = spatial_dim(chi_hat.space());
  if (full.tail(2).cwiseAbs().maxCoeff() > 1e-12) {
    throw MalformedConstraintError("homogeneous tail of the innovation does not cancel");
  }
  return full.head(n);
}

Eigen::MatrixXd process_noise(const NoiseParams& noise, Space space, double dt) {
  const Eigen::Index n = spatial_dim(space);
  const Eigen::Index k = rotation_dof(space);
  if (noise.gyro_cov.rows() != k || noise.gyro_cov.cols() != k || noise.accel_cov.rows() != n ||
      noise.accel_cov.cols() != n) {
    throw DimensionError("process noise covariances do not match the group");
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(tangent_dim(space), tangent_dim(space));
  q.topLeftCorner(k, k) = noise.gyro_cov;
  q.block(k, k, n, n) = noise.accel_cov;
  return q * dt;
}

}  // namespace nfiekf
