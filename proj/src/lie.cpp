#include "nfiekf/lie.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nfiekf/errors.hpp"

namespace nfiekf {
namespace {

Space space_from_spatial(Eigen::Index n) {
  if (n == 2) return Space::Planar;
  if (n == 3) return Space::Spatial;
  throw DimensionError("extended pose needs a 2D or 3D spatial block, got " + std::to_string(n));
}

// Above kSmallAngle the closed forms below are free of 0/0 but two of them still cancel
// catastrophically (four digits lost near 1e-6); those switch to their series up to this angle.
constexpr double kSeriesAngle = 0.1;

// (1 - cos t) / t^2 via the half-angle identity, exact to rounding for any t != 0.
double one_minus_cos_over_t2(double t) {
  const double h = 0.5 * t;
  const double sinc = std::sin(h) / h;
  return 0.5 * sinc * sinc;
}

// (t - sin t) / t^3
double t_minus_sin_over_t3(double t) {
  const double t2 = t * t;
  if (std::abs(t) < kSeriesAngle) {
    return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
  }
  return (t - std::sin(t)) / (t2 * t);
}

// (1 - (t/2) cot(t/2)) / t^2
double one_minus_half_cot_over_t2(double t) {
  const double t2 = t * t;
  if (std::abs(t) < kSeriesAngle) {
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  }
  const double h = 0.5 * t;
  return (1.0 - h / std::tan(h)) / t2;
}

Eigen::MatrixXd project_to_rotation(const Eigen::MatrixXd& r) {
  const Eigen::MatrixXd drift = r.transpose() * r - Eigen::MatrixXd::Identity(r.rows(), r.cols());
  if (r.determinant() <= 0.0) {
    throw std::invalid_argument("rotation block has non-positive determinant");
  }
  if (drift.cwiseAbs().maxCoeff() <= kOrthoDrift) return r;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

Eigen::MatrixXd left_jacobian(Space s, const Eigen::VectorXd& rot) {
  if (s == Space::Planar) return so2::left_jacobian(rot(0));
  return so3::left_jacobian(rot);
}

Eigen::MatrixXd left_jacobian_inverse(Space s, const Eigen::VectorXd& rot) {
  if (s == Space::Planar) return so2::left_jacobian_inverse(rot(0));
  return so3::left_jacobian_inverse(rot);
}

}  // namespace

namespace so2 {

Eigen::Matrix2d generator() {
  Eigen::Matrix2d j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

Eigen::Matrix2d hat(double angle) { return angle * generator(); }

Eigen::Matrix2d exp(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

double log(const Eigen::Matrix2d& rotation) {
  const double angle = std::atan2(rotation(1, 0), rotation(0, 0));
  if (std::numbers::pi - std::abs(angle) < kBranchMargin) {
    throw BranchCutError("SO(2) logarithm undefined at angle ±pi");
  }
  return angle;
}

// J_l(t) = (sin t / t) I + ((1 - cos t) / t) J
Eigen::Matrix2d left_jacobian(double angle) {
  double a = 0.0;
  double b = 0.0;
  if (std::abs(angle) < kSmallAngle) {
    const double t2 = angle * angle;
    a = 1.0 - t2 / 6.0;
    b = angle / 2.0 - angle * t2 / 24.0;
  } else {
    a = std::sin(angle) / angle;
    b = one_minus_cos_over_t2(angle) * angle;
  }
  return a * Eigen::Matrix2d::Identity() + b * generator();
}

Eigen::Matrix2d left_jacobian_inverse(double angle) {
  // [[a,-b],[b,a]]^-1 = (a I - b J) / (a^2 + b^2); here (t/2) cot(t/2) I - (t/2) J.
  double c = 0.0;
  if (std::abs(angle) < kSmallAngle) {
    c = 1.0 - angle * angle / 12.0;
  } else {
    const double half = angle / 2.0;
    c = half / std::tan(half);
  }
  return c * Eigen::Matrix2d::Identity() - (angle / 2.0) * generator();
}

}  // namespace so2

namespace so3 {

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Eigen::Matrix3d exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  double a = 0.0;
  double b = 0.0;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = one_minus_cos_over_t2(theta);
  }
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Vector3d log(const Eigen::Matrix3d& rotation) {
  const Eigen::Vector3d axis_sin = 0.5 * vee(rotation - rotation.transpose());
  const double s = axis_sin.norm();
  const double c = 0.5 * (rotation.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (std::numbers::pi - theta < kBranchMargin) {
    throw BranchCutError("SO(3) logarithm undefined at angle pi");
  }
  if (theta < kSmallAngle) return (1.0 + theta * theta / 6.0) * axis_sin;
  if (theta < 3.0) return (theta / s) * axis_sin;

  // Near pi sin(theta) is poorly conditioned; recover the axis from the symmetric part.
  const Eigen::Matrix3d sym = 0.5 * (rotation + rotation.transpose()) - c * Eigen::Matrix3d::Identity();
  Eigen::Index col = 0;
  sym.diagonal().maxCoeff(&col);
  Eigen::Vector3d axis = sym.col(col) / std::sqrt(sym(col, col));
  if (axis.dot(axis_sin) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

// J_l(w) = I + (1 - cos t)/t^2 W + (t - sin t)/t^3 W^2
Eigen::Matrix3d left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  double a = 0.0;
  double b = 0.0;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = one_minus_cos_over_t2(theta);
    b = t_minus_sin_over_t3(theta);
  }
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Matrix3d left_jacobian_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d k = hat(w);
  double b = 0.0;
  if (theta < kSmallAngle) {
    b = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    b = one_minus_half_cot_over_t2(theta);
  }
  return Eigen::Matrix3d::Identity() - 0.5 * k + b * k * k;
}

}  // namespace so3

Tangent::Tangent(Space space, Eigen::VectorXd coords) : space_(space), coords_(std::move(coords)) {
  if (coords_.size() != tangent_dim(space_)) {
    throw DimensionError("tangent has " + std::to_string(coords_.size()) + " coordinates, group needs " +
                         std::to_string(tangent_dim(space_)));
  }
}

Tangent Tangent::zero(Space space) { return {space, Eigen::VectorXd::Zero(tangent_dim(space))}; }

Tangent Tangent::from_blocks(const Eigen::VectorXd& rotation, const Eigen::VectorXd& velocity,
                             const Eigen::VectorXd& position) {
  const Space s = space_from_spatial(velocity.size());
  if (position.size() != velocity.size() || rotation.size() != rotation_dof(s)) {
    throw DimensionError("inconsistent tangent blocks");
  }
  Eigen::VectorXd c(tangent_dim(s));
  c << rotation, velocity, position;
  return {s, std::move(c)};
}

GroupElement::GroupElement(const Eigen::MatrixXd& rotation, const Eigen::VectorXd& velocity,
                           const Eigen::VectorXd& position)
    : space_(space_from_spatial(velocity.size())) {
  const Eigen::Index n = spatial_dim(space_);
  if (rotation.rows() != n || rotation.cols() != n || position.size() != n) {
    throw DimensionError("inconsistent extended pose blocks");
  }
  matrix_ = Eigen::MatrixXd::Identity(n + 2, n + 2);
  matrix_.topLeftCorner(n, n) = project_to_rotation(rotation);
  matrix_.block(0, n, n, 1) = velocity;
  matrix_.block(0, n + 1, n, 1) = position;
}

GroupElement GroupElement::identity(Space space) {
  return {space, Eigen::MatrixXd::Identity(matrix_size(space), matrix_size(space))};
}

GroupElement GroupElement::from_matrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DimensionError("group matrix must be square");
  const Space s = space_from_spatial(m.rows() - 2);
  const Eigen::Index n = spatial_dim(s);
  Eigen::MatrixXd bottom = Eigen::MatrixXd::Zero(2, n + 2);
  bottom(0, n) = 1.0;
  bottom(1, n + 1) = 1.0;
  if (m.bottomRows(2) != bottom) {
    throw std::invalid_argument("group matrix bottom rows must be [0 1 0; 0 0 1]");
  }
  return {m.topLeftCorner(n, n), m.block(0, n, n, 1), m.block(0, n + 1, n, 1)};
}

Eigen::MatrixXd GroupElement::rotation() const {
  const Eigen::Index n = spatial_dim(space_);
  return matrix_.topLeftCorner(n, n);
}

Eigen::VectorXd GroupElement::velocity() const {
  const Eigen::Index n = spatial_dim(space_);
  return matrix_.block(0, n, n, 1);
}

Eigen::VectorXd GroupElement::position() const {
  const Eigen::Index n = spatial_dim(space_);
  return matrix_.block(0, n + 1, n, 1);
}

Eigen::MatrixXd hat(const Tangent& xi) {
  const Space s = xi.space();
  const Eigen::Index n = spatial_dim(s);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 2, n + 2);
  if (s == Space::Planar) {
    m.topLeftCorner(2, 2) = so2::hat(xi.coords()(0));
  } else {
    m.topLeftCorner(3, 3) = so3::hat(xi.coords().head<3>());
  }
  m.block(0, n, n, 1) = xi.velocity();
  m.block(0, n + 1, n, 1) = xi.position();
  return m;
}

Tangent vee(const Eigen::MatrixXd& algebra) {
  if (algebra.rows() != algebra.cols()) throw DimensionError("algebra matrix must be square");
  const Space s = space_from_spatial(algebra.rows() - 2);
  const Eigen::Index n = spatial_dim(s);
  Eigen::VectorXd rot(rotation_dof(s));
  if (s == Space::Planar) {
    rot(0) = 0.5 * (algebra(1, 0) - algebra(0, 1));
  } else {
    rot = so3::vee(0.5 * (algebra.topLeftCorner<3, 3>() - algebra.topLeftCorner<3, 3>().transpose()));
  }
  return Tangent::from_blocks(rot, algebra.block(0, n, n, 1), algebra.block(0, n + 1, n, 1));
}

GroupElement exp(const Tangent& xi) {
  const Space s = xi.space();
  const Eigen::VectorXd rot = xi.rotation();
  const Eigen::MatrixXd jl = left_jacobian(s, rot);
  const Eigen::MatrixXd r = s == Space::Planar ? Eigen::MatrixXd(so2::exp(rot(0)))
                                               : Eigen::MatrixXd(so3::exp(rot));
  return {r, jl * xi.velocity(), jl * xi.position()};
}

Tangent log(const GroupElement& chi) {
  const Space s = chi.space();
  Eigen::VectorXd rot(rotation_dof(s));
  if (s == Space::Planar) {
    rot(0) = so2::log(chi.rotation());
  } else {
    rot = so3::log(chi.rotation());
  }
  const Eigen::MatrixXd jl_inv = left_jacobian_inverse(s, rot);
  return Tangent::from_blocks(rot, jl_inv * chi.velocity(), jl_inv * chi.position());
}

GroupElement compose(const GroupElement& a, const GroupElement& b) {
  if (a.space() != b.space()) throw DimensionError("cannot compose elements of different groups");
  return GroupElement::from_matrix(a.matrix() * b.matrix());
}

GroupElement inverse(const GroupElement& a) {
  const Eigen::MatrixXd rt = a.rotation().transpose();
  return {rt, -rt * a.velocity(), -rt * a.position()};
}

Eigen::VectorXd act(const GroupElement& chi, const Eigen::VectorXd& d) {
  if (d.size() != chi.matrix().rows()) {
    throw DimensionError("descriptor length " + std::to_string(d.size()) + " does not match group");
  }
  return chi.matrix() * d;
}

}  // namespace nfiekf
