#pragma once

#include <Eigen/Dense>

namespace nfiekf {

/// Ambient dimension of the extended pose: planar SE_2(2) or spatial SE_2(3).
enum class Space { Planar = 2, Spatial = 3 };

constexpr Eigen::Index spatial_dim(Space s) { return s == Space::Planar ? 2 : 3; }
constexpr Eigen::Index rotation_dof(Space s) { return s == Space::Planar ? 1 : 3; }
constexpr Eigen::Index tangent_dim(Space s) { return rotation_dof(s) + 2 * spatial_dim(s); }
constexpr Eigen::Index matrix_size(Space s) { return spatial_dim(s) + 2; }

/// Below this rotation magnitude closed forms switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-7;
/// Orthogonality drift that triggers polar re-projection of a rotation block.
inline constexpr double kOrthoDrift = 1e-9;
/// Distance to ±π under which the principal logarithm is refused.
inline constexpr double kBranchMargin = 1e-9;

namespace so2 {

/// The planar generator J = [[0,-1],[1,0]].
Eigen::Matrix2d generator();
Eigen::Matrix2d hat(double angle);
Eigen::Matrix2d exp(double angle);
/// Principal angle in (-π, π); throws BranchCutError on the cut.
double log(const Eigen::Matrix2d& rotation);
Eigen::Matrix2d left_jacobian(double angle);
Eigen::Matrix2d left_jacobian_inverse(double angle);

}  // namespace so2

namespace so3 {

Eigen::Matrix3d hat(const Eigen::Vector3d& w);
Eigen::Vector3d vee(const Eigen::Matrix3d& m);
Eigen::Matrix3d exp(const Eigen::Vector3d& w);
/// Principal rotation vector with angle in [0, π); throws BranchCutError on the cut.
Eigen::Vector3d log(const Eigen::Matrix3d& rotation);
Eigen::Matrix3d left_jacobian(const Eigen::Vector3d& w);
Eigen::Matrix3d left_jacobian_inverse(const Eigen::Vector3d& w);

}  // namespace so3

/// Lie-algebra coordinates of an extended pose, ordered (rotation, velocity, position).
class Tangent {
public:
  Tangent(Space space, Eigen::VectorXd coords);

  static Tangent zero(Space space);
  static Tangent from_blocks(const Eigen::VectorXd& rotation, const Eigen::VectorXd& velocity,
                             const Eigen::VectorXd& position);

  Space space() const { return space_; }
  Eigen::Index dim() const { return coords_.size(); }
  const Eigen::VectorXd& coords() const { return coords_; }

  Eigen::VectorXd rotation() const { return coords_.head(rotation_dof(space_)); }
  Eigen::VectorXd velocity() const {
    return coords_.segment(rotation_dof(space_), spatial_dim(space_));
  }
  Eigen::VectorXd position() const { return coords_.tail(spatial_dim(space_)); }

  double norm() const { return coords_.norm(); }
  Tangent operator-() const { return {space_, -coords_}; }

private:
  Space space_;
  Eigen::VectorXd coords_;
};

/// Extended pose chi = [R v p; 0 1 0; 0 0 1] in SE_2(2) or SE_2(3).
class GroupElement {
public:
  /// Re-projects R onto the rotations when its orthogonality drift exceeds kOrthoDrift.
  GroupElement(const Eigen::MatrixXd& rotation, const Eigen::VectorXd& velocity,
               const Eigen::VectorXd& position);

  static GroupElement identity(Space space);
  /// Validates the homogeneous bottom rows and re-projects the rotation block.
  static GroupElement from_matrix(const Eigen::MatrixXd& m);

  Space space() const { return space_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  Eigen::MatrixXd rotation() const;
  Eigen::VectorXd velocity() const;
  Eigen::VectorXd position() const;

private:
  GroupElement(Space space, Eigen::MatrixXd m) : space_(space), matrix_(std::move(m)) {}

  Space space_;
  Eigen::MatrixXd matrix_;
};

Eigen::MatrixXd hat(const Tangent& xi);
/// Inverse of hat; the space is inferred from the matrix size.
Tangent vee(const Eigen::MatrixXd& algebra);

GroupElement exp(const Tangent& xi);
Tangent log(const GroupElement& chi);

GroupElement compose(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& a);
/// chi * d for a homogeneous descriptor d = (r, alpha, beta).
Eigen::VectorXd act(const GroupElement& chi, const Eigen::VectorXd& d);

inline GroupElement operator*(const GroupElement& a, const GroupElement& b) {
  return compose(a, b);
}

}  // namespace nfiekf
