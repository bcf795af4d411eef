#include "coin/rotation.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace coin {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix3d rotvec_to_matrix(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const Eigen::Matrix3d k = skew(phi);
  if (theta2 < 1e-16) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * k * k;
}

Eigen::Vector3d matrix_to_rotvec(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Eigen::Vector3d axis = aa.axis();
  if (angle > M_PI) {  // canonicalize to [0, pi]
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  return angle * axis;
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi) {
  const double theta2 = phi.squaredNorm();
  const Eigen::Matrix3d k = skew(phi);
  if (theta2 < 1e-16) {
    return Eigen::Matrix3d::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Eigen::Matrix3d::Identity() - a * k + b * k * k;
}

Eigen::Matrix3d rotate_jacobian(const Eigen::Vector3d& phi, const Eigen::Vector3d& v) {
  return -rotvec_to_matrix(phi) * skew(v) * so3_right_jacobian(phi);
}

Eigen::Matrix3d rotate_transpose_jacobian(const Eigen::Vector3d& phi, const Eigen::Vector3d& v) {
  // R(phi)^T = R(-phi); chain rule through the sign flip.
  return -rotate_jacobian(-phi, v);
}

double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Eigen::Vector3d slerp_rotvec(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double u) {
  Eigen::Quaterniond qa(rotvec_to_matrix(a));
  Eigen::Quaterniond qb(rotvec_to_matrix(b));
  return matrix_to_rotvec(qa.slerp(u, qb).toRotationMatrix());
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
    fix(2, 2) = -1.0;
    r = svd.matrixU() * fix * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace coin
