#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace coin {

// Rotation-vector (axis-angle) helpers. R(phi) = exp([phi]_x).

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Exponential map SO(3).
Eigen::Matrix3d rotvec_to_matrix(const Eigen::Vector3d& phi);

// Logarithm map; returns the canonical rotation vector with angle in [0, pi].
Eigen::Vector3d matrix_to_rotvec(const Eigen::Matrix3d& r);

// Right Jacobian J_r(phi): exp(phi + d) ~= exp(phi) exp(J_r d).
Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi);

// d(R(phi) v)/dphi, a 3x3 matrix. Equals -R(phi) [v]_x J_r(phi).
Eigen::Matrix3d rotate_jacobian(const Eigen::Vector3d& phi, const Eigen::Vector3d& v);

// d(R(phi)^T v)/dphi.
Eigen::Matrix3d rotate_transpose_jacobian(const Eigen::Vector3d& phi, const Eigen::Vector3d& v);

// Geodesic angle between two rotations, radians.
double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Spherical interpolation between two rotation vectors, u in [0, 1].
Eigen::Vector3d slerp_rotvec(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double u);

// Nearest orthonormal matrix with det +1.
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

}  // namespace coin
