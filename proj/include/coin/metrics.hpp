#pragma once

#include <vector>

#include <Eigen/Core>

#include "coin/motion.hpp"
#include "coin/world.hpp"

namespace coin {

enum class AlignKind {
  kFirstFrame,
  kFirstTwoFrames,
  kFullProcrustes,
  kRigidOnly,
  kSimilarity,
};

// Recovered alignment pred -> target: x' = scale * rotation * x + translation.
struct Alignment {
  AlignKind kind = AlignKind::kRigidOnly;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const {
    return scale * (rotation * x) + translation;
  }
};

// Joint positions per frame; the unit every human-motion metric consumes.
using JointSequence = std::vector<std::vector<Eigen::Vector3d>>;

JointSequence joint_sequence(const MotionWindow& motion, const BodyModel& body,
                             const Eigen::Vector2d& beta);

// Least-squares similarity (or rigid) transform A -> B via SVD with a
// reflection guard. Throws ConfigError on degenerate (collinear) input.
Alignment procrustes(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                     bool allow_scale);

// W-MPJPE: per 100-frame chunk, rigid alignment on the first two frames'
// joints, then mean per-joint error, averaged across chunks.
double w_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk = 100);

// WA-MPJPE: whole-chunk rigid Procrustes alignment, then mean error.
double wa_mpjpe(const JointSequence& pred, const JointSequence& gt, int chunk = 100);

// PA-MPJPE: per-frame similarity Procrustes, then mean error.
double pa_mpjpe(const JointSequence& pred, const JointSequence& gt);

// W-RJE: W-MPJPE restricted to the root joint.
double w_rje(const JointSequence& pred, const JointSequence& gt, int chunk = 100);

// Mean norm of the second-difference mismatch, divided by dt^2.
double accel_error(const JointSequence& pred, const JointSequence& gt, double dt = 1.0 / 30.0);

// RMS camera-position error after similarity (with_scale) or rigid-only
// alignment of the center sequences.
double ate(const CameraTrajectory& pred, const CameraTrajectory& gt, bool with_scale);

// Camera acceleration error over center sequences.
double cam_accel(const CameraTrajectory& pred, const CameraTrajectory& gt,
                 double dt = 1.0 / 30.0);

struct RteRoe {
  double rte = 0.0;  // length units
  double roe = 0.0;  // degrees
};

// Root trajectory errors after expressing each trajectory relative to its
// own first camera pose.
RteRoe rte_roe(const MotionWindow& pred, const CameraTrajectory& pred_cam,
               const MotionWindow& gt, const CameraTrajectory& gt_cam);

}  // namespace coin
