#pragma once

#include <vector>

#include <Eigen/Core>

#include "coin/motion.hpp"
#include "coin/world.hpp"

namespace coin {

// Optimized camera parameters on top of the SLAM estimate: global scale
// (log-space), first-frame height and orientation correction, and per-frame
// pose deltas (only unlocked in the final stage).
struct CameraVars {
  double log_s = 0.0;
  double h0 = 0.0;
  Eigen::Vector3d r0 = Eigen::Vector3d::Zero();
  Eigen::MatrixXd delta_rot;    // T x 3 rotation-vector corrections
  Eigen::MatrixXd delta_trans;  // T x 3 translation corrections

  static CameraVars identity(int frames);
  double scale() const;
};

// Effective world-to-camera pose for one frame:
//   R_eff = dR * R_base * R0^T
//   t_eff = dR * (s * t_base) + dt - R_eff * (h0 * e_z)
struct EffectiveCamera {
  Eigen::Matrix3d r_eff;
  Eigen::Vector3d t_eff;
  Eigen::Matrix3d delta_r;
  Eigen::Vector3d delta_t;
  Eigen::Matrix3d r_base;
  Eigen::Vector3d t_base;
  double s = 1.0;
  double h0 = 0.0;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return r_eff * world + t_eff;
  }
  // Camera-frame position of a SLAM-frame scene point (scene scales with s).
  Eigen::Vector3d scene_to_camera(const Eigen::Vector3d& slam_point) const {
    return delta_r * (s * (r_base * slam_point + t_base)) + delta_t;
  }
};

EffectiveCamera effective_camera(const CameraFrame& base, const CameraVars& vars, int frame);

// Gradient accumulator over every optimization variable.
struct VarGrads {
  Eigen::VectorXd motion;  // flattened MotionWindow channels
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  double log_s = 0.0;
  double h0 = 0.0;
  Eigen::Vector3d r0 = Eigen::Vector3d::Zero();
  Eigen::MatrixXd delta_rot;
  Eigen::MatrixXd delta_trans;

  VarGrads() = default;
  explicit VarGrads(const ChannelLayout& layout);
  void add_scaled(const VarGrads& other, double scale);
  double squared_norm() const;
};

struct LossResult {
  double value = 0.0;
  VarGrads grads;
  int behind_camera = 0;
};

// Per-term weights, tuned on the synthetic benchmark.
struct LossWeights {
  double l_2d = 20.0;
  double l_3d = 5.0;
  double l_beta = 0.01;
  double l_smooth = 0.05;
  double l_contact = 0.05;
  double l_hsr = 1.0;
  double l_coin_sds = 0.1;
};

struct LossBreakdown {
  double l_2d = 0.0;
  double l_3d = 0.0;
  double l_beta = 0.0;
  double l_smooth = 0.0;
  double l_contact = 0.0;
  double l_hsr = 0.0;
  double l_coin_sds = 0.0;
  LossWeights weights;

  double total() const;
};

// Confidence-weighted Huber reprojection loss. Residuals are measured in
// normalized camera units (pixels / fx) with delta_px converted consistently,
// averaged over T * J_obs terms. Joints behind the camera contribute zero
// and are counted in behind_camera.
LossResult loss_2d(const MotionWindow& motion, const Eigen::Vector2d& beta,
                   const BodyModel& body, const CameraTrajectory& cam_base,
                   const CameraVars& cam_vars, const Eigen::MatrixXd& kp2d,
                   const Eigen::MatrixXd& conf, double delta_px = 10.0);

// Mean squared distance between root-relative camera-frame model joints and
// the observed local 3D joints, averaged over T * J_local terms.
LossResult loss_3d(const MotionWindow& motion, const Eigen::Vector2d& beta,
                   const BodyModel& body, const CameraTrajectory& cam_base,
                   const CameraVars& cam_vars, const Eigen::MatrixXd& local3d);

// Mean squared second difference of world joint positions plus the
// translation and orientation channels.
LossResult loss_smooth(const MotionWindow& motion, const Eigen::Vector2d& beta,
                       const BodyModel& body);

// Zero-velocity penalty on contact-labeled feet; labels come from the
// pseudo ground truth and are held fixed.
LossResult loss_contact(const MotionWindow& motion, const Eigen::Vector2d& beta,
                        const BodyModel& body, const Eigen::MatrixXd& labels);

// Shape shrinkage ||beta||^2.
LossResult loss_beta(const Eigen::Vector2d& beta, const ChannelLayout& layout);

// One occluded scene point in one frame, with its frozen nearest joint.
struct HsrTerm {
  int frame = 0;
  int point = 0;
  int joint = 0;  // observed-joint index, root = 0
};

// Freezes the visibility indicator and nearest-joint assignment at the
// current iterate (block-coordinate treatment of the discrete part). A term
// requires both the observational occlusion flag from the simulator and the
// nearest-joint pixel proxy at the current estimate; the nearest joint is
// taken from the current projection.
std::vector<HsrTerm> build_hsr_assignment(const MotionWindow& motion,
                                          const Eigen::Vector2d& beta, const BodyModel& body,
                                          const CameraTrajectory& cam_base,
                                          const CameraVars& cam_vars, const Scene& scene_est,
                                          const Eigen::MatrixXd& point_occluded);

// Human-scene relation loss: penalizes occluded scene points that appear in
// front of their nearest body joint, averaged over |P|. `margin` widens the
// acceptable depth gap; transient estimate jitter otherwise feeds the
// one-sided penalty and biases the scale upward.
LossResult loss_hsr(const MotionWindow& motion, const Eigen::Vector2d& beta,
                    const BodyModel& body, const CameraTrajectory& cam_base,
                    const CameraVars& cam_vars, const Scene& scene_est,
                    const std::vector<HsrTerm>& terms, double margin = 0.0);

}  // namespace coin
