#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "coin/motion.hpp"
#include "coin/random.hpp"

namespace coin {

// Stick-figure body: root (pelvis) plus J_local offset joints. The four
// contact logits pair with foot joints via foot_indices (heel/toe of each
// foot collapse onto the same stick-figure joint).
struct BodyModel {
  int local_joints = 4;
  std::vector<Eigen::Vector3d> rest_offsets;  // per local joint, body frame
  std::array<int, kContactCount> foot_indices{0, 1, 0, 1};

  static BodyModel standard();

  int observed_joints() const { return local_joints + 1; }  // root first

  // Rest offset scaled by shape: (1 + beta0) on xy, (1 + beta1) on z.
  Eigen::Vector3d scaled_rest(int joint, const Eigen::Vector2d& beta) const;
};

// World positions of all observed joints (root first) for one frame.
std::vector<Eigen::Vector3d> world_joints(const MotionWindow& motion, int frame,
                                          const BodyModel& body, const Eigen::Vector2d& beta);

struct PinholeIntrinsics {
  double fx = 1000.0;
  double fy = 1000.0;
  double cx = 500.0;
  double cy = 500.0;
  double width = 1000.0;
  double height = 1000.0;
};

// World-to-camera pose: x_cam = rotation * x_world + translation.
struct CameraFrame {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
};

struct CameraTrajectory {
  std::vector<CameraFrame> frames;
  PinholeIntrinsics intrinsics;

  int size() const { return static_cast<int>(frames.size()); }
  void validate() const;  // orthonormal rotations with det +1 (1e-9)
};

struct Scene {
  Eigen::MatrixXd points;  // N x 3, world frame

  int size() const { return static_cast<int>(points.rows()); }
  void validate() const;
};

// Simulated detector / SLAM outputs. local3d and kp2d cover root + local
// joints (root first). cam_est and scene_est share the SLAM frame anchored
// at the first camera, with the true scale divided out.
struct ObservationSet {
  ChannelLayout layout;
  Eigen::MatrixXd kp2d;          // T x (J_obs * 2)
  Eigen::MatrixXd kp2d_conf;     // T x J_obs, entries in [0, 1]
  Eigen::MatrixXd local3d;       // T x (J_obs * 3), camera frame
  Eigen::MatrixXd local_orient;  // T x 3, camera-frame root orientation (rotvec)
  CameraTrajectory cam_est;
  Scene scene_est;
  // SLAM-style per-frame observability: 0 if the scene point is visible in
  // that frame; j + 1 if it is hidden by the subject (projects onto the body
  // within the occlusion radius of joint j and lies behind it).
  Eigen::MatrixXd point_occluded;  // T x N

  int observed_joints() const { return layout.local_joints + 1; }
  Eigen::Vector2d pixel(int frame, int joint) const {
    return kp2d.block<1, 2>(frame, 2 * joint).transpose();
  }
  Eigen::Vector3d camera_point(int frame, int joint) const {
    return local3d.block<1, 3>(frame, 3 * joint).transpose();
  }

  // Frames [begin, begin + length); the scene is shared.
  ObservationSet slice(int begin, int length) const;
};

struct GaitParams {
  double speed = 1.2;             // length units / s
  double turn_rate = 0.0;         // rad / s
  double start_heading = 0.0;     // rad
  Eigen::Vector2d start_xy{0.0, 0.0};
  double stride_frequency = 1.4;  // full cycles / s per foot
  double stance_duty = 0.6;
  double step_height = 0.08;
  double lateral_offset = 0.10;
  double root_height = 0.9;
  double bob_amplitude = 0.02;
  double sway_amplitude = 0.02;
  double dt = 1.0 / 30.0;
  double contact_speed = 0.02;    // length units / frame
};

struct MotionWithContacts {
  MotionWindow motion;
  Eigen::MatrixXd contacts;  // T x 4, entries in {0, 1}
};

// Procedural locomotion. Frame i sits at time (i + 1) * dt so the root
// displacement from start_xy over T frames is exactly speed * T * dt on a
// straight path. Contact label k is 1 exactly when the paired foot joint's
// world displacement per frame is below contact_speed.
MotionWithContacts generate_motion(const GaitParams& params, int frames, std::uint64_t seed);

enum class CameraStyle { kOrbit, kFollow, kHandheld };

struct CameraGenParams {
  double orbit_radius = 3.0;
  double orbit_elevation = 0.35;   // rad above horizon
  double orbit_speed = 0.7;        // rad / s
  double orbit_phase = 0.0;
  double follow_back = 3.0;
  double follow_side = 0.5;
  double follow_up = 0.8;
  double jitter_amplitude = 0.05;  // handheld position jitter, length units
  double dt = 1.0 / 30.0;
  PinholeIntrinsics intrinsics;
};

// Smooth look-at camera tracking the subject root.
CameraTrajectory generate_camera(const MotionWindow& motion, CameraStyle style,
                                 const CameraGenParams& params, std::uint64_t seed);

constexpr double kDepthEpsilon = 1e-6;

struct Projection {
  Eigen::Vector2d pixel;
  double depth;
};

// Pinhole projection of a world point; throws NumericError when the
// transformed depth is at or below kDepthEpsilon.
Projection project(const CameraFrame& cam, const PinholeIntrinsics& intr,
                   const Eigen::Vector3d& point);
std::optional<Projection> try_project(const CameraFrame& cam, const PinholeIntrinsics& intr,
                                      const Eigen::Vector3d& point);
Eigen::Vector3d unproject(const CameraFrame& cam, const PinholeIntrinsics& intr,
                          const Eigen::Vector2d& pixel, double depth);

struct SceneGenParams {
  int num_points = 160;
  double margin = 2.5;        // box margin around the subject path
  double max_height = 2.2;
  double ground_fraction = 0.4;
};

Scene make_scene(const MotionWindow& motion, const SceneGenParams& params, std::uint64_t seed);

// Re-anchors the world origin below the first camera (xy shift only), the
// gauge in which first-frame height + orientation suffice to lift SLAM
// coordinates. Applies the same shift to motion, cameras and scene.
void anchor_world_to_first_camera(MotionWindow& motion, CameraTrajectory& cam, Scene& scene);

struct OcclusionConfig {
  double lower_body_prob = 0.2;
  double full_pose_prob = 0.2;
  double per_joint_event_prob = 0.5;
  double per_joint_prob = 0.3;
};

struct NoiseConfig {
  double pixel_sigma = 0.0;
  double local3d_sigma = 0.0;
  double orient_sigma = 0.0;      // camera-frame root orientation noise, rad
  double drift_sigma = 0.0;       // camera translation random walk, per frame
  double rot_jitter_sigma = 0.0;  // camera rotation random walk, rad per frame
  double outlier_prob = 0.0;
  double true_scale = 1.0;        // s_true; SLAM outputs are divided by it
  OcclusionConfig occlusion;
  bool enable_occlusion = false;

  static NoiseConfig none() { return NoiseConfig{}; }
  static NoiseConfig moderate();
};

ObservationSet simulate_observations(const MotionWindow& motion, const Eigen::MatrixXd& contacts,
                                     const CameraTrajectory& cam, const Scene& scene,
                                     const NoiseConfig& cfg, std::uint64_t seed,
                                     const BodyModel& body = BodyModel::standard());

// The HybrIK+SLAM initialization path: lifts camera-frame joints through
// cam_est (translations multiplied by `scale`) into the SLAM world frame and
// refits (tau, phi, theta, contacts). Output is expressed in the SLAM frame;
// first-frame height/orientation corrections are the optimizer's job.
MotionWithContacts observation_to_world_motion(const ObservationSet& obs, const BodyModel& body,
                                               double contact_speed = 0.02, double scale = 1.0);

// Mean of the lowest `stance_fraction` per-frame foot displacements of the
// scale-`s` conversion. Near zero exactly when planted feet are stationary,
// which pins the SLAM scale.
double foot_slide_score(const ObservationSet& obs, const BodyModel& body, double scale,
                        double stance_fraction = 0.4);

// Log-grid + refinement minimizer of foot_slide_score over [lo, hi].
double estimate_scale_by_foot_slide(const ObservationSet& obs, const BodyModel& body,
                                    double lo = 0.2, double hi = 5.0);

// Occlusion radius: 1.5x the mean pairwise projected inter-joint spacing.
double occlusion_radius(const std::vector<Eigen::Vector2d>& joint_pixels);

// 1 iff the scene point projects in front of the camera and within r_occ
// pixels of its nearest (by pixel distance) body joint; that joint's index
// is reported for depth lookups.
int visibility_indicator(const CameraFrame& cam, const PinholeIntrinsics& intr,
                         const Eigen::Vector3d& scene_point,
                         const std::vector<Eigen::Vector2d>& joint_pixels, double r_occ,
                         int* nearest_joint = nullptr);

}  // namespace coin
