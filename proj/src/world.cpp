#include "coin/world.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "coin/errors.hpp"
#include "coin/rotation.hpp"

namespace coin {

namespace {

double smoothstep(double w) { return w * w * (3.0 - 2.0 * w); }

Eigen::Matrix3d yaw_matrix(double heading) {
  return rotvec_to_matrix(Eigen::Vector3d(0, 0, heading));
}

// Keeps rotation vectors continuous across frames (the canonical log jumps
// at angle pi).
Eigen::Vector3d unwrap_rotvec(const Eigen::Vector3d& prev, const Eigen::Vector3d& current) {
  const double angle = current.norm();
  if (angle < 1e-12) return current;
  const Eigen::Vector3d alt = current * ((angle - 2.0 * M_PI) / angle);
  return (current - prev).squaredNorm() <= (alt - prev).squaredNorm() ? current : alt;
}

struct PathModel {
  double speed, turn_rate, heading0;
  Eigen::Vector2d start;

  Eigen::Vector2d position(double t) const {
    if (std::abs(turn_rate) < 1e-12) {
      return start + speed * t * Eigen::Vector2d(std::cos(heading0), std::sin(heading0));
    }
    const double h = heading0 + turn_rate * t;
    return start + (speed / turn_rate) *
                       Eigen::Vector2d(std::sin(h) - std::sin(heading0),
                                       -std::cos(h) + std::cos(heading0));
  }
  double heading(double t) const { return heading0 + turn_rate * t; }
};

}  // namespace

BodyModel BodyModel::standard() {
  BodyModel body;
  body.local_joints = 4;
  body.rest_offsets = {
      {0.0, 0.10, -0.90},   // left foot
      {0.0, -0.10, -0.90},  // right foot
      {0.0, 0.0, 0.70},     // head
      {0.20, 0.0, 0.05},    // pelvis forward marker
  };
  body.foot_indices = {0, 1, 0, 1};
  return body;
}

Eigen::Vector3d BodyModel::scaled_rest(int joint, const Eigen::Vector2d& beta) const {
  const Eigen::Vector3d& r = rest_offsets[joint];
  return {r.x() * (1.0 + beta[0]), r.y() * (1.0 + beta[0]), r.z() * (1.0 + beta[1])};
}

std::vector<Eigen::Vector3d> world_joints(const MotionWindow& motion, int frame,
                                          const BodyModel& body, const Eigen::Vector2d& beta) {
  std::vector<Eigen::Vector3d> out(body.observed_joints());
  const Eigen::Vector3d tau = motion.translation(frame);
  const Eigen::Matrix3d rot = rotvec_to_matrix(motion.orientation(frame));
  out[0] = tau;
  for (int j = 0; j < body.local_joints; ++j) {
    out[j + 1] = tau + rot * (body.scaled_rest(j, beta) + motion.joint_displacement(frame, j));
  }
  return out;
}

ObservationSet ObservationSet::slice(int begin, int length) const {
  const int frames = static_cast<int>(kp2d.rows());
  if (begin < 0 || length < 1 || begin + length > frames) {
    throw ConfigError("ObservationSet::slice out of range");
  }
  ObservationSet out;
  out.layout = ChannelLayout{length, layout.local_joints};
  out.kp2d = kp2d.middleRows(begin, length);
  out.kp2d_conf = kp2d_conf.middleRows(begin, length);
  out.local3d = local3d.middleRows(begin, length);
  out.local_orient = local_orient.middleRows(begin, length);
  out.cam_est.intrinsics = cam_est.intrinsics;
  out.cam_est.frames.assign(cam_est.frames.begin() + begin,
                            cam_est.frames.begin() + begin + length);
  out.scene_est = scene_est;
  out.point_occluded = point_occluded.middleRows(begin, length);
  return out;
}

void CameraTrajectory::validate() const {
  for (const CameraFrame& f : frames) {
    const Eigen::Matrix3d err =
        f.rotation * f.rotation.transpose() - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-9 || std::abs(f.rotation.determinant() - 1.0) > 1e-9) {
      throw ConfigError("CameraTrajectory: rotation is not orthonormal with det +1");
    }
  }
}

void Scene::validate() const {
  if (points.rows() < 1) throw ConfigError("Scene: needs at least one point");
  if (!points.allFinite()) throw ConfigError("Scene: non-finite point");
}

MotionWithContacts generate_motion(const GaitParams& p, int frames, std::uint64_t seed) {
  if (frames < 2) throw ConfigError("generate_motion: needs at least 2 frames");
  if (!(p.stride_frequency > 0.0)) throw ConfigError("generate_motion: zero stride period");
  if (!(p.dt > 0.0)) throw ConfigError("generate_motion: dt must be positive");

  const BodyModel body = BodyModel::standard();
  Rng rng(seed);
  const PathModel path{p.speed, p.turn_rate, p.start_heading, p.start_xy};

  // Deterministic per-seed oscillation phases and amplitudes.
  const double phase_bob = rng.uniform(0.0, 2.0 * M_PI);
  const double phase_pitch = rng.uniform(0.0, 2.0 * M_PI);
  const double phase_roll = rng.uniform(0.0, 2.0 * M_PI);
  const double amp_pitch = p.sway_amplitude * (0.5 + 0.5 * rng.uniform());
  const double amp_roll = p.sway_amplitude * (0.5 + 0.5 * rng.uniform());
  std::array<double, 6> osc_amp{}, osc_phase{};
  for (int i = 0; i < 6; ++i) {
    osc_amp[i] = 0.015 * (0.3 + 0.7 * rng.uniform());
    osc_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
  }

  const double f = p.stride_frequency;
  auto plant_point = [&](int foot, double cycle_index) {
    const double t_mid = (cycle_index + 0.5 * p.stance_duty - 0.5 * foot) / f;
    const Eigen::Vector2d base = path.position(t_mid);
    const double h = path.heading(t_mid);
    const double side = (foot == 0) ? p.lateral_offset : -p.lateral_offset;
    const Eigen::Vector2d normal(-std::sin(h), std::cos(h));
    return Eigen::Vector3d(base.x() + side * normal.x(), base.y() + side * normal.y(), 0.0);
  };
  auto foot_position = [&](int foot, double t) {
    const double cycle = f * t + 0.5 * foot;
    const double k = std::floor(cycle);
    const double u = cycle - k;
    if (u < p.stance_duty || p.speed == 0.0) return plant_point(foot, k);
    const double w = (u - p.stance_duty) / (1.0 - p.stance_duty);
    const Eigen::Vector3d a = plant_point(foot, k);
    const Eigen::Vector3d b = plant_point(foot, k + 1.0);
    Eigen::Vector3d pos = a + smoothstep(w) * (b - a);
    pos.z() += p.step_height * std::sin(M_PI * w);
    return pos;
  };

  MotionWindow motion(frames, body.local_joints);
  std::vector<std::array<Eigen::Vector3d, 2>> feet(frames);
  Eigen::Vector3d prev_phi = Eigen::Vector3d::Zero();
  for (int i = 0; i < frames; ++i) {
    const double t = (i + 1) * p.dt;
    const Eigen::Vector2d xy = path.position(t);
    const double heading = path.heading(t);
    const Eigen::Vector3d tau(xy.x(), xy.y(),
                              p.root_height +
                                  p.bob_amplitude * std::sin(4.0 * M_PI * f * t + phase_bob));

    const double pitch = amp_pitch * std::sin(4.0 * M_PI * f * t + phase_pitch);
    const double roll = amp_roll * std::sin(2.0 * M_PI * f * t + phase_roll);
    const Eigen::Matrix3d rot = yaw_matrix(heading) *
                                rotvec_to_matrix(Eigen::Vector3d(0, pitch, 0)) *
                                rotvec_to_matrix(Eigen::Vector3d(roll, 0, 0));
    Eigen::Vector3d phi = unwrap_rotvec(prev_phi, matrix_to_rotvec(rot));
    prev_phi = phi;

    motion.set_translation(i, tau);
    motion.set_orientation(i, phi);
    for (int s = 0; s < 2; ++s) {
      feet[i][s] = foot_position(s, t);
      const Eigen::Vector3d theta =
          rot.transpose() * (feet[i][s] - tau) - body.rest_offsets[s];
      motion.set_joint_displacement(i, s, theta);
    }
    // Head and marker ride on smooth small oscillations.
    const Eigen::Vector3d theta_head(osc_amp[0] * std::sin(2.0 * M_PI * f * t + osc_phase[0]),
                                     osc_amp[1] * std::sin(2.0 * M_PI * f * t + osc_phase[1]),
                                     osc_amp[2] * std::sin(4.0 * M_PI * f * t + osc_phase[2]));
    const Eigen::Vector3d theta_marker(
        osc_amp[3] * std::sin(2.0 * M_PI * f * t + osc_phase[3]),
        osc_amp[4] * std::sin(2.0 * M_PI * f * t + osc_phase[4]),
        osc_amp[5] * std::sin(4.0 * M_PI * f * t + osc_phase[5]));
    motion.set_joint_displacement(i, 2, theta_head);
    motion.set_joint_displacement(i, 3, theta_marker);
  }

  // Contact label: world foot displacement per frame below threshold.
  Eigen::MatrixXd contacts(frames, kContactCount);
  for (int i = 0; i < frames; ++i) {
    for (int k = 0; k < kContactCount; ++k) {
      const int foot = body.foot_indices[k];
      const int a = std::max(i, 1);
      const double v = (feet[a][foot] - feet[a - 1][foot]).norm();
      contacts(i, k) = (v < p.contact_speed) ? 1.0 : 0.0;
      motion.set_contact_logit(i, k, contacts(i, k) > 0.5 ? 4.0 : -4.0);
    }
  }
  return {std::move(motion), std::move(contacts)};
}

namespace {

CameraFrame look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  Eigen::Vector3d forward = (target - center).normalized();
  Eigen::Vector3d right = forward.cross(Eigen::Vector3d::UnitZ());
  if (right.norm() < 1e-9) right = Eigen::Vector3d::UnitX();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d rot;
  rot.row(0) = right;
  rot.row(1) = down;
  rot.row(2) = forward;
  CameraFrame frame;
  frame.rotation = orthonormalize(rot);
  frame.translation = -frame.rotation * center;
  return frame;
}

}  // namespace

CameraTrajectory generate_camera(const MotionWindow& motion, CameraStyle style,
                                 const CameraGenParams& p, std::uint64_t seed) {
  if (motion.frames() < 2) throw ConfigError("generate_camera: needs at least 2 frames");
  Rng rng(seed);

  std::array<double, 9> jit_amp{}, jit_freq{}, jit_phase{};
  for (int i = 0; i < 9; ++i) {
    jit_amp[i] = p.jitter_amplitude * (0.3 + 0.7 * rng.uniform());
    jit_freq[i] = rng.uniform(0.3, 1.8);
    jit_phase[i] = rng.uniform(0.0, 2.0 * M_PI);
  }

  CameraTrajectory traj;
  traj.intrinsics = p.intrinsics;
  traj.frames.resize(motion.frames());
  for (int i = 0; i < motion.frames(); ++i) {
    const double t = (i + 1) * p.dt;
    const Eigen::Vector3d target = motion.translation(i);
    Eigen::Vector3d center;
    switch (style) {
      case CameraStyle::kOrbit: {
        const double a = p.orbit_phase + p.orbit_speed * t;
        center = target + p.orbit_radius *
                              Eigen::Vector3d(std::cos(p.orbit_elevation) * std::cos(a),
                                              std::cos(p.orbit_elevation) * std::sin(a),
                                              std::sin(p.orbit_elevation));
        break;
      }
      case CameraStyle::kFollow:
      case CameraStyle::kHandheld: {
        const Eigen::Vector3d fwd =
            rotvec_to_matrix(motion.orientation(i)) * Eigen::Vector3d::UnitX();
        const double heading = std::atan2(fwd.y(), fwd.x());
        center = target +
                 yaw_matrix(heading) * Eigen::Vector3d(-p.follow_back, p.follow_side, 0.0) +
                 Eigen::Vector3d(0, 0, p.follow_up);
        if (style == CameraStyle::kHandheld) {
          for (int axis = 0; axis < 3; ++axis) {
            for (int h = 0; h < 3; ++h) {
              const int idx = 3 * axis + h;
              center[axis] +=
                  jit_amp[idx] * std::sin(2.0 * M_PI * jit_freq[idx] * t + jit_phase[idx]);
            }
          }
        }
        break;
      }
    }
    traj.frames[i] = look_at(center, target);
  }
  traj.validate();
  return traj;
}

Projection project(const CameraFrame& cam, const PinholeIntrinsics& intr,
                   const Eigen::Vector3d& point) {
  const Eigen::Vector3d x = cam.rotation * point + cam.translation;
  if (x.z() <= kDepthEpsilon) throw NumericError("project: point behind camera");
  return {{intr.fx * x.x() / x.z() + intr.cx, intr.fy * x.y() / x.z() + intr.cy}, x.z()};
}

std::optional<Projection> try_project(const CameraFrame& cam, const PinholeIntrinsics& intr,
                                      const Eigen::Vector3d& point) {
  const Eigen::Vector3d x = cam.rotation * point + cam.translation;
  if (x.z() <= kDepthEpsilon) return std::nullopt;
  return Projection{{intr.fx * x.x() / x.z() + intr.cx, intr.fy * x.y() / x.z() + intr.cy},
                    x.z()};
}

Eigen::Vector3d unproject(const CameraFrame& cam, const PinholeIntrinsics& intr,
                          const Eigen::Vector2d& pixel, double depth) {
  const Eigen::Vector3d x((pixel.x() - intr.cx) / intr.fx * depth,
                          (pixel.y() - intr.cy) / intr.fy * depth, depth);
  return cam.rotation.transpose() * (x - cam.translation);
}

Scene make_scene(const MotionWindow& motion, const SceneGenParams& p, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Vector2d lo(1e300, 1e300), hi(-1e300, -1e300);
  for (int i = 0; i < motion.frames(); ++i) {
    const Eigen::Vector3d tau = motion.translation(i);
    lo = lo.cwiseMin(tau.head<2>());
    hi = hi.cwiseMax(tau.head<2>());
  }
  lo.array() -= p.margin;
  hi.array() += p.margin;

  Scene scene;
  scene.points.resize(p.num_points, 3);
  const int ground = static_cast<int>(p.ground_fraction * p.num_points);
  for (int i = 0; i < p.num_points; ++i) {
    scene.points(i, 0) = rng.uniform(lo.x(), hi.x());
    scene.points(i, 1) = rng.uniform(lo.y(), hi.y());
    scene.points(i, 2) = (i < ground) ? 0.0 : rng.uniform(0.0, p.max_height);
  }
  scene.validate();
  return scene;
}

void anchor_world_to_first_camera(MotionWindow& motion, CameraTrajectory& cam, Scene& scene) {
  if (cam.size() < 1) throw ConfigError("anchor_world_to_first_camera: empty camera");
  const Eigen::Vector3d c0 = cam.frames[0].center();
  const Eigen::Vector3d shift(c0.x(), c0.y(), 0.0);
  for (int i = 0; i < motion.frames(); ++i) {
    motion.set_translation(i, motion.translation(i) - shift);
  }
  for (CameraFrame& f : cam.frames) {
    f.translation = -f.rotation * (f.center() - shift);
  }
  scene.points.rowwise() -= shift.transpose();
}

NoiseConfig NoiseConfig::moderate() {
  NoiseConfig cfg;
  cfg.pixel_sigma = 2.0;
  cfg.local3d_sigma = 0.02;
  cfg.orient_sigma = 0.02;
  cfg.drift_sigma = 0.004;
  cfg.rot_jitter_sigma = 0.0015;
  cfg.outlier_prob = 0.02;
  cfg.enable_occlusion = true;
  return cfg;
}

ObservationSet simulate_observations(const MotionWindow& motion, const Eigen::MatrixXd& contacts,
                                     const CameraTrajectory& cam, const Scene& scene,
                                     const NoiseConfig& cfg, std::uint64_t seed,
                                     const BodyModel& body) {
  const int frames = motion.frames();
  if (cam.size() != frames) throw ConfigError("simulate_observations: camera length mismatch");
  if (contacts.rows() != frames) throw ConfigError("simulate_observations: contacts mismatch");
  if (!(cfg.true_scale > 0.0)) throw ConfigError("simulate_observations: true_scale <= 0");
  Rng rng(seed);
  const int jobs = body.observed_joints();

  ObservationSet obs;
  obs.layout = motion.layout();
  obs.kp2d.resize(frames, 2 * jobs);
  obs.kp2d_conf.resize(frames, jobs);
  obs.local3d.resize(frames, 3 * jobs);
  obs.local_orient.resize(frames, 3);

  // Occlusion schedule: contiguous intervals drawn per sequence.
  Eigen::MatrixXd occluded = Eigen::MatrixXd::Zero(frames, jobs);
  if (cfg.enable_occlusion) {
    auto mask_interval = [&](int joint, double frac) {
      const int len = std::max(1, static_cast<int>(frac * frames));
      const int start = rng.uniform_int(0, std::max(0, frames - len));
      for (int i = start; i < std::min(frames, start + len); ++i) occluded(i, joint) = 1.0;
    };
    if (rng.uniform() < cfg.occlusion.lower_body_prob) {
      for (int k : {1, 2}) mask_interval(k, 0.3);  // both feet
    }
    if (rng.uniform() < cfg.occlusion.full_pose_prob) {
      for (int j = 1; j < jobs; ++j) mask_interval(j, 0.3);
    }
    if (rng.uniform() < cfg.occlusion.per_joint_event_prob) {
      for (int j = 0; j < jobs; ++j) {
        if (rng.uniform() < cfg.occlusion.per_joint_prob) mask_interval(j, rng.uniform(0.2, 0.4));
      }
    }
  }

  for (int i = 0; i < frames; ++i) {
    const auto joints = world_joints(motion, i, body, Eigen::Vector2d::Zero());
    for (int j = 0; j < jobs; ++j) {
      const bool occ = occluded(i, j) > 0.5;
      const bool outlier = cfg.outlier_prob > 0.0 && rng.uniform() < cfg.outlier_prob;

      const auto proj = try_project(cam.frames[i], cam.intrinsics, joints[j]);
      Eigen::Vector2d px = proj ? proj->pixel
                                : Eigen::Vector2d(cam.intrinsics.cx, cam.intrinsics.cy);
      Eigen::Vector2d noise(cfg.pixel_sigma * rng.gaussian(), cfg.pixel_sigma * rng.gaussian());
      if (occ) noise += Eigen::Vector2d(rng.gaussian(), rng.gaussian()) * 40.0;
      if (outlier) {
        noise += Eigen::Vector2d(rng.gaussian(), rng.gaussian()) * 120.0;
      }
      px += noise;

      double conf = 1.0;
      if (!proj || occ || outlier) {
        conf = 0.0;
      } else if (cfg.pixel_sigma > 0.0) {
        conf = std::max(0.0, 1.0 - std::min(1.0, noise.norm() / (5.0 * cfg.pixel_sigma)) * 0.5);
      }
      obs.kp2d(i, 2 * j) = px.x();
      obs.kp2d(i, 2 * j + 1) = px.y();
      obs.kp2d_conf(i, j) = conf;

      Eigen::Vector3d x_cam = cam.frames[i].rotation * joints[j] + cam.frames[i].translation;
      const double sigma3d = cfg.local3d_sigma * (occ ? 5.0 : 1.0);
      x_cam += sigma3d * rng.gaussian_vector(3);
      obs.local3d.block<1, 3>(i, 3 * j) = x_cam.transpose();
    }
    const Eigen::Matrix3d body_in_cam =
        cam.frames[i].rotation * rotvec_to_matrix(motion.orientation(i));
    Eigen::Matrix3d noisy = body_in_cam;
    if (cfg.orient_sigma > 0.0) {
      noisy = rotvec_to_matrix(cfg.orient_sigma * rng.gaussian_vector(3)) * body_in_cam;
    }
    obs.local_orient.row(i) = matrix_to_rotvec(noisy).transpose();
  }

  // SLAM simulation: express cameras relative to the first frame, divide the
  // translation by the true scale, add random-walk drift and rotation jitter.
  const Eigen::Matrix3d r1 = cam.frames[0].rotation;
  const Eigen::Vector3d t1 = cam.frames[0].translation;
  obs.cam_est.intrinsics = cam.intrinsics;
  obs.cam_est.frames.resize(frames);
  Eigen::Vector3d drift = Eigen::Vector3d::Zero();
  Eigen::Vector3d rot_walk = Eigen::Vector3d::Zero();
  for (int i = 0; i < frames; ++i) {
    const Eigen::Matrix3d r_slam = cam.frames[i].rotation * r1.transpose();
    const Eigen::Vector3d t_slam = cam.frames[i].translation - r_slam * t1;
    if (i > 0) {
      drift += cfg.drift_sigma * rng.gaussian_vector(3);
      rot_walk += cfg.rot_jitter_sigma * rng.gaussian_vector(3);
    }
    obs.cam_est.frames[i].rotation = orthonormalize(rotvec_to_matrix(rot_walk) * r_slam);
    obs.cam_est.frames[i].translation = t_slam / cfg.true_scale + drift;
  }

  obs.scene_est.points.resize(scene.points.rows(), 3);
  for (int i = 0; i < scene.points.rows(); ++i) {
    const Eigen::Vector3d p = scene.points.row(i).transpose();
    obs.scene_est.points.row(i) = ((r1 * p + t1) / cfg.true_scale).transpose();
  }

  // Ground-truth observability: a point is hidden in frame i when its
  // projection falls within the body's occlusion radius of a joint that is
  // closer to the camera.
  obs.point_occluded = Eigen::MatrixXd::Zero(frames, scene.points.rows());
  for (int i = 0; i < frames; ++i) {
    const auto joints = world_joints(motion, i, body, Eigen::Vector2d::Zero());
    std::vector<Eigen::Vector2d> joint_px(jobs);
    std::vector<double> joint_depth(jobs);
    bool ok = true;
    for (int j = 0; j < jobs; ++j) {
      const auto pr = try_project(cam.frames[i], cam.intrinsics, joints[j]);
      if (!pr) {
        ok = false;
        break;
      }
      joint_px[j] = pr->pixel;
      joint_depth[j] = pr->depth;
    }
    if (!ok) continue;
    const double r_occ = occlusion_radius(joint_px);
    for (int p = 0; p < scene.points.rows(); ++p) {
      int nearest = -1;
      const int ind = visibility_indicator(cam.frames[i], cam.intrinsics,
                                           scene.points.row(p).transpose(), joint_px, r_occ,
                                           &nearest);
      if (ind == 0) continue;
      const auto pr = try_project(cam.frames[i], cam.intrinsics, scene.points.row(p).transpose());
      if (pr && pr->depth > joint_depth[nearest]) obs.point_occluded(i, p) = nearest + 1.0;
    }
  }
  return obs;
}

MotionWithContacts observation_to_world_motion(const ObservationSet& obs, const BodyModel& body,
                                               double contact_speed, double scale) {
  const int frames = static_cast<int>(obs.local3d.rows());
  const int jobs = body.observed_joints();
  MotionWindow motion(frames, body.local_joints);
  std::vector<std::vector<Eigen::Vector3d>> world(frames,
                                                  std::vector<Eigen::Vector3d>(jobs));
  Eigen::Vector3d prev_phi = Eigen::Vector3d::Zero();
  for (int i = 0; i < frames; ++i) {
    const CameraFrame& f = obs.cam_est.frames[i];
    for (int j = 0; j < jobs; ++j) {
      world[i][j] = f.rotation.transpose() * (obs.camera_point(i, j) - scale * f.translation);
    }
    const Eigen::Vector3d tau = world[i][0];
    const Eigen::Matrix3d rot =
        f.rotation.transpose() * rotvec_to_matrix(obs.local_orient.row(i).transpose());
    const Eigen::Vector3d phi = unwrap_rotvec(prev_phi, matrix_to_rotvec(rot));
    prev_phi = phi;

    motion.set_translation(i, tau);
    motion.set_orientation(i, phi);
    for (int j = 0; j < body.local_joints; ++j) {
      motion.set_joint_displacement(
          i, j, rot.transpose() * (world[i][j + 1] - tau) - body.rest_offsets[j]);
    }
  }

  Eigen::MatrixXd contacts(frames, kContactCount);
  for (int i = 0; i < frames; ++i) {
    for (int k = 0; k < kContactCount; ++k) {
      const int foot = body.foot_indices[k] + 1;  // world index includes root
      const int a = std::max(i, 1);
      const double v = (world[a][foot] - world[a - 1][foot]).norm();
      contacts(i, k) = (v < contact_speed) ? 1.0 : 0.0;
      motion.set_contact_logit(i, k, contacts(i, k) > 0.5 ? 4.0 : -4.0);
    }
  }
  return {std::move(motion), std::move(contacts)};
}

double foot_slide_score(const ObservationSet& obs, const BodyModel& body, double scale,
                        double stance_fraction) {
  const int frames = static_cast<int>(obs.local3d.rows());
  std::vector<double> speeds;
  speeds.reserve(2 * (frames - 1));
  for (int foot = 0; foot < 2; ++foot) {
    const int j = foot + 1;  // world index after the root
    Eigen::Vector3d prev = Eigen::Vector3d::Zero();
    for (int i = 0; i < frames; ++i) {
      const CameraFrame& f = obs.cam_est.frames[i];
      const Eigen::Vector3d w =
          f.rotation.transpose() * (obs.camera_point(i, j) - scale * f.translation);
      if (i > 0) speeds.push_back((w - prev).norm());
      prev = w;
    }
  }
  std::sort(speeds.begin(), speeds.end());
  const size_t count = std::max<size_t>(1, static_cast<size_t>(stance_fraction * speeds.size()));
  double total = 0.0;
  for (size_t i = 0; i < count; ++i) total += speeds[i];
  return total / static_cast<double>(count);
}

double estimate_scale_by_foot_slide(const ObservationSet& obs, const BodyModel& body,
                                    double lo, double hi) {
  double best_s = 1.0;
  double best = 1e300;
  const int coarse = 80;
  for (int i = 0; i <= coarse; ++i) {
    const double s = std::exp(std::log(lo) + i * (std::log(hi) - std::log(lo)) / coarse);
    const double score = foot_slide_score(obs, body, s);
    if (score < best) {
      best = score;
      best_s = s;
    }
  }
  // Local refinement around the coarse winner.
  double span = best_s * 0.1;
  for (int round = 0; round < 3; ++round) {
    for (int i = -10; i <= 10; ++i) {
      const double s = best_s + span * i / 10.0;
      if (s <= 0.0) continue;
      const double score = foot_slide_score(obs, body, s);
      if (score < best) {
        best = score;
        best_s = s;
      }
    }
    span *= 0.2;
  }
  return best_s;
}

double occlusion_radius(const std::vector<Eigen::Vector2d>& joint_pixels) {
  double total = 0.0;
  int count = 0;
  for (size_t a = 0; a < joint_pixels.size(); ++a) {
    for (size_t b = a + 1; b < joint_pixels.size(); ++b) {
      total += (joint_pixels[a] - joint_pixels[b]).norm();
      ++count;
    }
  }
  if (count == 0) return 0.0;
  return 1.5 * total / count;
}

int visibility_indicator(const CameraFrame& cam, const PinholeIntrinsics& intr,
                         const Eigen::Vector3d& scene_point,
                         const std::vector<Eigen::Vector2d>& joint_pixels, double r_occ,
                         int* nearest_joint) {
  const auto proj = try_project(cam, intr, scene_point);
  if (!proj) return 0;
  double best = 1e300;
  int best_j = -1;
  for (size_t j = 0; j < joint_pixels.size(); ++j) {
    const double d = (proj->pixel - joint_pixels[j]).norm();
    if (d < best) {
      best = d;
      best_j = static_cast<int>(j);
    }
  }
  if (nearest_joint) *nearest_joint = best_j;
  return (best_j >= 0 && best <= r_occ) ? 1 : 0;
}

}  // namespace coin
