#include "coin/losses.hpp"

#include <cmath>

#include "coin/errors.hpp"
#include "coin/rotation.hpp"

namespace coin {

CameraVars CameraVars::identity(int frames) {
  CameraVars v;
  v.delta_rot = Eigen::MatrixXd::Zero(frames, 3);
  v.delta_trans = Eigen::MatrixXd::Zero(frames, 3);
  return v;
}

double CameraVars::scale() const { return std::exp(log_s); }

EffectiveCamera effective_camera(const CameraFrame& base, const CameraVars& vars, int frame) {
  EffectiveCamera eff;
  eff.s = vars.scale();
  eff.h0 = vars.h0;
  eff.delta_r = rotvec_to_matrix(vars.delta_rot.row(frame).transpose());
  eff.delta_t = vars.delta_trans.row(frame).transpose();
  eff.r_base = base.rotation;
  eff.t_base = base.translation;
  eff.r_eff = eff.delta_r * base.rotation * rotvec_to_matrix(vars.r0).transpose();
  eff.t_eff = eff.delta_r * (eff.s * base.translation) + eff.delta_t -
              eff.r_eff * (vars.h0 * Eigen::Vector3d::UnitZ());
  return eff;
}

VarGrads::VarGrads(const ChannelLayout& layout)
    : motion(Eigen::VectorXd::Zero(layout.total_dim())),
      delta_rot(Eigen::MatrixXd::Zero(layout.frames, 3)),
      delta_trans(Eigen::MatrixXd::Zero(layout.frames, 3)) {}

void VarGrads::add_scaled(const VarGrads& other, double scale) {
  motion += scale * other.motion;
  beta += scale * other.beta;
  log_s += scale * other.log_s;
  h0 += scale * other.h0;
  r0 += scale * other.r0;
  delta_rot += scale * other.delta_rot;
  delta_trans += scale * other.delta_trans;
}

double VarGrads::squared_norm() const {
  return motion.squaredNorm() + beta.squaredNorm() + log_s * log_s + h0 * h0 +
         r0.squaredNorm() + delta_rot.squaredNorm() + delta_trans.squaredNorm();
}

double LossBreakdown::total() const {
  return weights.l_2d * l_2d + weights.l_3d * l_3d + weights.l_beta * l_beta +
         weights.l_smooth * l_smooth + weights.l_contact * l_contact + weights.l_hsr * l_hsr +
         weights.l_coin_sds * l_coin_sds;
}

namespace {

struct FkFrame {
  Eigen::Vector3d tau;
  Eigen::Vector3d phi;
  Eigen::Matrix3d rot;
  std::vector<Eigen::Vector3d> local;  // scaled rest + theta, per local joint
  std::vector<Eigen::Vector3d> world;  // root first
};

FkFrame make_fk(const MotionWindow& motion, int frame, const BodyModel& body,
                const Eigen::Vector2d& beta) {
  FkFrame fk;
  fk.tau = motion.translation(frame);
  fk.phi = motion.orientation(frame);
  fk.rot = rotvec_to_matrix(fk.phi);
  fk.local.resize(body.local_joints);
  fk.world.resize(body.observed_joints());
  fk.world[0] = fk.tau;
  for (int j = 0; j < body.local_joints; ++j) {
    fk.local[j] = body.scaled_rest(j, beta) + motion.joint_displacement(frame, j);
    fk.world[j + 1] = fk.tau + fk.rot * fk.local[j];
  }
  return fk;
}

// Adds d(world point)/d(motion channels, beta) pulled back through g_world.
void accumulate_fk(const FkFrame& fk, const BodyModel& body, const ChannelLayout& layout,
                   int frame, int obs_joint, const Eigen::Vector3d& g_world, VarGrads* out) {
  out->motion.segment<3>(layout.tau(frame)) += g_world;
  if (obs_joint <= 0) return;
  const int j = obs_joint - 1;
  out->motion.segment<3>(layout.phi(frame)) +=
      rotate_jacobian(fk.phi, fk.local[j]).transpose() * g_world;
  const Eigen::Vector3d g_body = fk.rot.transpose() * g_world;
  out->motion.segment<3>(layout.theta(frame, j)) += g_body;
  const Eigen::Vector3d& r = body.rest_offsets[j];
  out->beta[0] += g_body.x() * r.x() + g_body.y() * r.y();
  out->beta[1] += g_body.z() * r.z();
}

// Adds d(x_cam)/d(camera vars) for a world point, pulled back through g_cam.
void accumulate_cam(const EffectiveCamera& eff, const CameraVars& vars, int frame,
                    const Eigen::Vector3d& world, const Eigen::Vector3d& g_cam,
                    VarGrads* out) {
  out->log_s += g_cam.dot(eff.delta_r * eff.t_base) * eff.s;
  out->h0 -= g_cam.dot(eff.r_eff * Eigen::Vector3d::UnitZ());
  const Eigen::Vector3d u = world - eff.h0 * Eigen::Vector3d::UnitZ();
  out->r0 += rotate_transpose_jacobian(vars.r0, u).transpose() *
             (eff.r_base.transpose() * (eff.delta_r.transpose() * g_cam));
  const Eigen::Vector3d pre =
      eff.r_base * (rotvec_to_matrix(vars.r0).transpose() * u) + eff.s * eff.t_base;
  out->delta_rot.row(frame) +=
      (rotate_jacobian(vars.delta_rot.row(frame).transpose(), pre).transpose() * g_cam)
          .transpose();
  out->delta_trans.row(frame) += g_cam.transpose();
}

// Same for a SLAM-frame scene point (scene scales with s; no r0/h0 terms).
void accumulate_scene_cam(const EffectiveCamera& eff, const CameraVars& vars, int frame,
                          const Eigen::Vector3d& slam_point, const Eigen::Vector3d& g_cam,
                          VarGrads* out) {
  const Eigen::Vector3d metric = eff.r_base * slam_point + eff.t_base;
  out->log_s += g_cam.dot(eff.delta_r * metric) * eff.s;
  out->delta_rot.row(frame) +=
      (rotate_jacobian(vars.delta_rot.row(frame).transpose(), eff.s * metric).transpose() *
       g_cam)
          .transpose();
  out->delta_trans.row(frame) += g_cam.transpose();
}

}  // namespace

LossResult loss_2d(const MotionWindow& motion, const Eigen::Vector2d& beta,
                   const BodyModel& body, const CameraTrajectory& cam_base,
                   const CameraVars& cam_vars, const Eigen::MatrixXd& kp2d,
                   const Eigen::MatrixXd& conf, double delta_px) {
  const int frames = motion.frames();
  if (cam_base.size() != frames || kp2d.rows() != frames || conf.rows() != frames) {
    throw ConfigError("loss_2d: frame count mismatch");
  }
  const PinholeIntrinsics& intr = cam_base.intrinsics;
  const double delta_n = delta_px / intr.fx;
  const double norm = static_cast<double>(frames) * body.observed_joints();

  LossResult res;
  res.grads = VarGrads(motion.layout());
  for (int i = 0; i < frames; ++i) {
    const EffectiveCamera eff = effective_camera(cam_base.frames[i], cam_vars, i);
    const FkFrame fk = make_fk(motion, i, body, beta);
    for (int j = 0; j < body.observed_joints(); ++j) {
      const double c = conf(i, j);
      if (c <= 0.0) continue;
      const Eigen::Vector3d x = eff.to_camera(fk.world[j]);
      if (x.z() <= kDepthEpsilon) {
        ++res.behind_camera;
        continue;
      }
      const Eigen::Vector2d px(intr.fx * x.x() / x.z() + intr.cx,
                               intr.fy * x.y() / x.z() + intr.cy);
      const Eigen::Vector2d e =
          (px - kp2d.block<1, 2>(i, 2 * j).transpose()) / intr.fx;
      const double r = e.norm();
      double value;
      Eigen::Vector2d de;
      if (r <= delta_n) {
        value = 0.5 * r * r;
        de = e;
      } else {
        value = delta_n * (r - 0.5 * delta_n);
        de = delta_n * e / r;
      }
      res.value += c * value / norm;

      const Eigen::Vector2d g_px = (c / norm) * de / intr.fx;
      Eigen::Matrix<double, 2, 3> dpx;
      dpx << intr.fx / x.z(), 0, -intr.fx * x.x() / (x.z() * x.z()), 0, intr.fy / x.z(),
          -intr.fy * x.y() / (x.z() * x.z());
      const Eigen::Vector3d g_cam = dpx.transpose() * g_px;
      accumulate_fk(fk, body, motion.layout(), i, j, eff.r_eff.transpose() * g_cam,
                    &res.grads);
      accumulate_cam(eff, cam_vars, i, fk.world[j], g_cam, &res.grads);
    }
  }
  return res;
}

LossResult loss_3d(const MotionWindow& motion, const Eigen::Vector2d& beta,
                   const BodyModel& body, const CameraTrajectory& cam_base,
                   const CameraVars& cam_vars, const Eigen::MatrixXd& local3d) {
  const int frames = motion.frames();
  if (cam_base.size() != frames || local3d.rows() != frames) {
    throw ConfigError("loss_3d: frame count mismatch");
  }
  const double norm = static_cast<double>(frames) * body.local_joints;

  LossResult res;
  res.grads = VarGrads(motion.layout());
  for (int i = 0; i < frames; ++i) {
    const EffectiveCamera eff = effective_camera(cam_base.frames[i], cam_vars, i);
    const FkFrame fk = make_fk(motion, i, body, beta);
    const Eigen::Vector3d root_cam = eff.to_camera(fk.world[0]);
    const Eigen::Vector3d obs_root = local3d.block<1, 3>(i, 0).transpose();
    for (int j = 1; j < body.observed_joints(); ++j) {
      const Eigen::Vector3d model_rel = eff.to_camera(fk.world[j]) - root_cam;
      const Eigen::Vector3d obs_rel = local3d.block<1, 3>(i, 3 * j).transpose() - obs_root;
      const Eigen::Vector3d d = model_rel - obs_rel;
      res.value += d.squaredNorm() / norm;
      const Eigen::Vector3d g = 2.0 * d / norm;
      accumulate_fk(fk, body, motion.layout(), i, j, eff.r_eff.transpose() * g, &res.grads);
      accumulate_cam(eff, cam_vars, i, fk.world[j], g, &res.grads);
      accumulate_fk(fk, body, motion.layout(), i, 0, -(eff.r_eff.transpose() * g),
                    &res.grads);
      accumulate_cam(eff, cam_vars, i, fk.world[0], -g, &res.grads);
    }
  }
  return res;
}

LossResult loss_smooth(const MotionWindow& motion, const Eigen::Vector2d& beta,
                       const BodyModel& body) {
  const int frames = motion.frames();
  if (frames < 3) throw ConfigError("loss_smooth: needs at least 3 frames");
  const ChannelLayout& layout = motion.layout();
  const double norm = static_cast<double>(frames - 2) * (body.observed_joints() + 2);

  std::vector<FkFrame> fk(frames);
  for (int i = 0; i < frames; ++i) fk[i] = make_fk(motion, i, body, beta);

  LossResult res;
  res.grads = VarGrads(layout);
  for (int i = 1; i + 1 < frames; ++i) {
    for (int j = 0; j < body.observed_joints(); ++j) {
      const Eigen::Vector3d d = fk[i + 1].world[j] - 2.0 * fk[i].world[j] + fk[i - 1].world[j];
      res.value += d.squaredNorm() / norm;
      const Eigen::Vector3d g = 2.0 * d / norm;
      accumulate_fk(fk[i + 1], body, layout, i + 1, j, g, &res.grads);
      accumulate_fk(fk[i], body, layout, i, j, -2.0 * g, &res.grads);
      accumulate_fk(fk[i - 1], body, layout, i - 1, j, g, &res.grads);
    }
    const Eigen::Vector3d dt = fk[i + 1].tau - 2.0 * fk[i].tau + fk[i - 1].tau;
    res.value += dt.squaredNorm() / norm;
    res.grads.motion.segment<3>(layout.tau(i + 1)) += 2.0 * dt / norm;
    res.grads.motion.segment<3>(layout.tau(i)) -= 4.0 * dt / norm;
    res.grads.motion.segment<3>(layout.tau(i - 1)) += 2.0 * dt / norm;
    const Eigen::Vector3d dp = fk[i + 1].phi - 2.0 * fk[i].phi + fk[i - 1].phi;
    res.value += dp.squaredNorm() / norm;
    res.grads.motion.segment<3>(layout.phi(i + 1)) += 2.0 * dp / norm;
    res.grads.motion.segment<3>(layout.phi(i)) -= 4.0 * dp / norm;
    res.grads.motion.segment<3>(layout.phi(i - 1)) += 2.0 * dp / norm;
  }
  return res;
}

LossResult loss_contact(const MotionWindow& motion, const Eigen::Vector2d& beta,
                        const BodyModel& body, const Eigen::MatrixXd& labels) {
  const int frames = motion.frames();
  if (labels.rows() != frames || labels.cols() != kContactCount) {
    throw ConfigError("loss_contact: label shape mismatch");
  }
  const double norm = static_cast<double>(frames - 1) * kContactCount;

  std::vector<FkFrame> fk(frames);
  for (int i = 0; i < frames; ++i) fk[i] = make_fk(motion, i, body, beta);

  LossResult res;
  res.grads = VarGrads(motion.layout());
  for (int i = 1; i < frames; ++i) {
    for (int k = 0; k < kContactCount; ++k) {
      const double c = labels(i, k);
      if (c <= 0.0) continue;
      const int joint = body.foot_indices[k] + 1;
      const Eigen::Vector3d d = fk[i].world[joint] - fk[i - 1].world[joint];
      res.value += c * d.squaredNorm() / norm;
      const Eigen::Vector3d g = 2.0 * c * d / norm;
      accumulate_fk(fk[i], body, motion.layout(), i, joint, g, &res.grads);
      accumulate_fk(fk[i - 1], body, motion.layout(), i - 1, joint, -g, &res.grads);
    }
  }
  return res;
}

LossResult loss_beta(const Eigen::Vector2d& beta, const ChannelLayout& layout) {
  LossResult res;
  res.grads = VarGrads(layout);
  res.value = beta.squaredNorm();
  res.grads.beta = 2.0 * beta;
  return res;
}

std::vector<HsrTerm> build_hsr_assignment(const MotionWindow& motion,
                                          const Eigen::Vector2d& beta, const BodyModel& body,
                                          const CameraTrajectory& cam_base,
                                          const CameraVars& cam_vars, const Scene& scene_est,
                                          const Eigen::MatrixXd& point_occluded) {
  const int frames = motion.frames();
  if (point_occluded.rows() != frames || point_occluded.cols() != scene_est.size()) {
    throw ConfigError("build_hsr_assignment: occlusion flag shape mismatch");
  }
  const PinholeIntrinsics& intr = cam_base.intrinsics;
  std::vector<HsrTerm> terms;
  for (int i = 0; i < frames; ++i) {
    const EffectiveCamera eff = effective_camera(cam_base.frames[i], cam_vars, i);
    const FkFrame fk = make_fk(motion, i, body, beta);
    std::vector<Eigen::Vector2d> joint_px(body.observed_joints());
    bool ok = true;
    for (int j = 0; j < body.observed_joints(); ++j) {
      const Eigen::Vector3d x = eff.to_camera(fk.world[j]);
      if (x.z() <= kDepthEpsilon) {
        ok = false;
        break;
      }
      joint_px[j] = {intr.fx * x.x() / x.z() + intr.cx, intr.fy * x.y() / x.z() + intr.cy};
    }
    if (!ok) continue;
    const double r_occ = occlusion_radius(joint_px);
    for (int p = 0; p < scene_est.size(); ++p) {
      if (point_occluded(i, p) < 0.5) continue;
      const Eigen::Vector3d x = eff.scene_to_camera(scene_est.points.row(p).transpose());
      if (x.z() <= kDepthEpsilon) continue;
      const Eigen::Vector2d px(intr.fx * x.x() / x.z() + intr.cx,
                               intr.fy * x.y() / x.z() + intr.cy);
      double best = 1e300;
      for (const Eigen::Vector2d& jp : joint_px) best = std::min(best, (px - jp).norm());
      if (best > r_occ) continue;
      // Depth comparisons use the joint recorded with the occlusion event;
      // with a sparse joint set, re-picking the nearest joint at the current
      // estimate shifts the depth margin by the body's own depth extent.
      const int joint = static_cast<int>(point_occluded(i, p)) - 1;
      terms.push_back({i, p, joint});
    }
  }
  return terms;
}

LossResult loss_hsr(const MotionWindow& motion, const Eigen::Vector2d& beta,
                    const BodyModel& body, const CameraTrajectory& cam_base,
                    const CameraVars& cam_vars, const Scene& scene_est,
                    const std::vector<HsrTerm>& terms, double margin) {
  LossResult res;
  res.grads = VarGrads(motion.layout());
  if (scene_est.size() < 1) throw ConfigError("loss_hsr: empty scene");
  const double norm = static_cast<double>(scene_est.size());

  int last_frame = -1;
  EffectiveCamera eff;
  FkFrame fk;
  for (const HsrTerm& term : terms) {
    if (term.frame != last_frame) {
      eff = effective_camera(cam_base.frames[term.frame], cam_vars, term.frame);
      fk = make_fk(motion, term.frame, body, beta);
      last_frame = term.frame;
    }
    const Eigen::Vector3d slam_point = scene_est.points.row(term.point).transpose();
    const double t_z = eff.scene_to_camera(slam_point).z();
    const double j_z = eff.to_camera(fk.world[term.joint]).z();
    const double violation = j_z - t_z - margin;
    if (violation <= 0.0) continue;
    res.value += violation / norm;

    const Eigen::Vector3d g_z(0, 0, 1.0 / norm);
    accumulate_fk(fk, body, motion.layout(), term.frame, term.joint,
                  eff.r_eff.transpose() * g_z, &res.grads);
    accumulate_cam(eff, cam_vars, term.frame, fk.world[term.joint], g_z, &res.grads);
    accumulate_scene_cam(eff, cam_vars, term.frame, slam_point, -g_z, &res.grads);
  }
  return res;
}

}  // namespace coin
