#include "coin/optimizer.hpp"

#include <cmath>
#include <future>
#include <optional>

#include "coin/errors.hpp"
#include "coin/rotation.hpp"

namespace coin {

std::array<StageConfig, 3> StageConfig::standard() {
  std::array<StageConfig, 3> stages;
  stages[0] = {1, 500, 0.01, false, false, true, 1.0};
  stages[1] = {2, 500, 0.01, true, false, false, 0.5};
  stages[2] = {3, 500, 0.001, true, true, false, 0.02};
  return stages;
}

Adam::Adam(int dim, double lr, const AdamParams& params)
    : lr_(lr), p_(params), m_(Eigen::ArrayXd::Zero(dim)), v_(Eigen::ArrayXd::Zero(dim)) {}

void Adam::step(Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                const Eigen::ArrayXd& unlocked) {
  ++t_;
  const Eigen::ArrayXd g = grad.array() * unlocked;
  m_ = p_.beta1 * m_ + (1.0 - p_.beta1) * g;
  v_ = p_.beta2 * v_ + (1.0 - p_.beta2) * g.square();
  const double c1 = 1.0 - std::pow(p_.beta1, t_);
  const double c2 = 1.0 - std::pow(p_.beta2, t_);
  const Eigen::ArrayXd update = lr_ * (m_ / c1) / ((v_ / c2).sqrt() + p_.epsilon);
  x.array() -= update * unlocked;
}

Eigen::VectorXd pack_variables(const OptVariables& vars) {
  const int d = vars.motion.dim();
  const int t = vars.motion.frames();
  Eigen::VectorXd v(d + 2 + 1 + 1 + 3 + 6 * t);
  int at = 0;
  v.segment(at, d) = vars.motion.flat();
  at += d;
  v.segment<2>(at) = vars.beta;
  at += 2;
  v[at++] = vars.cam.log_s;
  v[at++] = vars.cam.h0;
  v.segment<3>(at) = vars.cam.r0;
  at += 3;
  for (int i = 0; i < t; ++i) v.segment<3>(at + 3 * i) = vars.cam.delta_rot.row(i).transpose();
  at += 3 * t;
  for (int i = 0; i < t; ++i) {
    v.segment<3>(at + 3 * i) = vars.cam.delta_trans.row(i).transpose();
  }
  return v;
}

OptVariables unpack_variables(const Eigen::VectorXd& v, const ChannelLayout& layout) {
  OptVariables vars{MotionWindow(layout.frames, layout.local_joints), Eigen::Vector2d::Zero(),
                    CameraVars::identity(layout.frames)};
  const int d = layout.total_dim();
  const int t = layout.frames;
  int at = 0;
  vars.motion.flat() = v.segment(at, d);
  at += d;
  vars.beta = v.segment<2>(at);
  at += 2;
  vars.cam.log_s = v[at++];
  vars.cam.h0 = v[at++];
  vars.cam.r0 = v.segment<3>(at);
  at += 3;
  for (int i = 0; i < t; ++i) vars.cam.delta_rot.row(i) = v.segment<3>(at + 3 * i).transpose();
  at += 3 * t;
  for (int i = 0; i < t; ++i) {
    vars.cam.delta_trans.row(i) = v.segment<3>(at + 3 * i).transpose();
  }
  return vars;
}

Eigen::VectorXd pack_gradients(const VarGrads& grads, int frames) {
  const int d = static_cast<int>(grads.motion.size());
  Eigen::VectorXd v(d + 2 + 1 + 1 + 3 + 6 * frames);
  int at = 0;
  v.segment(at, d) = grads.motion;
  at += d;
  v.segment<2>(at) = grads.beta;
  at += 2;
  v[at++] = grads.log_s;
  v[at++] = grads.h0;
  v.segment<3>(at) = grads.r0;
  at += 3;
  for (int i = 0; i < frames; ++i) v.segment<3>(at + 3 * i) = grads.delta_rot.row(i).transpose();
  at += 3 * frames;
  for (int i = 0; i < frames; ++i) {
    v.segment<3>(at + 3 * i) = grads.delta_trans.row(i).transpose();
  }
  return v;
}

namespace {

Eigen::ArrayXd unlock_mask(const ChannelLayout& layout, const StageConfig& stage) {
  const int d = layout.total_dim();
  const int t = layout.frames;
  Eigen::ArrayXd mask = Eigen::ArrayXd::Zero(d + 2 + 1 + 1 + 3 + 6 * t);
  mask.segment(0, d) = stage.unlock_motion ? 1.0 : 0.0;
  mask.segment(d, 2 + 1 + 1 + 3).setOnes();  // beta, log_s, h0, r0
  mask.segment(d + 7, 6 * t) = stage.unlock_camera_deltas ? 1.0 : 0.0;
  return mask;
}

double governing_confidence(const ObservationSet& obs, const BodyModel& body, int frame,
                            int channel_kind, int joint_or_axis) {
  // channel_kind: 0 trajectory, 1 pose joint, 2 contact logit.
  switch (channel_kind) {
    case 1:
      return obs.kp2d_conf(frame, joint_or_axis + 1);
    case 2:
      return obs.kp2d_conf(frame, body.foot_indices[joint_or_axis] + 1);
    default:
      return obs.kp2d_conf.row(frame).mean();
  }
}

}  // namespace

SoftMask build_mask(const ObservationSet& obs, const WindowPlan& plan, const BodyModel& body) {
  const ChannelLayout& layout = obs.layout;
  SoftMask sm;
  sm.mask = Eigen::VectorXd::Zero(layout.total_dim());
  sm.confidence = Eigen::VectorXd::Zero(layout.total_dim());
  for (int i = 0; i < layout.frames; ++i) {
    const double traj_conf = governing_confidence(obs, body, i, 0, 0);
    for (int a = 0; a < 3; ++a) {
      sm.confidence[layout.tau(i, a)] = traj_conf;
      sm.confidence[layout.phi(i, a)] = traj_conf;
      sm.mask[layout.tau(i, a)] = traj_conf >= plan.mask_threshold ? 1.0 : 0.0;
      sm.mask[layout.phi(i, a)] = traj_conf >= plan.mask_threshold ? 1.0 : 0.0;
    }
    for (int j = 0; j < layout.local_joints; ++j) {
      const double c = governing_confidence(obs, body, i, 1, j);
      for (int a = 0; a < 3; ++a) {
        sm.confidence[layout.theta(i, j, a)] = c;
        sm.mask[layout.theta(i, j, a)] = c >= plan.mask_threshold ? 1.0 : 0.0;
      }
    }
    for (int k = 0; k < kContactCount; ++k) {
      const double c = governing_confidence(obs, body, i, 2, k);
      sm.confidence[layout.contact(i, k)] = c;
      sm.mask[layout.contact(i, k)] = c >= plan.mask_threshold ? 1.0 : 0.0;
    }
  }
  return sm;
}

GmmPrior window_prior(const GmmPrior& prior, int frames) {
  if (!prior.layout()) throw ConfigError("window_prior: prior has no window layout");
  const ChannelLayout full = *prior.layout();
  if (frames == full.frames) return prior;
  if (frames > full.frames) {
    throw ConfigError("window_prior: window longer than the prior supports");
  }
  const ChannelLayout target{frames, full.local_joints};
  std::vector<int> keep(target.total_dim());
  for (int i = 0; i < target.total_dim(); ++i) keep[i] = i;  // leading frames
  GmmPrior marg = prior.marginal(keep);
  // Re-attach the shortened layout.
  std::vector<Eigen::VectorXd> means(marg.components());
  std::vector<Eigen::MatrixXd> covs(marg.components());
  for (int k = 0; k < marg.components(); ++k) {
    means[k] = marg.mean(k);
    covs[k] = marg.covariance(k);
  }
  return GmmPrior(target, marg.weights(), std::move(means), std::move(covs));
}

WorldLift estimate_world_lift(const MotionWindow& slam_motion, const BodyModel& body) {
  const int frames = slam_motion.frames();
  Eigen::Vector3d up = Eigen::Vector3d::Zero();
  for (int i = 0; i < frames; ++i) {
    up += rotvec_to_matrix(slam_motion.orientation(i)) * Eigen::Vector3d::UnitZ();
  }
  up.normalize();

  WorldLift lift;
  const Eigen::Vector3d axis_raw = up.cross(Eigen::Vector3d::UnitZ());
  const double sin_a = axis_raw.norm();
  const double cos_a = up.dot(Eigen::Vector3d::UnitZ());
  if (sin_a > 1e-12) {
    lift.r0 = rotvec_to_matrix(axis_raw.normalized() * std::atan2(sin_a, cos_a));
  } else if (cos_a < 0.0) {
    lift.r0 = rotvec_to_matrix(Eigen::Vector3d(M_PI, 0, 0));
  }

  // Ground the feet: lowest decile of rotated foot heights sits at z = 0.
  std::vector<double> foot_z;
  for (int i = 0; i < frames; ++i) {
    const Eigen::Vector3d tau = lift.r0 * slam_motion.translation(i);
    const Eigen::Matrix3d rot = lift.r0 * rotvec_to_matrix(slam_motion.orientation(i));
    for (int f = 0; f < 2; ++f) {
      const Eigen::Vector3d foot =
          tau + rot * (body.rest_offsets[f] + slam_motion.joint_displacement(i, f));
      foot_z.push_back(foot.z());
    }
  }
  std::sort(foot_z.begin(), foot_z.end());
  lift.h0 = -foot_z[foot_z.size() / 10];
  return lift;
}

MotionWindow apply_world_lift(const MotionWindow& slam_motion, const WorldLift& lift) {
  MotionWindow out = slam_motion;
  Eigen::Vector3d prev = Eigen::Vector3d::Zero();
  for (int i = 0; i < slam_motion.frames(); ++i) {
    out.set_translation(i, lift.r0 * slam_motion.translation(i) +
                               Eigen::Vector3d(0, 0, lift.h0));
    const Eigen::Matrix3d rot = lift.r0 * rotvec_to_matrix(slam_motion.orientation(i));
    Eigen::Vector3d phi = matrix_to_rotvec(rot);
    const double angle = phi.norm();
    if (angle > 1e-12) {
      const Eigen::Vector3d alt = phi * ((angle - 2.0 * M_PI) / angle);
      if ((alt - prev).squaredNorm() < (phi - prev).squaredNorm()) phi = alt;
    }
    prev = phi;
    out.set_orientation(i, phi);
  }
  return out;
}

OptVariables initialize(const ObservationSet& obs, const GmmPrior& prior,
                        const DiffusionSchedule& schedule, std::uint64_t seed,
                        const InitOptions& options) {
  const BodyModel body = BodyModel::standard();
  const int frames = obs.layout.frames;
  const GmmPrior wprior = window_prior(prior, frames);

  const double s0 = options.prefit_scale ? estimate_scale_by_foot_slide(obs, body) : 1.0;
  const MotionWithContacts converted = observation_to_world_motion(obs, body, 0.02, s0);
  const WorldLift lift = estimate_world_lift(converted.motion, body);
  const MotionWindow lifted = apply_world_lift(converted.motion, lift);

  ControlSignal ctrl;
  ctrl.values = lifted.flat();
  ctrl.mask = build_mask(obs, WindowPlan{}, body).mask;
  ctrl.obs_noise_sigma = default_obs_sigma(obs.layout, options.obs_noise);

  const GmmPrior conditioned = condition_prior(wprior, ctrl);
  Rng rng(seed);
  Eigen::VectorXd draw;
  if (options.ddpm_chain) {
    const GmmDenoiser denoiser(conditioned, std::make_shared<DiffusionSchedule>(schedule));
    draw = ddpm_sample_chain(denoiser, schedule, options.ddpm_steps, rng);
  } else {
    draw = conditioned.sample(rng);
  }

  OptVariables vars{MotionWindow::from_flat(obs.layout, draw), Eigen::Vector2d::Zero(),
                    CameraVars::identity(frames)};
  vars.cam.log_s = std::log(s0);
  vars.cam.r0 = matrix_to_rotvec(lift.r0);
  vars.cam.h0 = lift.h0;
  return vars;
}

WindowProblem make_window_problem(const ObservationSet& obs, const GmmPrior& prior,
                                  std::shared_ptr<const DiffusionSchedule> schedule,
                                  const WindowPlan& plan, const LossWeights& weights,
                                  const SdsConfig& sds, const InitOptions& init_options) {
  WindowProblem problem;
  problem.obs = obs;
  problem.prior = window_prior(prior, obs.layout.frames);
  problem.schedule = std::move(schedule);
  problem.soft_mask = build_mask(obs, plan, problem.body);
  problem.obs_sigma = default_obs_sigma(obs.layout, init_options.obs_noise);
  const double s0 =
      init_options.prefit_scale ? estimate_scale_by_foot_slide(obs, problem.body) : 1.0;
  const MotionWithContacts converted =
      observation_to_world_motion(obs, problem.body, 0.02, s0);
  const WorldLift lift = estimate_world_lift(converted.motion, problem.body);
  problem.init_control = apply_world_lift(converted.motion, lift).flat();
  problem.weights = weights;
  problem.sds = sds;
  return problem;
}

namespace {

Eigen::MatrixXd contact_labels_from(const MotionWindow& pseudo_gt) {
  Eigen::MatrixXd labels(pseudo_gt.frames(), kContactCount);
  for (int i = 0; i < pseudo_gt.frames(); ++i) {
    for (int k = 0; k < kContactCount; ++k) {
      labels(i, k) = pseudo_gt.contact_probability(i, k) > 0.5 ? 1.0 : 0.0;
    }
  }
  return labels;
}

}  // namespace

OptVariables run_stage(const WindowProblem& problem, OptVariables vars,
                       const StageConfig& stage, Rng& rng, std::vector<TraceRow>* trace) {
  const ChannelLayout layout = vars.motion.layout();
  const int frames = layout.frames;
  const int dim = layout.total_dim();

  std::optional<PriorConditioner> conditioner;
  if (!problem.ablation.no_control && !problem.soft_mask.mask.isZero()) {
    conditioner.emplace(problem.prior, problem.soft_mask.mask, problem.obs_sigma);
  }

  if (stage.scale_line_search) {
    // Probe with the deterministic converted control rather than the drawn
    // motion; the draw's trajectory jitter otherwise biases the best scale.
    OptVariables probe_base = vars;
    probe_base.motion = MotionWindow::from_flat(layout, problem.init_control);
    auto data_terms = [&](const OptVariables& v) {
      double total = 0.0;
      total += problem.weights.l_2d *
               loss_2d(v.motion, v.beta, problem.body, problem.obs.cam_est, v.cam,
                       problem.obs.kp2d, problem.obs.kp2d_conf)
                   .value;
      total += problem.weights.l_3d *
               loss_3d(v.motion, v.beta, problem.body, problem.obs.cam_est, v.cam,
                       problem.obs.local3d)
                   .value;
      if (!problem.ablation.no_hsr && problem.weights.l_hsr > 0.0) {
        const auto terms =
            build_hsr_assignment(v.motion, v.beta, problem.body, problem.obs.cam_est, v.cam,
                                 problem.obs.scene_est, problem.obs.point_occluded);
        total += problem.weights.l_hsr * loss_hsr(v.motion, v.beta, problem.body,
                                                  problem.obs.cam_est, v.cam,
                                                  problem.obs.scene_est, terms,
                                                  problem.hsr_margin)
                                             .value;
      }
      return total;
    };
    double best = 1e300;
    double best_log_s = vars.cam.log_s;
    for (int i = 0; i <= 40; ++i) {
      OptVariables probe = probe_base;
      probe.cam.log_s = std::log(0.2) + i * (std::log(5.0) - std::log(0.2)) / 40.0;
      const double value = data_terms(probe);
      if (value < best) {
        best = value;
        best_log_s = probe.cam.log_s;
      }
    }
    double span = 0.08;
    for (int round = 0; round < 3; ++round) {
      const double center = best_log_s;
      for (int i = -8; i <= 8; ++i) {
        OptVariables probe = probe_base;
        probe.cam.log_s = center + span * i / 8.0;
        const double value = data_terms(probe);
        if (value < best) {
          best = value;
          best_log_s = probe.cam.log_s;
        }
      }
      span *= 0.2;
    }
    vars.cam.log_s = best_log_s;
  }

  Eigen::VectorXd packed = pack_variables(vars);
  const Eigen::ArrayXd unlocked = unlock_mask(layout, stage);
  Adam adam(static_cast<int>(packed.size()), stage.learning_rate);

  const InpaintMode inpaint =
      problem.ablation.no_soft_inpaint ? InpaintMode::kOff : InpaintMode::kSoft;

  for (int iter = 0; iter < stage.steps; ++iter) {
    vars = unpack_variables(packed, layout);
    const Eigen::VectorXd h = vars.motion.flat();

    // Pseudo ground truth with fresh (t, eps).
    const double t = rng.uniform(problem.sds.t_min, problem.sds.t_max);
    const Eigen::VectorXd eps = rng.gaussian_vector(dim);
    Eigen::VectorXd h0_tilde;
    if (problem.pseudo_gt == PseudoGtKind::kCoin) {
      const Eigen::VectorXd control =
          problem.ablation.no_dynamic_control ? problem.init_control : h;
      if (!control.allFinite()) throw NumericError("run_stage: non-finite control state");
      GmmPrior denoise_prior =
          conditioner ? conditioner->condition(control) : problem.prior;
      const GmmDenoiser denoiser(std::move(denoise_prior), problem.schedule);
      h0_tilde =
          coin_denoise(denoiser, *problem.schedule, h, problem.soft_mask, problem.sds, t, eps,
                       inpaint);
    } else {
      const Eigen::VectorXd h_t = forward_sample(h, t, eps, *problem.schedule);
      h0_tilde = denoise_exact(problem.prior, h_t, t, *problem.schedule).h0_hat;
    }

    const Eigen::MatrixXd labels =
        contact_labels_from(MotionWindow::from_flat(layout, h0_tilde));

    // Losses and gradients.
    VarGrads total(layout);
    LossBreakdown breakdown;
    breakdown.weights = problem.weights;

    const LossResult l2d =
        loss_2d(vars.motion, vars.beta, problem.body, problem.obs.cam_est, vars.cam,
                problem.obs.kp2d, problem.obs.kp2d_conf);
    breakdown.l_2d = l2d.value;
    total.add_scaled(l2d.grads, problem.weights.l_2d);

    const LossResult l3d = loss_3d(vars.motion, vars.beta, problem.body, problem.obs.cam_est,
                                   vars.cam, problem.obs.local3d);
    breakdown.l_3d = l3d.value;
    total.add_scaled(l3d.grads, problem.weights.l_3d);

    const LossResult lb = loss_beta(vars.beta, layout);
    breakdown.l_beta = lb.value;
    total.add_scaled(lb.grads, problem.weights.l_beta);

    const LossResult ls = loss_smooth(vars.motion, vars.beta, problem.body);
    breakdown.l_smooth = ls.value;
    total.add_scaled(ls.grads, problem.weights.l_smooth);

    const LossResult lc = loss_contact(vars.motion, vars.beta, problem.body, labels);
    breakdown.l_contact = lc.value;
    total.add_scaled(lc.grads, problem.weights.l_contact);

    if (!problem.ablation.no_hsr && problem.weights.l_hsr > 0.0) {
      const auto terms =
          build_hsr_assignment(vars.motion, vars.beta, problem.body, problem.obs.cam_est,
                               vars.cam, problem.obs.scene_est, problem.obs.point_occluded);
      const LossResult lh = loss_hsr(vars.motion, vars.beta, problem.body, problem.obs.cam_est,
                                     vars.cam, problem.obs.scene_est, terms,
                                     problem.hsr_margin);
      breakdown.l_hsr = lh.value;
      total.add_scaled(lh.grads, problem.weights.l_hsr);
    }

    const SdsLossGrad sds =
        coin_sds_loss_grad(h, h0_tilde, t, problem.sds, *problem.schedule);
    breakdown.l_coin_sds = sds.loss;
    total.motion += stage.sds_scale * problem.weights.l_coin_sds * sds.grad;

    if (!std::isfinite(breakdown.total())) {
      throw NumericError("run_stage: non-finite loss at stage " + std::to_string(stage.id) +
                         " iteration " + std::to_string(iter));
    }
    if (trace) {
      trace->push_back({problem.window_index, stage.id, iter, t, breakdown});
    }

    adam.step(packed, pack_gradients(total, frames), unlocked);

    // Keep the first-frame orientation correction canonical (<= pi).
    Eigen::Vector3d r0 = packed.segment<3>(dim + 4);
    const double angle = r0.norm();
    if (angle > M_PI) {
      packed.segment<3>(dim + 4) = r0 * ((angle - 2.0 * M_PI) / angle);
    }
  }
  return unpack_variables(packed, layout);
}

std::vector<WindowSpan> plan_windows(int frames, const WindowPlan& plan) {
  if (frames < 2) throw ConfigError("plan_windows: needs at least 2 frames");
  if (plan.overlap >= plan.window) throw ConfigError("plan_windows: overlap >= window");
  std::vector<WindowSpan> spans;
  if (frames <= plan.window) {
    spans.push_back({0, frames});
    return spans;
  }
  const int step = plan.window - plan.overlap;
  int begin = 0;
  while (true) {
    if (begin + plan.window >= frames) {
      spans.push_back({frames - plan.window, plan.window});
      break;
    }
    spans.push_back({begin, plan.window});
    begin += step;
  }
  return spans;
}

namespace {

double fade_weight(int index, int begin, int overlap_len) {
  if (overlap_len <= 1) return 0.5;
  return static_cast<double>(index - begin) / (overlap_len - 1);
}

}  // namespace

MotionWindow stitch_motion(const std::vector<MotionWindow>& pieces,
                           const std::vector<WindowSpan>& spans, int frames) {
  if (pieces.size() != spans.size() || pieces.empty()) {
    throw ConfigError("stitch_motion: piece count mismatch");
  }
  const ChannelLayout layout{frames, pieces[0].local_joints()};
  MotionWindow out(frames, pieces[0].local_joints());

  // Lay down pieces in order; cross-fade inside overlaps with the previous.
  int covered_end = 0;
  for (size_t w = 0; w < pieces.size(); ++w) {
    const WindowSpan& span = spans[w];
    const MotionWindow& piece = pieces[w];
    const int fade_begin = std::max(span.begin, 0);
    const int overlap_end = std::min(covered_end, span.begin + span.length);
    for (int i = span.begin; i < span.begin + span.length; ++i) {
      const int local = i - span.begin;
      if (i >= overlap_end) {  // virgin territory: copy
        out.set_translation(i, piece.translation(local));
        out.set_orientation(i, piece.orientation(local));
        for (int j = 0; j < out.local_joints(); ++j) {
          out.set_joint_displacement(i, j, piece.joint_displacement(local, j));
        }
        for (int k = 0; k < kContactCount; ++k) {
          out.set_contact_logit(i, k, piece.contact_logit(local, k));
        }
      } else {  // cross-fade with what is already there
        const double u = fade_weight(i, fade_begin, overlap_end - fade_begin);
        out.set_translation(i,
                            (1.0 - u) * out.translation(i) + u * piece.translation(local));
        out.set_orientation(i, slerp_rotvec(out.orientation(i), piece.orientation(local), u));
        for (int j = 0; j < out.local_joints(); ++j) {
          out.set_joint_displacement(i, j,
                                     (1.0 - u) * out.joint_displacement(i, j) +
                                         u * piece.joint_displacement(local, j));
        }
        for (int k = 0; k < kContactCount; ++k) {
          out.set_contact_logit(
              i, k, (1.0 - u) * out.contact_logit(i, k) + u * piece.contact_logit(local, k));
        }
      }
    }
    covered_end = span.begin + span.length;
  }
  (void)layout;
  return out;
}

CameraTrajectory stitch_camera(const std::vector<CameraTrajectory>& pieces,
                               const std::vector<WindowSpan>& spans, int frames) {
  if (pieces.size() != spans.size() || pieces.empty()) {
    throw ConfigError("stitch_camera: piece count mismatch");
  }
  CameraTrajectory out;
  out.intrinsics = pieces[0].intrinsics;
  out.frames.resize(frames);
  int covered_end = 0;
  for (size_t w = 0; w < pieces.size(); ++w) {
    const WindowSpan& span = spans[w];
    const int overlap_end = std::min(covered_end, span.begin + span.length);
    for (int i = span.begin; i < span.begin + span.length; ++i) {
      const int local = i - span.begin;
      const CameraFrame& piece = pieces[w].frames[local];
      if (i >= overlap_end) {
        out.frames[i] = piece;
      } else {
        const double u = fade_weight(i, span.begin, overlap_end - span.begin);
        const Eigen::Vector3d rv_a = matrix_to_rotvec(out.frames[i].rotation);
        const Eigen::Vector3d rv_b = matrix_to_rotvec(piece.rotation);
        const Eigen::Matrix3d rot = rotvec_to_matrix(slerp_rotvec(rv_a, rv_b, u));
        const Eigen::Vector3d center =
            (1.0 - u) * out.frames[i].center() + u * piece.center();
        out.frames[i].rotation = rot;
        out.frames[i].translation = -rot * center;
      }
    }
    covered_end = span.begin + span.length;
  }
  return out;
}

CameraTrajectory effective_trajectory(const CameraTrajectory& base, const CameraVars& vars) {
  CameraTrajectory out;
  out.intrinsics = base.intrinsics;
  out.frames.resize(base.size());
  for (int i = 0; i < base.size(); ++i) {
    const EffectiveCamera eff = effective_camera(base.frames[i], vars, i);
    out.frames[i].rotation = orthonormalize(eff.r_eff);
    out.frames[i].translation = eff.t_eff;
  }
  return out;
}

PipelineResult run_pipeline(const ObservationSet& obs, const GmmPrior& prior,
                            const PipelineConfig& config) {
  const int frames = obs.layout.frames;
  const auto spans = plan_windows(frames, config.plan);
  auto schedule = std::make_shared<const DiffusionSchedule>();

  LossWeights weights = config.weights;
  if (config.ablation.no_hsr) weights.l_hsr = 0.0;

  struct WindowOutput {
    OptVariables vars;
    std::vector<TraceRow> trace;
  };

  auto solve_window = [&](int w) {
    const WindowSpan& span = spans[w];
    const ObservationSet wobs = obs.slice(span.begin, span.length);
    WindowProblem problem = make_window_problem(wobs, prior, schedule, config.plan, weights,
                                                config.sds, config.init);
    problem.ablation = config.ablation;
    problem.pseudo_gt = config.pseudo_gt;
    problem.window_index = w;

    WindowOutput out;
    out.vars = initialize(wobs, prior, *schedule, Rng::derive_seed(config.seed, 1000 + w),
                          config.init);
    if (!config.init_only) {
      Rng rng(Rng::derive_seed(config.seed, w));
      for (const StageConfig& stage : config.stages) {
        out.vars = run_stage(problem, std::move(out.vars), stage, rng, &out.trace);
      }
    }
    return out;
  };

  std::vector<WindowOutput> outputs(spans.size());
  if (config.parallel_windows && spans.size() > 1) {
    std::vector<std::future<WindowOutput>> futures;
    futures.reserve(spans.size());
    for (size_t w = 0; w < spans.size(); ++w) {
      futures.push_back(
          std::async(std::launch::async, [&, w]() { return solve_window(static_cast<int>(w)); }));
    }
    for (size_t w = 0; w < spans.size(); ++w) outputs[w] = futures[w].get();
  } else {
    for (size_t w = 0; w < spans.size(); ++w) outputs[w] = solve_window(static_cast<int>(w));
  }

  PipelineResult result;
  std::vector<MotionWindow> motions;
  std::vector<CameraTrajectory> cams;
  double scale_sum = 0.0;
  for (size_t w = 0; w < spans.size(); ++w) {
    motions.push_back(outputs[w].vars.motion);
    const ObservationSet wobs = obs.slice(spans[w].begin, spans[w].length);
    cams.push_back(effective_trajectory(wobs.cam_est, outputs[w].vars.cam));
    scale_sum += outputs[w].vars.cam.scale();
    result.window_vars.push_back(std::move(outputs[w].vars));
    for (auto& row : outputs[w].trace) result.trace.push_back(row);
  }
  result.merged_motion = stitch_motion(motions, spans, frames);
  result.merged_camera = stitch_camera(cams, spans, frames);
  result.mean_scale = scale_sum / static_cast<double>(spans.size());
  result.merged_contacts = contact_labels_from(result.merged_motion);
  return result;
}

}  // namespace coin
