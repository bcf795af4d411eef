#include "coin/sds.hpp"

#include <cmath>
#include <string>

#include "coin/errors.hpp"

namespace coin {

Eigen::VectorXd SoftMask::effective(double t) const {
  return mask_weight(t) * (confidence.array() * mask.array()).matrix();
}

void SoftMask::validate(int dim) const {
  if (mask.size() != dim || confidence.size() != dim) {
    throw ConfigError("SoftMask: field sizes do not match latent dimension");
  }
  for (int i = 0; i < dim; ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) throw ConfigError("SoftMask: mask must be binary");
    if (confidence[i] < 0.0 || confidence[i] > 1.0) {
      throw ConfigError("SoftMask: confidence must lie in [0, 1]");
    }
  }
}

void SdsConfig::validate() const {
  if (n_ddim_steps < 1) throw ConfigError("SdsConfig: n_ddim_steps must be >= 1");
  if (!(t_min > 0.0 && t_max <= 1.0 && t_min <= t_max)) {
    throw ConfigError("SdsConfig: t_range must be a subset of (0, 1]");
  }
}

double mask_weight(double t) { return std::max(0.0, (t - 0.5) / 0.5); }

Eigen::VectorXd coin_denoise(const Denoiser& unknown_branch, const DiffusionSchedule& schedule,
                             const Eigen::VectorXd& h, const SoftMask& sm, const SdsConfig& cfg,
                             double t, const Eigen::VectorXd& eps, InpaintMode mode) {
  cfg.validate();
  sm.validate(static_cast<int>(h.size()));
  if (!(t >= cfg.t_min && t <= cfg.t_max)) {
    throw ConfigError("coin_denoise: t outside configured t_range");
  }

  Eigen::VectorXd x = forward_sample(h, t, eps, schedule);
  const int n = cfg.n_ddim_steps;
  const double dt = t / n;
  for (int i = 0; i < n; ++i) {
    const double t_bar = t - i * dt;
    const double t_next = (i + 1 == n) ? 0.0 : t - (i + 1) * dt;

    const Eigen::VectorXd unknown = unknown_branch.denoise(x, t_bar).h0_hat;
    Eigen::VectorXd blend;
    switch (mode) {
      case InpaintMode::kSoft: {
        const Eigen::VectorXd m = sm.effective(t_bar);
        blend = m.array() * h.array() + (1.0 - m.array()) * unknown.array();
        break;
      }
      case InpaintMode::kHard:
        blend = sm.mask.array() * h.array() + (1.0 - sm.mask.array()) * unknown.array();
        break;
      case InpaintMode::kOff:
        blend = unknown;
        break;
    }

    const double ab = schedule.alpha_bar(t_bar);
    const Eigen::VectorXd eps_bar = (x - std::sqrt(ab) * blend) / std::sqrt(1.0 - ab);
    const double ab_next = schedule.alpha_bar(t_next);
    x = std::sqrt(ab_next) * blend + std::sqrt(1.0 - ab_next) * eps_bar;
    if (!x.allFinite()) {
      throw NumericError("coin_denoise: non-finite latent at DDIM step " + std::to_string(i));
    }
  }
  return x;
}

Eigen::VectorXd coin_denoise(const GmmPrior& prior, const ControlSignal& ctrl,
                             const DiffusionSchedule& schedule, const Eigen::VectorXd& h,
                             const SoftMask& sm, const SdsConfig& cfg, double t,
                             const Eigen::VectorXd& eps, InpaintMode mode) {
  GmmDenoiser denoiser(condition_prior(prior, ctrl),
                       std::make_shared<DiffusionSchedule>(schedule));
  return coin_denoise(denoiser, schedule, h, sm, cfg, t, eps, mode);
}

SdsLossGrad coin_sds_loss_grad(const Eigen::VectorXd& h, const Eigen::VectorXd& h0_tilde,
                               double t, const SdsConfig& cfg,
                               const DiffusionSchedule& schedule) {
  if (h.size() != h0_tilde.size()) throw ConfigError("coin_sds_loss_grad: dimension mismatch");
  const double ab = schedule.alpha_bar(t);
  if (1.0 - ab < 1e-12) throw NumericError("coin_sds_loss_grad: weight singular at t = 0");
  const double w = cfg.omega_at(t) * std::sqrt(ab) / std::sqrt(1.0 - ab);
  SdsLossGrad out;
  const Eigen::VectorXd diff = h - h0_tilde;
  out.loss = w * diff.squaredNorm();
  out.grad = 2.0 * w * diff;
  return out;
}

VanillaSdsResult vanilla_sds_loss_grad(const GmmPrior& prior, const Eigen::VectorXd& h, double t,
                                       const Eigen::VectorXd& eps, const SdsConfig& cfg,
                                       const DiffusionSchedule& schedule) {
  const Eigen::VectorXd h_t = forward_sample(h, t, eps, schedule);
  const DenoiserOutput out = denoise_exact(prior, h_t, t, schedule);
  const double ab = schedule.alpha_bar(t);
  if (1.0 - ab < 1e-12) throw NumericError("vanilla_sds_loss_grad: weight singular at t = 0");
  const double omega = cfg.omega_at(t);

  VanillaSdsResult r;
  r.h0_hat = out.h0_hat;
  const double w = omega * std::sqrt(ab) / std::sqrt(1.0 - ab);
  const Eigen::VectorXd diff_h = h - out.h0_hat;
  r.loss = w * diff_h.squaredNorm();
  r.grad = 2.0 * w * diff_h;

  const Eigen::VectorXd diff_eps = out.eps_hat - eps;
  r.loss_eps_form = omega * diff_eps.squaredNorm();
  r.grad_eps_form = 2.0 * omega * std::sqrt(ab) * diff_eps;

  // The two forms are reparameterizations of each other; their gradients must
  // be parallel whenever they are nonzero.
  const double na = r.grad.norm();
  const double nb = r.grad_eps_form.norm();
  if (na > 1e-12 && nb > 1e-12) {
    const double cosine = r.grad.dot(r.grad_eps_form) / (na * nb);
    if (cosine < 1.0 - 1e-9) {
      throw NumericError("vanilla_sds_loss_grad: gradient forms disagree");
    }
  }
  return r;
}

ControlSignal dynamic_control_update(const Eigen::VectorXd& state, const Eigen::VectorXd& mask,
                                     const Eigen::VectorXd& obs_noise_sigma) {
  if (!state.allFinite()) throw NumericError("dynamic_control_update: non-finite state");
  ControlSignal ctrl;
  ctrl.values = state;
  ctrl.mask = mask;
  ctrl.obs_noise_sigma = obs_noise_sigma;
  ctrl.validate(static_cast<int>(state.size()));
  return ctrl;
}

Eigen::VectorXd default_obs_sigma(const ChannelLayout& layout, const ObsNoiseDefaults& d) {
  Eigen::VectorXd sigma(layout.total_dim());
  for (int f = 0; f < layout.frames; ++f) {
    for (int a = 0; a < 3; ++a) {
      sigma[layout.tau(f, a)] = d.translation;
      sigma[layout.phi(f, a)] = d.orientation;
    }
    for (int j = 0; j < layout.local_joints; ++j) {
      for (int a = 0; a < 3; ++a) sigma[layout.theta(f, j, a)] = d.pose;
    }
    for (int k = 0; k < kContactCount; ++k) sigma[layout.contact(f, k)] = d.contact;
  }
  return sigma;
}

}  // namespace coin
