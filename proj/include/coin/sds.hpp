#pragma once

#include <functional>

#include <Eigen/Core>

#include "coin/gmm.hpp"
#include "coin/motion.hpp"
#include "coin/schedule.hpp"

namespace coin {

// Binary observation mask plus per-channel confidence; the effective mask
// blends the two with the timestep weight w(t).
struct SoftMask {
  Eigen::VectorXd mask;        // M, entries in {0, 1}
  Eigen::VectorXd confidence;  // S, entries in [0, 1]

  Eigen::VectorXd effective(double t) const;
  void validate(int dim) const;
};

struct SdsConfig {
  int n_ddim_steps = 10;
  std::function<double(double)> omega;  // weight omega(t); null means constant 1
  double t_min = 0.02;
  double t_max = 0.98;
  std::uint64_t rng_seed = 0;

  double omega_at(double t) const { return omega ? omega(t) : 1.0; }
  void validate() const;
};

enum class InpaintMode {
  kSoft,  // effective mask w(t) * S .* M
  kHard,  // binary mask M, schedule-free
  kOff,   // no blending, pure denoiser branch
};

// Observation weight w(t) = max(0, (t - 0.5) / 0.5).
double mask_weight(double t);

// Multi-step DDIM denoising with controlled sampling and soft inpainting.
// `unknown_branch` supplies the denoised estimate for unobserved regions
// (normally the conditioned denoiser); `h` is both the latent seed and the
// known branch. Deterministic given (h, t, eps).
Eigen::VectorXd coin_denoise(const Denoiser& unknown_branch, const DiffusionSchedule& schedule,
                             const Eigen::VectorXd& h, const SoftMask& sm, const SdsConfig& cfg,
                             double t, const Eigen::VectorXd& eps,
                             InpaintMode mode = InpaintMode::kSoft);

// Convenience overload that conditions the prior on `ctrl` first.
Eigen::VectorXd coin_denoise(const GmmPrior& prior, const ControlSignal& ctrl,
                             const DiffusionSchedule& schedule, const Eigen::VectorXd& h,
                             const SoftMask& sm, const SdsConfig& cfg, double t,
                             const Eigen::VectorXd& eps, InpaintMode mode = InpaintMode::kSoft);

struct SdsLossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// COIN-SDS objective for a frozen pseudo ground truth h0_tilde:
// omega(t) * sqrt(ab) / sqrt(1 - ab) * ||h - h0_tilde||^2.
SdsLossGrad coin_sds_loss_grad(const Eigen::VectorXd& h, const Eigen::VectorXd& h0_tilde,
                               double t, const SdsConfig& cfg, const DiffusionSchedule& schedule);

struct VanillaSdsResult {
  double loss = 0.0;            // reparameterized form on h
  Eigen::VectorXd grad;         // frozen-target gradient of the h form
  double loss_eps_form = 0.0;   // omega(t) * ||eps_hat - eps||^2
  Eigen::VectorXd grad_eps_form;
  Eigen::VectorXd h0_hat;       // single-step denoised motion
};

// Single-step SDS; computes both the noise-space and signal-space forms and
// verifies their gradients are parallel.
VanillaSdsResult vanilla_sds_loss_grad(const GmmPrior& prior, const Eigen::VectorXd& h, double t,
                                       const Eigen::VectorXd& eps, const SdsConfig& cfg,
                                       const DiffusionSchedule& schedule);

// Control signal for the next optimization iteration: the current iterate as
// values, the observation mask, configured observation-noise levels.
ControlSignal dynamic_control_update(const Eigen::VectorXd& state, const Eigen::VectorXd& mask,
                                     const Eigen::VectorXd& obs_noise_sigma);

struct ObsNoiseDefaults {
  double translation = 0.1;
  double orientation = 0.05;
  double pose = 0.01;
  double contact = 2.0;
};

// Per-channel observation-noise sigmas for the conditioning model.
Eigen::VectorXd default_obs_sigma(const ChannelLayout& layout,
                                  const ObsNoiseDefaults& defaults = {});

}  // namespace coin
