#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coin/motion.hpp"
#include "coin/random.hpp"
#include "coin/schedule.hpp"

namespace coin {

// Predicted clean signal and noise for a latent at timestep t. Satisfies
// h_t = sqrt(ab) * h0_hat + sqrt(1 - ab) * eps_hat by construction.
struct DenoiserOutput {
  Eigen::VectorXd h0_hat;
  Eigen::VectorXd eps_hat;
};

// Partial observation of the clean signal: values c, a binary channel mask M
// and the standard deviation of the assumed observation noise per channel.
struct ControlSignal {
  Eigen::VectorXd values;
  Eigen::VectorXd mask;
  Eigen::VectorXd obs_noise_sigma;

  void validate(int dim) const;
  bool empty_mask() const { return mask.size() == 0 || mask.maxCoeff() <= 0.0; }
};

// Gaussian mixture over flattened motion windows. Immutable after
// construction; covariance eigendecompositions are precomputed once and
// shared across copies, so reweighting/re-meaning a mixture is cheap.
class GmmPrior {
 public:
  GmmPrior() = default;
  GmmPrior(std::optional<ChannelLayout> layout, Eigen::VectorXd weights,
           std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covariances);

  // Same covariances (shared cache), new weights and means.
  GmmPrior with_moments(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means) const;

  int components() const { return static_cast<int>(weights_.size()); }
  int dim() const { return means_.empty() ? 0 : static_cast<int>(means_[0].size()); }
  const std::optional<ChannelLayout>& layout() const { return layout_; }

  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& mean(int k) const { return means_[k]; }
  const Eigen::MatrixXd& covariance(int k) const;
  const Eigen::MatrixXd& basis(int k) const;        // eigenvectors U
  const Eigen::VectorXd& eigenvalues(int k) const;  // eigenvalues, ascending

  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const;
  Eigen::VectorXd mixture_mean() const;
  // Per-channel variance of the mixture.
  Eigen::VectorXd marginal_variance() const;
  // Squared Mahalanobis distance to component k.
  double mahalanobis_sq(const Eigen::VectorXd& x, int k) const;

  // Exact mixture keeping only the given channels.
  GmmPrior marginal(const std::vector<int>& keep) const;

  // Posterior mean E[H_0 | H_t] and component responsibilities under the
  // forward marginal with signal retention alpha_bar.
  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& h_t, double alpha_bar,
                                 Eigen::VectorXd* responsibilities = nullptr) const;

  // v^T d(posterior_mean)/d(h_t), for gradients through a denoising chain.
  Eigen::VectorXd posterior_mean_vjp(const Eigen::VectorXd& h_t, double alpha_bar,
                                     const Eigen::VectorXd& v) const;

 private:
  struct CovEntry {
    Eigen::MatrixXd cov;
    Eigen::MatrixXd basis;
    Eigen::VectorXd evals;
  };

  std::optional<ChannelLayout> layout_;
  Eigen::VectorXd weights_;
  std::vector<Eigen::VectorXd> means_;
  std::shared_ptr<const std::vector<CovEntry>> covs_;

  void log_responsibilities(const Eigen::VectorXd& h_t, double alpha_bar,
                            Eigen::VectorXd& log_resp,
                            std::vector<Eigen::VectorXd>& rotated) const;
};

// Map from (noisy latent, timestep) to predicted clean signal and noise.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual DenoiserOutput denoise(const Eigen::VectorXd& h_t, double t) const = 0;
  virtual int dim() const = 0;
};

// Exact posterior-mean denoiser for a GMM prior under a diffusion schedule.
class GmmDenoiser : public Denoiser {
 public:
  GmmDenoiser(GmmPrior prior, std::shared_ptr<const DiffusionSchedule> schedule)
      : prior_(std::move(prior)), schedule_(std::move(schedule)) {}

  DenoiserOutput denoise(const Eigen::VectorXd& h_t, double t) const override;
  int dim() const override { return prior_.dim(); }

  const GmmPrior& prior() const { return prior_; }
  const DiffusionSchedule& schedule() const { return *schedule_; }

  // v^T d(h0_hat)/d(h_t).
  Eigen::VectorXd h0_vjp(const Eigen::VectorXd& h_t, double t, const Eigen::VectorXd& v) const;

 private:
  GmmPrior prior_;
  std::shared_ptr<const DiffusionSchedule> schedule_;
};

// Precomputed Bayesian-conditioning operator for a fixed mask and noise
// level. Re-conditioning on fresh control values is cheap (posterior
// covariances and their eigendecompositions are reused).
class PriorConditioner {
 public:
  PriorConditioner(const GmmPrior& prior, const Eigen::VectorXd& mask,
                   const Eigen::VectorXd& obs_noise_sigma);

  GmmPrior condition(const Eigen::VectorXd& values) const;
  bool identity() const { return observed_.empty(); }

 private:
  const GmmPrior prior_;
  std::vector<int> observed_;
  GmmPrior posterior_template_;               // posterior covariances, stale moments
  std::vector<Eigen::MatrixXd> gains_;        // Kalman gains, dim x m
  std::vector<Eigen::MatrixXd> obs_chol_;     // Cholesky factors of S_k = Sigma_oo + N
  std::vector<double> obs_logdet_;
};

// One-shot conditioning per the controlled-denoiser contract.
GmmPrior condition_prior(const GmmPrior& prior, const ControlSignal& ctrl);

// q(H_t | H_0): sqrt(ab)*H + sqrt(1-ab)*eps.
Eigen::VectorXd forward_sample(const Eigen::VectorXd& h0, double t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& schedule);

// Exact unconditional denoiser call. t = 0 returns the identity guard
// (h0_hat = h_t, eps_hat = 0).
DenoiserOutput denoise_exact(const GmmPrior& prior, const Eigen::VectorXd& h_t, double t,
                             const DiffusionSchedule& schedule);

// Conditioned denoiser call: denoise_exact over condition_prior(prior, ctrl).
DenoiserOutput denoise_controlled(const GmmPrior& prior, const Eigen::VectorXd& h_t, double t,
                                  const ControlSignal& ctrl, const DiffusionSchedule& schedule);

// Deterministic DDIM update from t to t_next < t.
Eigen::VectorXd ddim_step(const Eigen::VectorXd& h_t, const DenoiserOutput& out, double t,
                          double t_next, const DiffusionSchedule& schedule);

// Stochastic ancestral (DDPM-style) sampling chain from pure noise at t = 1.
Eigen::VectorXd ddpm_sample_chain(const Denoiser& denoiser, const DiffusionSchedule& schedule,
                                  int steps, Rng& rng);

struct GmmFitOptions {
  int max_iterations = 100;
  double tolerance = 1e-7;       // relative log-likelihood improvement
  double cov_floor = 1e-6;       // eigenvalue floor applied during fitting
  bool diagonal_covariance = false;
};

struct GmmFitResult {
  GmmPrior prior;
  std::vector<double> log_likelihood;  // one entry per EM iteration
  bool covariance_floored = false;
};

// EM fit of a K-component mixture to flattened motion windows (rows).
GmmFitResult fit_gmm(const Eigen::MatrixXd& dataset, int k, std::uint64_t seed,
                     const GmmFitOptions& options = {},
                     std::optional<ChannelLayout> layout = std::nullopt);

}  // namespace coin
