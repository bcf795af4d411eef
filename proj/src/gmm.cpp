#include "coin/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "coin/errors.hpp"

namespace coin {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

void ControlSignal::validate(int dim) const {
  if (values.size() != dim || mask.size() != dim || obs_noise_sigma.size() != dim) {
    throw ConfigError("ControlSignal: field sizes do not match latent dimension");
  }
  for (int i = 0; i < dim; ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) {
      throw ConfigError("ControlSignal: mask entries must be 0 or 1");
    }
    if (mask[i] == 1.0 && !(obs_noise_sigma[i] > 0.0)) {
      throw ConfigError("ControlSignal: observed channels need positive noise sigma");
    }
  }
}

GmmPrior::GmmPrior(std::optional<ChannelLayout> layout, Eigen::VectorXd weights,
                   std::vector<Eigen::VectorXd> means, std::vector<Eigen::MatrixXd> covariances)
    : layout_(layout), weights_(std::move(weights)), means_(std::move(means)) {
  const int k = static_cast<int>(weights_.size());
  if (k < 1) throw ConfigError("GmmPrior: needs at least one component");
  if (static_cast<int>(means_.size()) != k || static_cast<int>(covariances.size()) != k) {
    throw ConfigError("GmmPrior: weights/means/covariances count mismatch");
  }
  const int d = static_cast<int>(means_[0].size());
  if (layout_ && layout_->total_dim() != d) {
    throw ConfigError("GmmPrior: layout dimension does not match means");
  }
  if (weights_.minCoeff() < -1e-12) throw ConfigError("GmmPrior: negative weight");
  const double wsum = weights_.sum();
  if (std::abs(wsum - 1.0) > 1e-6) throw ConfigError("GmmPrior: weights must sum to 1");
  weights_ /= wsum;

  auto entries = std::make_shared<std::vector<CovEntry>>();
  entries->reserve(k);
  for (int i = 0; i < k; ++i) {
    if (means_[i].size() != d || covariances[i].rows() != d || covariances[i].cols() != d) {
      throw ConfigError("GmmPrior: inconsistent component dimensions");
    }
    CovEntry e;
    e.cov = 0.5 * (covariances[i] + covariances[i].transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.cov);
    if (es.info() != Eigen::Success) throw NumericError("GmmPrior: eigendecomposition failed");
    e.basis = es.eigenvectors();
    e.evals = es.eigenvalues();
    const double scale = std::max(1.0, e.evals.cwiseAbs().maxCoeff());
    if (e.evals.minCoeff() < -1e-9 * scale) {
      throw ConfigError("GmmPrior: covariance is not positive semi-definite");
    }
    e.evals = e.evals.cwiseMax(0.0);
    entries->push_back(std::move(e));
  }
  covs_ = std::move(entries);
}

GmmPrior GmmPrior::with_moments(Eigen::VectorXd weights,
                                std::vector<Eigen::VectorXd> means) const {
  GmmPrior out;
  out.layout_ = layout_;
  out.weights_ = std::move(weights);
  const double wsum = out.weights_.sum();
  if (!(wsum > 0.0)) throw NumericError("GmmPrior: degenerate reweighting");
  out.weights_ /= wsum;
  out.means_ = std::move(means);
  out.covs_ = covs_;
  return out;
}

const Eigen::MatrixXd& GmmPrior::covariance(int k) const { return (*covs_)[k].cov; }
const Eigen::MatrixXd& GmmPrior::basis(int k) const { return (*covs_)[k].basis; }
const Eigen::VectorXd& GmmPrior::eigenvalues(int k) const { return (*covs_)[k].evals; }

double GmmPrior::log_density(const Eigen::VectorXd& x) const {
  const int kc = components();
  Eigen::VectorXd lp(kc);
  for (int k = 0; k < kc; ++k) {
    const Eigen::VectorXd y = basis(k).transpose() * (x - means_[k]);
    const Eigen::ArrayXd ev = eigenvalues(k).array().max(1e-300);
    const double quad = (y.array().square() / ev).sum();
    const double logdet = ev.log().sum();
    lp[k] = std::log(std::max(weights_[k], 1e-300)) -
            0.5 * (quad + logdet + dim() * kLog2Pi);
  }
  return log_sum_exp(lp);
}

Eigen::VectorXd GmmPrior::sample(Rng& rng) const {
  const double u = rng.uniform();
  int pick = components() - 1;
  double acc = 0.0;
  for (int k = 0; k < components(); ++k) {
    acc += weights_[k];
    if (u < acc) {
      pick = k;
      break;
    }
  }
  const Eigen::VectorXd z = rng.gaussian_vector(dim());
  return means_[pick] +
         basis(pick) * (eigenvalues(pick).cwiseMax(0.0).cwiseSqrt().asDiagonal() * z);
}

Eigen::VectorXd GmmPrior::mixture_mean() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < components(); ++k) m += weights_[k] * means_[k];
  return m;
}

Eigen::VectorXd GmmPrior::marginal_variance() const {
  const Eigen::VectorXd mu = mixture_mean();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < components(); ++k) {
    v += weights_[k] * (covariance(k).diagonal() + means_[k].cwiseAbs2());
  }
  return v - mu.cwiseAbs2();
}

double GmmPrior::mahalanobis_sq(const Eigen::VectorXd& x, int k) const {
  const Eigen::VectorXd y = basis(k).transpose() * (x - means_[k]);
  return (y.array().square() / eigenvalues(k).array().max(1e-300)).sum();
}

void GmmPrior::log_responsibilities(const Eigen::VectorXd& h_t, double alpha_bar,
                                    Eigen::VectorXd& log_resp,
                                    std::vector<Eigen::VectorXd>& rotated) const {
  const int kc = components();
  const double beta = 1.0 - alpha_bar;
  const double root_ab = std::sqrt(alpha_bar);
  log_resp.resize(kc);
  rotated.resize(kc);
  for (int k = 0; k < kc; ++k) {
    rotated[k] = basis(k).transpose() * (h_t - root_ab * means_[k]);
    const Eigen::ArrayXd marg = (alpha_bar * eigenvalues(k).array() + beta).max(1e-300);
    const double quad = (rotated[k].array().square() / marg).sum();
    const double logdet = marg.log().sum();
    log_resp[k] = std::log(std::max(weights_[k], 1e-300)) -
                  0.5 * (quad + logdet + dim() * kLog2Pi);
  }
  log_resp.array() -= log_sum_exp(log_resp);
}

Eigen::VectorXd GmmPrior::posterior_mean(const Eigen::VectorXd& h_t, double alpha_bar,
                                         Eigen::VectorXd* responsibilities) const {
  if (h_t.size() != dim()) throw ConfigError("posterior_mean: latent dimension mismatch");
  const double beta = 1.0 - alpha_bar;
  const double root_ab = std::sqrt(alpha_bar);
  Eigen::VectorXd log_resp;
  std::vector<Eigen::VectorXd> rotated;
  log_responsibilities(h_t, alpha_bar, log_resp, rotated);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < components(); ++k) {
    const double r = std::exp(log_resp[k]);
    if (r < 1e-300) continue;
    const Eigen::ArrayXd gain = eigenvalues(k).array() /
                                (alpha_bar * eigenvalues(k).array() + beta).max(1e-300);
    const Eigen::VectorXd post =
        means_[k] + root_ab * (basis(k) * (gain * rotated[k].array()).matrix());
    out += r * post;
  }
  if (responsibilities) *responsibilities = log_resp.array().exp();
  return out;
}

Eigen::VectorXd GmmPrior::posterior_mean_vjp(const Eigen::VectorXd& h_t, double alpha_bar,
                                             const Eigen::VectorXd& v) const {
  const double beta = 1.0 - alpha_bar;
  const double root_ab = std::sqrt(alpha_bar);
  Eigen::VectorXd log_resp;
  std::vector<Eigen::VectorXd> rotated;
  log_responsibilities(h_t, alpha_bar, log_resp, rotated);

  const int kc = components();
  std::vector<double> resp(kc);
  std::vector<Eigen::VectorXd> post(kc), score(kc);
  Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < kc; ++k) {
    resp[k] = std::exp(log_resp[k]);
    const Eigen::ArrayXd marg = (alpha_bar * eigenvalues(k).array() + beta).max(1e-300);
    const Eigen::ArrayXd gain = eigenvalues(k).array() / marg;
    post[k] = means_[k] + root_ab * (basis(k) * (gain * rotated[k].array()).matrix());
    score[k] = -(basis(k) * (rotated[k].array() / marg).matrix());
    mean_score += resp[k] * score[k];
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  for (int k = 0; k < kc; ++k) {
    if (resp[k] < 1e-300) continue;
    const Eigen::ArrayXd marg = (alpha_bar * eigenvalues(k).array() + beta).max(1e-300);
    const Eigen::ArrayXd gain = eigenvalues(k).array() / marg;
    // Symmetric per-component linear term sqrt(ab) * Sigma S^-1 applied to v.
    const Eigen::VectorXd yv = basis(k).transpose() * v;
    out += resp[k] * root_ab * (basis(k) * (gain * yv.array()).matrix());
    // Responsibility variation.
    out += resp[k] * (score[k] - mean_score) * post[k].dot(v);
  }
  return out;
}

GmmPrior GmmPrior::marginal(const std::vector<int>& keep) const {
  const int m = static_cast<int>(keep.size());
  if (m < 1) throw ConfigError("marginal: empty channel set");
  std::vector<Eigen::VectorXd> means(components());
  std::vector<Eigen::MatrixXd> covs(components());
  for (int k = 0; k < components(); ++k) {
    means[k].resize(m);
    covs[k].resize(m, m);
    for (int i = 0; i < m; ++i) {
      means[k][i] = means_[k][keep[i]];
      for (int j = 0; j < m; ++j) covs[k](i, j) = covariance(k)(keep[i], keep[j]);
    }
  }
  return GmmPrior(std::nullopt, weights_, std::move(means), std::move(covs));
}

DenoiserOutput GmmDenoiser::denoise(const Eigen::VectorXd& h_t, double t) const {
  return denoise_exact(prior_, h_t, t, *schedule_);
}

Eigen::VectorXd GmmDenoiser::h0_vjp(const Eigen::VectorXd& h_t, double t,
                                    const Eigen::VectorXd& v) const {
  const double ab = schedule_->alpha_bar(t);
  if (1.0 - ab < 1e-12) return v;
  return prior_.posterior_mean_vjp(h_t, ab, v);
}

PriorConditioner::PriorConditioner(const GmmPrior& prior, const Eigen::VectorXd& mask,
                                   const Eigen::VectorXd& obs_noise_sigma)
    : prior_(prior) {
  const int d = prior.dim();
  if (mask.size() != d) throw ConfigError("PriorConditioner: mask dimension mismatch");
  for (int i = 0; i < d; ++i) {
    if (mask[i] == 1.0) {
      observed_.push_back(i);
    } else if (mask[i] != 0.0) {
      throw ConfigError("PriorConditioner: mask entries must be 0 or 1");
    }
  }
  if (observed_.empty()) return;

  const int m = static_cast<int>(observed_.size());
  Eigen::VectorXd noise_var(m);
  for (int i = 0; i < m; ++i) {
    const double s = obs_noise_sigma[observed_[i]];
    if (!(s > 0.0)) throw ConfigError("PriorConditioner: observed channel needs sigma > 0");
    noise_var[i] = s * s;
  }

  const int kc = prior.components();
  gains_.resize(kc);
  obs_chol_.resize(kc);
  obs_logdet_.resize(kc);
  std::vector<Eigen::VectorXd> means(kc);
  std::vector<Eigen::MatrixXd> covs(kc);
  for (int k = 0; k < kc; ++k) {
    const Eigen::MatrixXd& cov = prior.covariance(k);
    Eigen::MatrixXd cross(d, m);  // Sigma[:, obs]
    Eigen::MatrixXd s(m, m);      // Sigma[obs, obs] + N
    for (int j = 0; j < m; ++j) {
      cross.col(j) = cov.col(observed_[j]);
      for (int i = 0; i < m; ++i) s(i, j) = cov(observed_[i], observed_[j]);
      s(j, j) += noise_var[j];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) {
      throw NumericError("PriorConditioner: observation covariance not PD");
    }
    gains_[k] = llt.solve(cross.transpose()).transpose();  // Sigma[:,o] S^-1
    obs_chol_[k] = llt.matrixL();
    obs_logdet_[k] = 2.0 * obs_chol_[k].diagonal().array().log().sum();
    covs[k] = cov - gains_[k] * cross.transpose();
    means[k] = prior.mean(k);  // placeholder; replaced in condition()
  }
  posterior_template_ = GmmPrior(prior.layout(), prior.weights(), means, covs);
}

GmmPrior PriorConditioner::condition(const Eigen::VectorXd& values) const {
  if (observed_.empty()) return prior_;
  if (values.size() != prior_.dim()) throw ConfigError("condition: values dimension mismatch");
  const int kc = prior_.components();
  const int m = static_cast<int>(observed_.size());
  Eigen::VectorXd c(m);
  for (int i = 0; i < m; ++i) c[i] = values[observed_[i]];

  Eigen::VectorXd log_w(kc);
  std::vector<Eigen::VectorXd> means(kc);
  for (int k = 0; k < kc; ++k) {
    Eigen::VectorXd mu_obs(m);
    for (int i = 0; i < m; ++i) mu_obs[i] = prior_.mean(k)[observed_[i]];
    const Eigen::VectorXd diff = c - mu_obs;
    const Eigen::VectorXd half = obs_chol_[k].triangularView<Eigen::Lower>().solve(diff);
    log_w[k] = std::log(std::max(prior_.weights()[k], 1e-300)) -
               0.5 * (half.squaredNorm() + obs_logdet_[k] + m * kLog2Pi);
    means[k] = prior_.mean(k) + gains_[k] * diff;
  }
  log_w.array() -= log_sum_exp(log_w);
  return posterior_template_.with_moments(log_w.array().exp(), std::move(means));
}

GmmPrior condition_prior(const GmmPrior& prior, const ControlSignal& ctrl) {
  ctrl.validate(prior.dim());
  if (ctrl.empty_mask()) return prior;
  PriorConditioner conditioner(prior, ctrl.mask, ctrl.obs_noise_sigma);
  return conditioner.condition(ctrl.values);
}

Eigen::VectorXd forward_sample(const Eigen::VectorXd& h0, double t, const Eigen::VectorXd& eps,
                               const DiffusionSchedule& schedule) {
  if (eps.size() != h0.size()) throw ConfigError("forward_sample: noise dimension mismatch");
  const double ab = schedule.alpha_bar(t);
  return std::sqrt(ab) * h0 + std::sqrt(1.0 - ab) * eps;
}

DenoiserOutput denoise_exact(const GmmPrior& prior, const Eigen::VectorXd& h_t, double t,
                             const DiffusionSchedule& schedule) {
  const double ab = schedule.alpha_bar(t);
  DenoiserOutput out;
  if (1.0 - ab < 1e-12) {  // t = 0 guard: Eq. 4 is singular at alpha_bar = 1
    out.h0_hat = h_t;
    out.eps_hat = Eigen::VectorXd::Zero(h_t.size());
    return out;
  }
  out.h0_hat = prior.posterior_mean(h_t, ab);
  out.eps_hat = (h_t - std::sqrt(ab) * out.h0_hat) / std::sqrt(1.0 - ab);
  return out;
}

DenoiserOutput denoise_controlled(const GmmPrior& prior, const Eigen::VectorXd& h_t, double t,
                                  const ControlSignal& ctrl, const DiffusionSchedule& schedule) {
  return denoise_exact(condition_prior(prior, ctrl), h_t, t, schedule);
}

Eigen::VectorXd ddim_step(const Eigen::VectorXd& h_t, const DenoiserOutput& out, double t,
                          double t_next, const DiffusionSchedule& schedule) {
  if (!(t_next < t)) throw ConfigError("ddim_step: t_next must be smaller than t");
  if (out.h0_hat.size() != h_t.size() || out.eps_hat.size() != h_t.size()) {
    throw ConfigError("ddim_step: denoiser output dimension mismatch");
  }
  const double ab_next = schedule.alpha_bar(t_next);
  return std::sqrt(ab_next) * out.h0_hat + std::sqrt(1.0 - ab_next) * out.eps_hat;
}

Eigen::VectorXd ddpm_sample_chain(const Denoiser& denoiser, const DiffusionSchedule& schedule,
                                  int steps, Rng& rng) {
  if (steps < 1) throw ConfigError("ddpm_sample_chain: steps must be >= 1");
  Eigen::VectorXd x = rng.gaussian_vector(denoiser.dim());
  for (int i = 0; i < steps; ++i) {
    const double t = 1.0 - static_cast<double>(i) / steps;
    const double t_next = 1.0 - static_cast<double>(i + 1) / steps;
    const DenoiserOutput out = denoiser.denoise(x, t);
    if (t_next <= 0.0) {
      x = out.h0_hat;
      break;
    }
    const double ab = schedule.alpha_bar(t);
    const double ab_next = schedule.alpha_bar(t_next);
    const double var = (1.0 - ab_next) / (1.0 - ab) * (1.0 - ab / ab_next);
    const double sigma = std::sqrt(std::max(0.0, var));
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_next - sigma * sigma));
    x = std::sqrt(ab_next) * out.h0_hat + dir * out.eps_hat +
        sigma * rng.gaussian_vector(x.size());
  }
  return x;
}

GmmFitResult fit_gmm(const Eigen::MatrixXd& dataset, int k, std::uint64_t seed,
                     const GmmFitOptions& options, std::optional<ChannelLayout> layout) {
  const int n = static_cast<int>(dataset.rows());
  const int d = static_cast<int>(dataset.cols());
  if (n == 0 || d == 0) throw ConfigError("fit_gmm: empty dataset");
  if (k < 1) throw ConfigError("fit_gmm: component count must be >= 1");
  if (n < 10 * k) throw ConfigError("fit_gmm: dataset smaller than 10 * K windows");

  GmmFitResult result;
  Rng rng(seed);

  // Init: distinct random rows as means, shared diagonal covariance.
  std::vector<int> picks;
  while (static_cast<int>(picks.size()) < k) {
    const int cand = rng.uniform_int(0, n - 1);
    if (std::find(picks.begin(), picks.end(), cand) == picks.end()) picks.push_back(cand);
  }
  const Eigen::RowVectorXd data_mean = dataset.colwise().mean();
  Eigen::VectorXd data_var =
      ((dataset.rowwise() - data_mean).array().square().colwise().sum() / n)
          .transpose()
          .matrix();
  data_var = data_var.cwiseMax(options.cov_floor);

  Eigen::VectorXd weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  std::vector<Eigen::VectorXd> means(k);
  std::vector<Eigen::MatrixXd> covs(k, Eigen::MatrixXd::Zero(d, d));
  for (int j = 0; j < k; ++j) {
    means[j] = dataset.row(picks[j]).transpose();
    covs[j] = data_var.asDiagonal();
  }

  auto floor_cov = [&](Eigen::MatrixXd& cov) {
    if (options.diagonal_covariance) {
      Eigen::VectorXd diag = cov.diagonal();
      bool floored = (diag.array() < options.cov_floor).any();
      cov = diag.cwiseMax(options.cov_floor).asDiagonal();
      return floored;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
    if ((es.eigenvalues().array() >= options.cov_floor).all()) return false;
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(options.cov_floor);
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return true;
  };
  for (auto& cov : covs) result.covariance_floored |= floor_cov(cov);

  Eigen::MatrixXd log_resp(n, k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // E-step.
    for (int j = 0; j < k; ++j) {
      Eigen::LLT<Eigen::MatrixXd> llt(covs[j]);
      if (llt.info() != Eigen::Success) throw NumericError("fit_gmm: covariance not PD");
      const Eigen::MatrixXd l = llt.matrixL();
      const double logdet = 2.0 * l.diagonal().array().log().sum();
      const Eigen::MatrixXd centered =
          dataset.rowwise() - means[j].transpose();  // n x d
      const Eigen::MatrixXd half =
          l.triangularView<Eigen::Lower>().solve(centered.transpose());  // d x n
      const Eigen::VectorXd quad = half.colwise().squaredNorm().transpose();
      log_resp.col(j) = (-0.5 * (quad.array() + logdet + d * kLog2Pi) +
                         std::log(std::max(weights[j], 1e-300)))
                            .matrix();
    }
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const double lse = log_sum_exp(log_resp.row(i).transpose());
      ll += lse;
      log_resp.row(i).array() -= lse;
    }
    result.log_likelihood.push_back(ll);

    // M-step.
    const Eigen::MatrixXd resp = log_resp.array().exp();
    const Eigen::VectorXd counts = resp.colwise().sum().transpose();
    for (int j = 0; j < k; ++j) {
      const double c = std::max(counts[j], 1e-12);
      weights[j] = c / n;
      means[j] = (resp.col(j).transpose() * dataset).transpose() / c;
      const Eigen::MatrixXd centered = dataset.rowwise() - means[j].transpose();
      const Eigen::MatrixXd weighted =
          centered.array().colwise() * resp.col(j).array().sqrt();
      covs[j] = weighted.transpose() * weighted / c;
      result.covariance_floored |= floor_cov(covs[j]);
    }
    weights /= weights.sum();

    if (ll - prev_ll < options.tolerance * (std::abs(ll) + 1.0) && iter > 0) break;
    prev_ll = ll;
  }

  result.prior = GmmPrior(layout, weights, std::move(means), std::move(covs));
  return result;
}

}  // namespace coin
