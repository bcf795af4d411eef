#include "coin/schedule.hpp"

#include <cmath>

#include "coin/errors.hpp"

namespace coin {

namespace {

// Raw cosine curve f(u) = cos^2((u + s) / (1 + s) * pi/2), normalized by f(0).
double raw_cosine(double u, double offset) {
  const double c0 = std::cos(offset / (1.0 + offset) * M_PI_2);
  const double c = std::cos((u + offset) / (1.0 + offset) * M_PI_2);
  return (c * c) / (c0 * c0);
}

// Time u_end at which the raw curve reaches alpha_bar_min.
double solve_u_end(double offset, double alpha_min) {
  const double c0 = std::cos(offset / (1.0 + offset) * M_PI_2);
  const double target = std::sqrt(alpha_min) * c0;
  return (2.0 / M_PI) * std::acos(target) * (1.0 + offset) - offset;
}

}  // namespace

DiffusionSchedule::DiffusionSchedule(const Params& params) : params_(params) {
  if (params_.table_resolution < 2) throw ConfigError("schedule table needs >= 2 nodes");
  if (!(params_.alpha_bar_min > 0.0 && params_.alpha_bar_min < 1.0)) {
    throw ConfigError("alpha_bar_min must lie in (0, 1)");
  }
  const double u_end = solve_u_end(params_.cosine_offset, params_.alpha_bar_min);
  const int n = params_.table_resolution;
  table_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    table_[i] = raw_cosine(t * u_end, params_.cosine_offset);
  }
  table_.front() = 1.0;
  table_.back() = params_.alpha_bar_min;
}

double DiffusionSchedule::alpha_bar(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("alpha_bar: t outside [0, 1]");
  const int n = static_cast<int>(table_.size());
  const double x = t * (n - 1);
  const int i = std::min(static_cast<int>(x), n - 2);
  const double frac = x - i;
  return table_[i] + frac * (table_[i + 1] - table_[i]);
}

double DiffusionSchedule::signal_scale(double t) const { return std::sqrt(alpha_bar(t)); }

double DiffusionSchedule::noise_scale(double t) const {
  return std::sqrt(1.0 - alpha_bar(t));
}

}  // namespace coin
