#pragma once

#include <vector>

namespace coin {

// Cumulative signal-retention schedule alpha_bar(t) on t in [0, 1].
//
// The continuous cosine schedule is evaluated on a rescaled time axis chosen
// so that alpha_bar(0) = 1 and alpha_bar(1) = alpha_bar_min exactly, which
// keeps the map strictly decreasing (no terminal clamp plateau). Values are
// tabulated at `table_resolution` nodes and linearly interpolated.
class DiffusionSchedule {
 public:
  struct Params {
    int table_resolution = 1000;
    double cosine_offset = 0.008;
    double alpha_bar_min = 1e-5;
  };

  DiffusionSchedule() : DiffusionSchedule(Params{}) {}
  explicit DiffusionSchedule(const Params& params);

  // alpha_bar at t in [0, 1]. Throws ConfigError outside the domain.
  double alpha_bar(double t) const;

  double signal_scale(double t) const;  // sqrt(alpha_bar)
  double noise_scale(double t) const;   // sqrt(1 - alpha_bar)

  const Params& params() const { return params_; }
  const std::vector<double>& table() const { return table_; }

 private:
  Params params_;
  std::vector<double> table_;  // table_[i] = alpha_bar(i / (n - 1))
};

}  // namespace coin
