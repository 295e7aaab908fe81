#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "vcmix/dataset.hpp"
#include "vcmix/kernel.hpp"

namespace vcmix {

/// How evaluate_at obtains theta-hat at off-grid points.
///   Exact  - run a fresh local fit at each requested point (default);
///   Interp - linear interpolation on the grid inside its range, exact
///            fits outside it.
enum class EvalMode { Exact, Interp };

/// Evaluation grid: `count` equally spaced points on an interval. When no
/// explicit interval is given the fit interval rule of FitConfig applies.
struct GridSpec {
  int count = 101;
  std::optional<std::pair<double, double>> interval;
};

/// Configuration of one model fit.
struct FitConfig {
  double h = 0.1;                     // bandwidth, units of u
  Kernel kernel = Kernel::epanechnikov();
  GridSpec grid;
  double h_pilot = 0;                 // 0 => h * n^(1/5 - 1/7)
  double min_local_obs_factor = 2.0;  // support rows required per column
  double ridge_eps = 0.0;             // 0 disables the ridge fallback
  bool trim = true;                   // restrict grid to the interior interval
  bool intercept = false;             // include the beta_0 column
  EvalMode eval_mode = EvalMode::Exact;

  void validate() const;  // throws ConfigError

  CoefLayout layout(const ClusterDataset& data) const {
    return CoefLayout{data.p, data.q, intercept};
  }

  /// Pilot bandwidth for the local-cubic fit; the default turns a
  /// rate-optimal h = O(n^{-1/5}) into the O(n^{-1/7}) pilot order.
  double pilot_bandwidth(long n) const;

  /// [a, b] the grid lives on: the explicit interval when given, else
  /// [u_min + c0 h, u_max - c0 h] (trim on) or [u_min, u_max] (trim off).
  std::pair<double, double> fit_interval(const ClusterDataset& data) const;

  std::vector<double> grid_points(const ClusterDataset& data) const;
};

}  // namespace vcmix
