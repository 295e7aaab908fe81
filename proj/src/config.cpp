#include "vcmix/config.hpp"

#include <cmath>

#include "vcmix/errors.hpp"

namespace vcmix {

void FitConfig::validate() const {
  if (!(h > 0)) throw ConfigError("bandwidth h must be positive");
  if (h_pilot < 0) throw ConfigError("h_pilot must be nonnegative");
  if (grid.count < 2) throw ConfigError("grid count must be at least 2");
  if (!(min_local_obs_factor >= 1))
    throw ConfigError("min_local_obs_factor must be at least 1");
  if (ridge_eps < 0) throw ConfigError("ridge_eps must be nonnegative");
  if (grid.interval && !(grid.interval->second > grid.interval->first))
    throw ConfigError("grid interval must have positive length");
  validate_kernel(kernel);
}

double FitConfig::pilot_bandwidth(long n) const {
  if (h_pilot > 0) return h_pilot;
  return h * std::pow(static_cast<double>(n), 1.0 / 5.0 - 1.0 / 7.0);
}

std::pair<double, double> FitConfig::fit_interval(const ClusterDataset& data) const {
  if (grid.interval) return *grid.interval;
  if (!trim) return {data.u_min, data.u_max};
  double a = data.u_min + kernel.c0 * h;
  double b = data.u_max - kernel.c0 * h;
  if (!(b > a))
    throw ConfigError("trimmed interval is empty: bandwidth too large for the U range");
  return {a, b};
}

std::vector<double> FitConfig::grid_points(const ClusterDataset& data) const {
  auto [a, b] = fit_interval(data);
  std::vector<double> g(grid.count);
  for (int i = 0; i < grid.count; ++i)
    g[i] = a + (b - a) * static_cast<double>(i) / (grid.count - 1);
  return g;
}

}  // namespace vcmix
