#include "vcmix/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vcmix/errors.hpp"

namespace vcmix {

namespace {

// Canonical shapes on [-1, 1].
double epan(double t) { return std::abs(t) <= 1.0 ? 0.75 * (1.0 - t * t) : 0.0; }
double unif(double t) { return std::abs(t) <= 1.0 ? 0.5 : 0.0; }
double triw(double t) {
  if (std::abs(t) > 1.0) return 0.0;
  double v = 1.0 - t * t;
  return 35.0 / 32.0 * v * v * v;
}

double table_eval(const Kernel& k, double t) {
  const auto& tab = k.table;
  if (t < tab.front().first || t > tab.back().first) return 0.0;
  auto it = std::upper_bound(
      tab.begin(), tab.end(), t,
      [](double v, const std::pair<double, double>& node) { return v < node.first; });
  if (it == tab.begin()) return tab.front().second;
  if (it == tab.end()) return tab.back().second;
  auto lo = *(it - 1);
  auto hi = *it;
  double f = (t - lo.first) / (hi.first - lo.first);
  return lo.second + f * (hi.second - lo.second);
}

// Exact integrals of the linear interpolant over one segment.
struct SegmentMoments {
  double mass = 0, mu2 = 0, nu0 = 0, dk2 = 0;
};

SegmentMoments segment_moments(double t0, double k0, double t1, double k1) {
  SegmentMoments m;
  double dt = t1 - t0;
  double slope = (k1 - k0) / dt;
  // K(t) = k0 + slope (t - t0) on [t0, t1]
  m.mass = 0.5 * (k0 + k1) * dt;
  // int t^2 (a + b t) dt with a = k0 - slope t0, b = slope
  double a = k0 - slope * t0;
  auto ipow = [&](int e) {
    return (std::pow(t1, e + 1) - std::pow(t0, e + 1)) / (e + 1);
  };
  m.mu2 = a * ipow(2) + slope * ipow(3);
  // int (a + b t)^2 dt = a^2 dt + 2ab int t + b^2 int t^2
  m.nu0 = a * a * dt + 2.0 * a * slope * ipow(1) + slope * slope * ipow(2);
  m.dk2 = slope * slope * dt;
  return m;
}

}  // namespace

Kernel Kernel::epanechnikov(double c0) { return {KernelKind::Epanechnikov, c0, {}}; }
Kernel Kernel::uniform(double c0) { return {KernelKind::Uniform, c0, {}}; }
Kernel Kernel::triweight(double c0) { return {KernelKind::Triweight, c0, {}}; }

Kernel Kernel::tabulated(std::vector<std::pair<double, double>> nodes) {
  Kernel k;
  k.kind = KernelKind::Tabulated;
  k.table = std::move(nodes);
  k.c0 = k.table.empty() ? 0.0 : std::abs(k.table.back().first);
  validate_kernel(k);
  return k;
}

Kernel Kernel::parse(const std::string& name) {
  if (name == "epanechnikov") return epanechnikov();
  if (name == "uniform") return uniform();
  if (name == "triweight") return triweight();
  throw ConfigError("unknown kernel '" + name + "'");
}

std::string Kernel::name() const {
  switch (kind) {
    case KernelKind::Epanechnikov: return "epanechnikov";
    case KernelKind::Uniform: return "uniform";
    case KernelKind::Triweight: return "triweight";
    case KernelKind::Tabulated: return "tabulated";
  }
  return "?";
}

double kernel_eval(const Kernel& kernel, double t) {
  if (!std::isfinite(t)) throw Error("kernel_eval: t must be finite");
  if (std::abs(t) > kernel.c0) return 0.0;
  switch (kernel.kind) {
    case KernelKind::Epanechnikov: return epan(t / kernel.c0) / kernel.c0;
    case KernelKind::Uniform: return unif(t / kernel.c0) / kernel.c0;
    case KernelKind::Triweight: return triw(t / kernel.c0) / kernel.c0;
    case KernelKind::Tabulated: return table_eval(kernel, t);
  }
  return 0.0;
}

void validate_kernel(const Kernel& kernel) {
  if (!(kernel.c0 > 0))
    throw QuadratureFailure("kernel support half-width must be positive");
  if (kernel.kind != KernelKind::Tabulated) return;

  const auto& tab = kernel.table;
  if (tab.size() < 3)
    throw QuadratureFailure("tabulated kernel needs at least 3 nodes");
  double mass = 0;
  for (size_t i = 0; i < tab.size(); ++i) {
    if (!std::isfinite(tab[i].first) || !std::isfinite(tab[i].second))
      throw QuadratureFailure("tabulated kernel has non-finite node");
    if (tab[i].second < 0)
      throw QuadratureFailure("tabulated kernel has negative value");
    if (i > 0) {
      if (tab[i].first <= tab[i - 1].first)
        throw QuadratureFailure("tabulated kernel nodes must be strictly increasing");
      mass += segment_moments(tab[i - 1].first, tab[i - 1].second, tab[i].first,
                              tab[i].second).mass;
    }
  }
  if (std::abs(tab.front().first + tab.back().first) > 1e-12)
    throw QuadratureFailure("tabulated kernel support must be symmetric");
  // symmetry of values: K(t) = K(-t) at every node
  for (const auto& [t, v] : tab) {
    if (std::abs(table_eval(kernel, -t) - v) > 1e-10)
      throw QuadratureFailure("tabulated kernel is not symmetric");
  }
  if (std::abs(mass - 1.0) > 1e-10)
    throw QuadratureFailure("tabulated kernel does not integrate to 1");
}

KernelMoments kernel_moments(const Kernel& kernel) {
  validate_kernel(kernel);
  KernelMoments mo;
  const double c = kernel.c0;
  switch (kernel.kind) {
    // canonical values rescaled to [-c0, c0]
    case KernelKind::Epanechnikov:
      mo = {0.2 * c * c, 0.6 / c, 1.5 / (c * c * c), 0.0};
      break;
    case KernelKind::Uniform:
      mo = {c * c / 3.0, 0.5 / c, std::numeric_limits<double>::infinity(),
            0.5 / c};
      break;
    case KernelKind::Triweight:
      mo = {c * c / 9.0, 350.0 / 429.0 / c, 35.0 / 11.0 / (c * c * c), 0.0};
      break;
    case KernelKind::Tabulated: {
      const auto& tab = kernel.table;
      for (size_t i = 1; i < tab.size(); ++i) {
        auto sm = segment_moments(tab[i - 1].first, tab[i - 1].second,
                                  tab[i].first, tab[i].second);
        mo.mu2 += sm.mu2;
        mo.nu0 += sm.nu0;
        mo.dk2 += sm.dk2;
      }
      mo.k_at_c0 = tab.back().second;
      if (mo.k_at_c0 != 0.0)
        mo.dk2 = std::numeric_limits<double>::infinity();
      break;
    }
  }
  if (!(mo.mu2 > 0) || !(mo.nu0 > 0))
    throw QuadratureFailure("degenerate kernel moments");
  return mo;
}

}  // namespace vcmix
