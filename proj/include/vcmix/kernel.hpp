#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vcmix {

enum class KernelKind { Epanechnikov, Uniform, Triweight, Tabulated };

/// Symmetric density kernel with compact support [-c0, c0].
///
/// Built-in kernels are the canonical [-1, 1] shapes rescaled to c0:
///   Epanechnikov  0.75 (1 - t^2)  for |t| <= 1
///   Uniform       0.5             for |t| <= 1
///   Triweight     35/32 (1 - t^2)^3
/// A tabulated kernel is given as (t, K(t)) nodes on [-c0, c0] and
/// evaluated by linear interpolation.
struct Kernel {
  KernelKind kind = KernelKind::Epanechnikov;
  double c0 = 1.0;
  std::vector<std::pair<double, double>> table;  // tabulated nodes, sorted by t

  static Kernel epanechnikov(double c0 = 1.0);
  static Kernel uniform(double c0 = 1.0);
  static Kernel triweight(double c0 = 1.0);
  static Kernel tabulated(std::vector<std::pair<double, double>> nodes);

  /// Parses "epanechnikov" | "uniform" | "triweight".
  static Kernel parse(const std::string& name);
  std::string name() const;
};

/// Moment constants of a kernel.
///   mu2     = int t^2 K(t) dt
///   nu0     = int K(t)^2 dt
///   dk2     = int K'(t)^2 dt   (infinite when K jumps at the support edge)
///   k_at_c0 = K(c0)
struct KernelMoments {
  double mu2 = 0;
  double nu0 = 0;
  double dk2 = 0;
  double k_at_c0 = 0;
};

/// K(t); zero outside [-c0, c0].
double kernel_eval(const Kernel& kernel, double t);

/// Moment constants, exact for built-ins, segment-exact for tabulated
/// kernels. Throws QuadratureFailure for malformed tables (asymmetric,
/// unnormalised, negative or unsorted).
KernelMoments kernel_moments(const Kernel& kernel);

/// Checks the density contract (normalisation, symmetry, nonnegativity,
/// compact support). Throws QuadratureFailure on violation.
void validate_kernel(const Kernel& kernel);

}  // namespace vcmix
