#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"

namespace vcmix {

/// Named coefficient truth function, parseable from a config string:
/// "sin2pi", "cos2pi", "sinpi", "zero", "const:c", "linear:a:b"
/// (a + b u), "quad:a:b:c" (a + b u + c u^2).
struct TruthFn {
  std::string spec = "zero";
  std::function<double(double)> fn = [](double) { return 0.0; };

  double operator()(double u) const { return fn(u); }
  static TruthFn parse(const std::string& spec);
  static TruthFn constant(double c);
};

/// Truth functions for every coefficient, flat-index order.
struct SimTruth {
  CoefLayout layout;
  std::vector<TruthFn> coef;

  /// sin(2 pi u) for the alpha_0 block, intercept and betas,
  /// cos(2 pi u) for alpha_1, sin(pi u) for alpha_2, sin(2 pi u) for
  /// further alpha blocks.
  static SimTruth defaults(int p, int q, bool intercept);

  double eval_flat(int idx, double u) const { return coef[idx](u); }
  Eigen::VectorXd theta(double u) const;
  void set(const CoefId& id, TruthFn f);
};

enum class ClusterSizeRule { NormalAbs, Fixed };

/// Monte Carlo design: X ~ N(0, I_p), Z ~ N(0, I_q), U ~ Uniform(0, 1),
/// e_i ~ N(0, Sigma), eps ~ N(0, sigma^2); cluster sizes floor(|2 xi| + 6)
/// or a fixed size.
struct SimConfig {
  int p = 3, q = 2, m = 100;
  ClusterSizeRule size_rule = ClusterSizeRule::NormalAbs;
  int fixed_size = 50;
  Eigen::MatrixXd Sigma;  // p x p
  double sigma = 0.5;
  bool intercept = true;
  SimTruth truth;
  std::uint64_t seed = 20090501;

  static SimConfig defaults();  // p=3, q=2, m=100, Sigma=0.25 I, sigma=0.5
  void validate() const;
  CoefLayout layout() const { return CoefLayout{p, q, intercept}; }
};

struct GeneratedData {
  ClusterDataset data;
  std::vector<Eigen::VectorXd> e;    // latent random effects
  std::vector<Eigen::VectorXd> eps;  // latent measurement errors
};

/// Deterministic given the seed; each cluster owns a split substream, so
/// generation is reproducible and order-independent.
GeneratedData generate_dataset(const SimConfig& sim, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

/// MISE of every functional coefficient (trapezoid over the evaluation
/// grid) plus the MSEs of sigma2-hat and the Sigma-hat entries, averaged
/// over replicates. Failed replicates are excluded and counted.
struct MiseReport {
  std::vector<std::string> coef;
  std::vector<double> mise;
  std::vector<std::pair<std::string, double>> varcomp_mse;
  int reps = 0;
  int failed = 0;
};

MiseReport mise_study(const SimConfig& sim, const FitConfig& cfg, int reps);

/// Structured-vs-unstructured efficiency sweep:
///   RMISE(a)    = sum_i MISE_1i / sum_i MISE_2i
/// with MISE_1 from the structured fit and MISE_2 from the per-cluster
/// free fit; the beta ratio uses the free-a_i joint fit as baseline.
struct RmiseReport {
  std::vector<double> bandwidths;
  std::vector<double> rmise_a;
  std::vector<double> rmise_beta;
  int reps = 0;
};

RmiseReport rmise_study(const SimConfig& sim, const FitConfig& cfg,
                        const std::vector<double>& bandwidths, int reps);

/// Empirical size and power of the constancy test and simultaneous band
/// coverage for one target coefficient. Power and coverage use the given
/// truth; size replaces the target's truth by a constant.
struct CalibrationReport {
  CoefId target;
  double alpha = 0.05;
  int reps = 0;
  double power = 0;
  double size = 0;
  double band_coverage = 0;
  int failed = 0;
};

CalibrationReport calibration_study(const SimConfig& sim, const FitConfig& cfg,
                                    const CoefId& target, double alpha,
                                    int reps);

/// sqrt(n)-rate check: Monte Carlo MSEs of the constant estimator and of
/// sigma2-hat at m and 2m clusters. The target coefficient's truth is
/// replaced by the given constant.
struct RateReport {
  CoefId target;
  double constant = 0;
  int reps = 0;
  int m1 = 0, m2 = 0;
  double mse_c_m1 = 0, mse_c_m2 = 0;
  double mse_s_m1 = 0, mse_s_m2 = 0;

  double ratio_c() const { return mse_c_m1 / mse_c_m2; }
  double ratio_s() const { return mse_s_m1 / mse_s_m2; }
};

RateReport rate_study(const SimConfig& sim, const FitConfig& cfg,
                      const CoefId& target, double constant, int reps);

}  // namespace vcmix
