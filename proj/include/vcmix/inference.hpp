#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"
#include "vcmix/local_fit.hpp"
#include "vcmix/variance.hpp"

namespace vcmix {

/// Centering sequence of the Gumbel limit for the sup-norm deviation.
/// The branch depends on whether the kernel vanishes at its support
/// boundary: K(c0) = 0 uses int K'(t)^2 dt, K(c0) != 0 uses K^2(c0) and a
/// log-log term. Throws InvalidInterval when h >= b - a.
double omega_n(const KernelMoments& moments, double h, double a, double b);

/// -2 log(h/(b-a)), the squared normalising rate of the sup statistic.
double sup_rate(double h, double a, double b);

/// Asymptotic critical value c_alpha = -log(-0.5 log(1 - alpha)).
double gumbel_critical(double alpha);

/// Plug-in conditional bias of theta-hat(u0): the degree-1 smoother rows
/// applied to the Taylor remainder built from a local-cubic pilot fit.
Eigen::VectorXd estimate_bias(const ClusterDataset& data, const FitConfig& cfg,
                              double u0);

/// Plug-in conditional covariance of theta-hat(u0):
///   S var(Y|D) S',  var(Y|D) = sigma2 I + blockdiag(x_i Sigma x_i'),
/// computed blockwise (the n x n matrix is never materialised).
Eigen::MatrixXd estimate_variance(const ClusterDataset& data,
                                  const FitConfig& cfg, double u0,
                                  const VarianceComponents& vc);

/// Bias and covariance of theta-hat on the whole evaluation grid, reusing
/// the curve fits' smoother rows when present. Carries the bandwidth and
/// kernel moments the band/test machinery needs for omega_n.
struct InferenceGrid {
  std::vector<double> grid;
  double a = 0, b = 0;
  double h = 0;
  KernelMoments moments;
  std::vector<Eigen::VectorXd> bias;  // per grid point, s entries
  std::vector<Eigen::MatrixXd> cov;   // per grid point, s x s
};

InferenceGrid inference_on_grid(const ClusterDataset& data,
                                const FitConfig& cfg,
                                const CoefficientCurves& curves,
                                const VarianceComponents& vc);

/// Simultaneous confidence band for one coefficient: bias-corrected
/// centers with half-width
///   (omega_n + [log 2 - log(-log(level))] / sup_rate^{1/2}) * SE(u).
struct BandResult {
  CoefId id;
  double level = 0.95;
  double omega = 0, multiplier = 0;
  double a = 0, b = 0;
  std::vector<double> u, estimate, bias, center, se, halfwidth;
};

BandResult confidence_band(const CoefficientCurves& curves,
                           const InferenceGrid& inf, const CoefId& id,
                           double level, bool bias_correction = true);

/// Sup-norm test result. The statistic is
///   sup_rate^{1/2} { sup_u |(est - null - bias)/SE| - omega_n },
/// the p-value comes from the Gumbel limit exp(-2 exp(-x)); rejection at
/// statistic > c_alpha is equivalent to p < alpha.
struct TestResult {
  enum class Null { Specified, Constancy };
  Null null_kind = Null::Specified;
  CoefId id;
  double alpha = 0.05;
  double statistic = 0;
  double omega = 0;
  double critical = 0;
  double p_value = 1;
  bool reject = false;
  double sup_u = 0;      // grid point attaining the sup
  double constant = 0;   // plugged-in C-hat for constancy tests
};

TestResult test_specified(const CoefficientCurves& curves,
                          const InferenceGrid& inf, const CoefId& id,
                          const std::function<double(double)>& null_fn,
                          double alpha);

TestResult test_constancy(const CoefficientCurves& curves,
                          const InferenceGrid& inf, const ClusterDataset& data,
                          const FitConfig& cfg, const CoefId& id, double alpha);

/// Constancy test with a precomputed constant estimate (shared
/// observation-point evaluations).
TestResult test_constancy_with(const CoefficientCurves& curves,
                               const InferenceGrid& inf, const CoefId& id,
                               double c_hat, double alpha);

/// Constant estimate with its leave-one-cluster-out jackknife SE.
struct ConstantEstimate {
  CoefId id;
  double value = 0;
  double se = 0;
};

/// Jackknife over clusters: SE = sqrt((m-1)/m * sum (C_(-i) - mean)^2).
/// One sweep serves all requested coefficients. Throws TooFewClusters for
/// m < 2.
std::vector<ConstantEstimate> jackknife_constants(
    const ClusterDataset& data, const FitConfig& cfg,
    const std::vector<CoefId>& ids);

/// Composed per-variable effect functions on the curve grid:
///   a_j(u) = alpha_0j(u) + sum_k alpha_kj(u) z_k (+ e_j),
/// substituting constants for the coefficients listed in `constants`
/// (flat index -> C-hat). Returns grid x p.
Eigen::MatrixXd cluster_effect(const CoefficientCurves& curves,
                               const std::map<int, double>& constants,
                               const Eigen::VectorXd& z,
                               const Eigen::VectorXd* e_hat = nullptr);

}  // namespace vcmix
