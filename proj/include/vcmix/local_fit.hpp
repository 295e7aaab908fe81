#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"

namespace vcmix {

/// Local design system at a fit point u0: row ij of X is the block row
/// (Gamma_ij, (U_ij - u0) Gamma_ij, ..., (U_ij - u0)^d Gamma_ij) and w
/// holds the kernel weights K_h(U_ij - u0). Rows are cluster-major, one
/// per observation; w is zero exactly outside the kernel support.
struct DesignBundle {
  double u0 = 0;
  int degree = 1;
  int s = 0;  // coefficient block width
  Eigen::MatrixXd X;
  Eigen::VectorXd w;
  Eigen::VectorXd y;
};

DesignBundle build_design(const ClusterDataset& data, double u0, int degree,
                          double h, const Kernel& kernel,
                          bool intercept = false);

/// Result of one local polynomial WLS fit.
///
/// theta holds theta-hat(u0) (length s); derivs[j-1] holds the j-th
/// derivative estimate theta-hat^(j)(u0), i.e. the degree-j coefficient
/// block rescaled by j!.
///
/// When requested, `smoother` keeps the first s rows of
/// (X'WX)^{-1} X'W restricted to the active (nonzero-weight)
/// observations, i.e. the stacked A_k and B rows mapping y to the
/// estimates; `active_rows` lists their global cluster-major indices.
struct LocalFit {
  double u0 = 0;
  int degree = 1;
  int s = 0;
  Eigen::VectorXd theta;
  std::vector<Eigen::VectorXd> derivs;
  bool regularized = false;
  long n_active = 0;
  Eigen::MatrixXd smoother;
  std::vector<long> active_rows;
};

/// Minimises the kernel-weighted sum of squares at u0. Degree-1 fits use
/// cfg.h, degree-3 fits the pilot bandwidth. Throws InsufficientLocalData
/// when fewer than min_local_obs_factor x columns observations carry
/// weight, SingularSystem when the normal matrix is numerically singular
/// and ridge_eps is zero.
LocalFit local_fit(const ClusterDataset& data, double u0, const FitConfig& cfg,
                   int degree = 1, bool need_smoother = false);

/// Functional coefficient estimates over the evaluation grid.
struct CoefficientCurves {
  std::vector<double> grid;
  std::vector<LocalFit> fits;
  double a = 0, b = 0;  // interval the grid spans
  CoefLayout layout;

  double value(int grid_idx, int flat) const {
    return fits[grid_idx].theta[flat];
  }
};

CoefficientCurves fit_curves(const ClusterDataset& data, const FitConfig& cfg,
                             bool need_smoother = false);

/// theta-hat at arbitrary points; exact mode refits, interp mode
/// interpolates linearly on the grid (exact fallback outside its range).
std::vector<Eigen::VectorXd> evaluate_at(const CoefficientCurves& curves,
                                         const ClusterDataset& data,
                                         const FitConfig& cfg,
                                         const std::vector<double>& points);

/// theta-hat at every observation point U_ij, plus a flag marking points
/// inside the fit interval [a, b] (the averaging set of the constant
/// estimator when trimming is on).
struct PointEvaluations {
  CoefLayout layout;
  double a = 0, b = 0;
  std::vector<std::vector<Eigen::VectorXd>> theta;  // [cluster][obs]
  std::vector<std::vector<char>> in_interval;
};

PointEvaluations evaluate_at_observations(const ClusterDataset& data,
                                          const FitConfig& cfg,
                                          const CoefficientCurves* curves = nullptr);

/// Constant-coefficient estimator: the average of the pointwise estimates
/// over the (included) observation points.
double constant_from_evals(const PointEvaluations& evals, const CoefId& id);
double estimate_constant(const ClusterDataset& data, const FitConfig& cfg,
                         const CoefId& id);

// ---------------------------------------------------------------------------
// Unstructured per-cluster baseline
// ---------------------------------------------------------------------------

struct UnstructuredOptions {
  GridSpec grid;
  bool intercept = false;  // absorb shared-over-U terms within the cluster
  double min_local_obs_factor = 2.0;
  double ridge_eps = 0.0;
  bool trim = true;
};

/// Per-cluster varying-coefficient fits of y on X, treating each a_i(.)
/// as a free function. a[i] is grid x p; ok[i][g] flags grid points where
/// cluster i had enough local support.
struct UnstructuredCurves {
  std::vector<double> grid;
  std::vector<Eigen::MatrixXd> a;
  std::vector<std::vector<char>> ok;
};

UnstructuredCurves fit_unstructured(const ClusterDataset& data, double h,
                                    const Kernel& kernel,
                                    const UnstructuredOptions& opts = {});

}  // namespace vcmix
