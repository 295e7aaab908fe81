#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"
#include "vcmix/local_fit.hpp"

namespace vcmix {

/// Per-cluster residual vectors
///   r_ij = y_ij - X_ij' a_i(U_ij) - Z_i' beta(U_ij)
/// with the functional coefficients evaluated at each observation point.
struct ResidualSet {
  std::vector<Eigen::VectorXd> r;
};

ResidualSet residuals_from_evals(const ClusterDataset& data,
                                 const PointEvaluations& evals);
ResidualSet residual_curves(const ClusterDataset& data,
                            const CoefficientCurves& curves,
                            const FitConfig& cfg);

/// Variance components: pooled-RSS sigma^2, the moment estimator of the
/// random-effect covariance (raw and PSD-projected) and the per-cluster
/// predicted effects. Clusters with n_i <= p or ill-conditioned x_i'x_i
/// are excluded; df counts included clusters only.
struct VarianceComponents {
  double sigma2 = 0;
  Eigen::MatrixXd Sigma_raw;
  Eigen::MatrixXd Sigma;
  std::vector<Eigen::VectorXd> e_hat;  // empty vector for excluded clusters
  std::vector<int> excluded;
  long df = 0;
};

/// sigma2-hat = sum_i r_i'(I - P_i) r_i / (n - m p) over included
/// clusters, P_i the projector onto the cluster design. Throws
/// NoUsableClusters.
double estimate_sigma2(const ClusterDataset& data, const ResidualSet& res);

/// Raw moment estimator
///   Sigma-hat = m^{-1} sum e-hat_i e-hat_i' - m^{-1} sigma2 sum (x_i'x_i)^{-1}.
Eigen::MatrixXd estimate_Sigma_raw(const ClusterDataset& data,
                                   const ResidualSet& res, double sigma2);

/// Least squares prediction e-hat_i = (x_i'x_i)^{-1} x_i' r_i; excluded
/// clusters yield an empty vector.
std::vector<Eigen::VectorXd> predict_random_effects(const ClusterDataset& data,
                                                    const ResidualSet& res);

/// Nearest-PSD projection by clipping negative eigenvalues.
Eigen::MatrixXd psd_project(const Eigen::MatrixXd& sym);

/// Full bundle: sigma2, Sigma (raw + projected), predicted effects, df.
VarianceComponents estimate_components(const ClusterDataset& data,
                                       const ResidualSet& res);

/// Clusters entering the variance-component estimators: n_i > p and
/// cond(x_i'x_i) <= 1e12.
bool cluster_usable(const ClusterDataset& data, int i);

}  // namespace vcmix
