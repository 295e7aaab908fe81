// Dense brute-force reference implementations used only by tests. These
// deliberately avoid the library's solve path: plain row-major arrays and
// Gauss-Jordan elimination, with every matrix (including var(Y|D))
// materialised in full.
#pragma once

#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"

namespace oracle {

struct Mat {
  long rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(long r, long c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(long r, long c) { return v[r * cols + c]; }
  double at(long r, long c) const { return v[r * cols + c]; }
};

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat inverse(const Mat& a);  // Gauss-Jordan with partial pivoting
std::vector<double> matvec(const Mat& a, const std::vector<double>& x);

// Unscaled local design at u0: X rows (Gamma, d Gamma, ..., d^deg Gamma),
// kernel weights w, responses y.
struct Design {
  Mat X;
  std::vector<double> w, y;
  int s = 0;
  int degree = 1;
};

Design build_design(const vcmix::ClusterDataset& data, double u0, int degree,
                    double h, const vcmix::Kernel& kernel, bool intercept);

// Full coefficient vector (X'WX)^{-1} X'W y.
std::vector<double> wls(const Design& d);

// (X'WX)^{-1} X'W, size cols x n.
Mat smoother(const Design& d);

// Conditional bias of theta-hat(u0) through the local-cubic pilot, dense.
std::vector<double> bias_at(const vcmix::ClusterDataset& data,
                            const vcmix::FitConfig& cfg, double u0);

// S var(Y|D) S' with the n x n var(Y|D) materialised, s x s.
Mat variance_at(const vcmix::ClusterDataset& data, const vcmix::FitConfig& cfg,
                double u0, double sigma2, const Mat& Sigma);

// Direct evaluation of the random-effect covariance moment estimator from
// per-cluster residuals (clusters with n_i <= p skipped).
Mat sigma_raw(const vcmix::ClusterDataset& data,
              const std::vector<std::vector<double>>& residuals, double sigma2);

}  // namespace oracle
