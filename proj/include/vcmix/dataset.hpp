#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace vcmix {

/// One observation (y, u, x) inside a cluster.
struct Observation {
  double y = 0;
  double u = 0;
  Eigen::VectorXd x;  // length p
};

/// A cluster: opaque id, cluster-level covariates z (length q) and its
/// observations.
struct Cluster {
  std::string id;
  Eigen::VectorXd z;
  std::vector<Observation> obs;

  int size() const { return static_cast<int>(obs.size()); }
};

/// Clustered dataset for the varying-coefficient mixed model
///   y_ij = X_ij' a_i(U_ij) + Z_i' beta(U_ij) + eps_ij,
///   a_i(u) = alpha_0(u) + sum_k alpha_k(u) z_ik + e_i.
///
/// Derived fields (n, u range, small-cluster flags) are filled by
/// validate_dataset; treat the dataset as immutable afterwards.
struct ClusterDataset {
  std::vector<Cluster> clusters;
  int p = 0;
  int q = 0;

  // filled by validate_dataset
  long n = 0;
  double u_min = 0;
  double u_max = 0;
  std::vector<long> row_offset;      // size m+1, cluster-major row index base
  std::vector<char> small_cluster;   // n_i <= p, excluded from variance components
  bool validated = false;

  int m() const { return static_cast<int>(clusters.size()); }
  int s() const { return (q + 1) * p + q; }
};

/// Checks shapes and finiteness, fills derived fields and flags clusters
/// with n_i <= p. Idempotent. Throws DimensionMismatch, NonFiniteValue or
/// DegenerateIndex.
ClusterDataset validate_dataset(ClusterDataset raw);

// ---------------------------------------------------------------------------
// Coefficient indexing
// ---------------------------------------------------------------------------

/// Layout of the stacked coefficient vector
///   theta(u) = (alpha_0', ..., alpha_q', [beta_0,] beta_1, ..., beta_q)'.
/// The optional intercept beta_0 is an extra constant cluster-level
/// regressor; it extends the beta block without entering the Z x X
/// interactions.
struct CoefLayout {
  int p = 0;
  int q = 0;
  bool intercept = false;

  int size() const { return (q + 1) * p + q + (intercept ? 1 : 0); }
  int alpha_offset(int k) const { return k * p; }
  int beta_offset() const { return (q + 1) * p + (intercept ? 1 : 0); }
  int intercept_offset() const { return (q + 1) * p; }
};

/// Identifies one scalar coefficient function: alpha_{kj} (k = 0..q,
/// j = 1..p), beta_j (j = 1..q) or the intercept beta_0.
struct CoefId {
  enum class Kind { Alpha, Beta, Intercept };
  Kind kind = Kind::Alpha;
  int k = 0;  // alpha block index
  int j = 0;  // 1-based component within block

  static CoefId alpha(int k, int j) { return {Kind::Alpha, k, j}; }
  static CoefId beta(int j) { return {Kind::Beta, 0, j}; }
  static CoefId intercept() { return {Kind::Intercept, 0, 0}; }

  int flat(const CoefLayout& lay) const;
  std::string label() const;  // "alpha_0_1", "beta_1", "beta_0"
  static CoefId parse(const std::string& label);

  bool operator==(const CoefId& o) const {
    return kind == o.kind && k == o.k && j == o.j;
  }
};

/// All coefficient ids in flat-index order.
std::vector<CoefId> all_coefficients(const CoefLayout& lay);

/// Design row Gamma_ij = (X', z_1 X', ..., z_q X', [1,] Z') of length
/// lay.size().
Eigen::VectorXd gamma_row(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                          const CoefLayout& lay);

}  // namespace vcmix
