#include "vcmix/variance.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "vcmix/errors.hpp"

namespace vcmix {

namespace {

Eigen::MatrixXd cluster_design(const ClusterDataset& data, int i) {
  const Cluster& c = data.clusters[i];
  Eigen::MatrixXd x(c.size(), data.p);
  for (int j = 0; j < c.size(); ++j) x.row(j) = c.obs[j].x.transpose();
  return x;
}

bool gram_usable(const Eigen::MatrixXd& xtx) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx,
                                                    Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  return lo > 0 && hi / lo <= 1e12;
}

}  // namespace

bool cluster_usable(const ClusterDataset& data, int i) {
  if (data.clusters[i].size() <= data.p) return false;
  Eigen::MatrixXd x = cluster_design(data, i);
  return gram_usable(x.transpose() * x);
}

ResidualSet residuals_from_evals(const ClusterDataset& data,
                                 const PointEvaluations& evals) {
  ResidualSet res;
  res.r.resize(data.m());
  for (int i = 0; i < data.m(); ++i) {
    const Cluster& c = data.clusters[i];
    res.r[i].resize(c.size());
    for (int j = 0; j < c.size(); ++j) {
      Eigen::VectorXd g = gamma_row(c.obs[j].x, c.z, evals.layout);
      res.r[i][j] = c.obs[j].y - g.dot(evals.theta[i][j]);
    }
  }
  return res;
}

ResidualSet residual_curves(const ClusterDataset& data,
                            const CoefficientCurves& curves,
                            const FitConfig& cfg) {
  return residuals_from_evals(data,
                              evaluate_at_observations(data, cfg, &curves));
}

double estimate_sigma2(const ClusterDataset& data, const ResidualSet& res) {
  double rss = 0;
  long n_inc = 0;
  int m_inc = 0;
  for (int i = 0; i < data.m(); ++i) {
    if (!cluster_usable(data, i)) continue;
    Eigen::MatrixXd x = cluster_design(data, i);
    const Eigen::VectorXd& r = res.r[i];
    Eigen::VectorXd xtr = x.transpose() * r;
    Eigen::VectorXd e = (x.transpose() * x).ldlt().solve(xtr);
    rss += r.squaredNorm() - xtr.dot(e);  // r'(I - P) r
    n_inc += x.rows();
    ++m_inc;
  }
  if (m_inc == 0)
    throw NoUsableClusters("sigma^2: every cluster excluded (n_i <= p or singular design)");
  return std::max(0.0, rss / static_cast<double>(
                           n_inc - static_cast<long>(m_inc) * data.p));
}

std::vector<Eigen::VectorXd> predict_random_effects(const ClusterDataset& data,
                                                    const ResidualSet& res) {
  std::vector<Eigen::VectorXd> e_hat(data.m());
  for (int i = 0; i < data.m(); ++i) {
    if (!cluster_usable(data, i)) continue;  // flagged by empty vector
    Eigen::MatrixXd x = cluster_design(data, i);
    e_hat[i] = (x.transpose() * x).ldlt().solve(x.transpose() * res.r[i]);
  }
  return e_hat;
}

Eigen::MatrixXd estimate_Sigma_raw(const ClusterDataset& data,
                                   const ResidualSet& res, double sigma2) {
  const int p = data.p;
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd correction = Eigen::MatrixXd::Zero(p, p);
  int m_inc = 0;
  for (int i = 0; i < data.m(); ++i) {
    if (!cluster_usable(data, i)) continue;
    Eigen::MatrixXd x = cluster_design(data, i);
    Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::VectorXd e = xtx.ldlt().solve(x.transpose() * res.r[i]);
    outer += e * e.transpose();
    correction += xtx.inverse();
    ++m_inc;
  }
  if (m_inc == 0) throw NoUsableClusters("Sigma: every cluster excluded");
  Eigen::MatrixXd raw = (outer - sigma2 * correction) / m_inc;
  return ((raw + raw.transpose()) / 2.0).eval();
}

Eigen::MatrixXd psd_project(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd out =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return ((out + out.transpose()) / 2.0).eval();
}

VarianceComponents estimate_components(const ClusterDataset& data,
                                       const ResidualSet& res) {
  VarianceComponents vc;
  vc.sigma2 = estimate_sigma2(data, res);
  vc.e_hat = predict_random_effects(data, res);
  vc.Sigma_raw = estimate_Sigma_raw(data, res, vc.sigma2);
  vc.Sigma = psd_project(vc.Sigma_raw);
  long n_inc = 0;
  int m_inc = 0;
  for (int i = 0; i < data.m(); ++i) {
    if (vc.e_hat[i].size() == 0) {
      vc.excluded.push_back(i);
    } else {
      n_inc += data.clusters[i].size();
      ++m_inc;
    }
  }
  vc.df = n_inc - static_cast<long>(m_inc) * data.p;
  return vc;
}

}  // namespace vcmix
