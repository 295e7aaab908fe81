#include "vcmix/inference.hpp"

#include <algorithm>
#include <cmath>

#include "vcmix/errors.hpp"
#include "vcmix/parallel.hpp"

namespace vcmix {

namespace {

std::pair<int, int> row_to_cluster(const ClusterDataset& data, long row) {
  auto it = std::upper_bound(data.row_offset.begin(), data.row_offset.end(), row);
  int i = static_cast<int>(it - data.row_offset.begin()) - 1;
  return {i, static_cast<int>(row - data.row_offset[i])};
}

// Taylor remainder R-hat on the active rows of a degree-1 fit, built from
// pilot second and third derivatives.
Eigen::VectorXd remainder_vector(const ClusterDataset& data,
                                 const CoefLayout& lay,
                                 const LocalFit& main_fit,
                                 const Eigen::VectorXd& theta2,
                                 const Eigen::VectorXd& theta3) {
  Eigen::VectorXd rhat(main_fit.n_active);
  for (long r = 0; r < main_fit.n_active; ++r) {
    auto [i, j] = row_to_cluster(data, main_fit.active_rows[r]);
    const Observation& o = data.clusters[i].obs[j];
    Eigen::VectorXd g = gamma_row(o.x, data.clusters[i].z, lay);
    double d = o.u - main_fit.u0;
    rhat[r] = d * d / 2.0 * g.dot(theta2) + d * d * d / 6.0 * g.dot(theta3);
  }
  return rhat;
}

Eigen::VectorXd bias_from_fits(const ClusterDataset& data,
                               const CoefLayout& lay, const LocalFit& main_fit,
                               const LocalFit& pilot_fit) {
  Eigen::VectorXd rhat = remainder_vector(data, lay, main_fit,
                                          pilot_fit.derivs[1],
                                          pilot_fit.derivs[2]);
  return main_fit.smoother * rhat;
}

Eigen::MatrixXd cov_from_fit(const ClusterDataset& data,
                             const LocalFit& main_fit, double sigma2,
                             const Eigen::MatrixXd& Sigma) {
  const Eigen::MatrixXd& S = main_fit.smoother;
  Eigen::MatrixXd V = sigma2 * (S * S.transpose());
  // Cluster blocks of var(Y|D): active rows are cluster-major, so each
  // cluster occupies one contiguous run of smoother columns.
  long lo = 0;
  const long na = main_fit.n_active;
  while (lo < na) {
    auto [i, j0] = row_to_cluster(data, main_fit.active_rows[lo]);
    long hi = lo;
    while (hi < na && main_fit.active_rows[hi] < data.row_offset[i + 1]) ++hi;
    Eigen::MatrixXd x_act(hi - lo, data.p);
    for (long r = lo; r < hi; ++r) {
      auto [ci, cj] = row_to_cluster(data, main_fit.active_rows[r]);
      x_act.row(r - lo) = data.clusters[ci].obs[cj].x.transpose();
    }
    Eigen::MatrixXd T = S.middleCols(lo, hi - lo) * x_act;  // s x p
    V += T * Sigma * T.transpose();
    lo = hi;
  }
  return ((V + V.transpose()) / 2.0).eval();
}

}  // namespace

double sup_rate(double h, double a, double b) {
  if (!(b > a)) throw InvalidInterval("interval [a, b] is empty");
  if (!(h < b - a))
    throw InvalidInterval("bandwidth must be smaller than the interval length");
  return -2.0 * std::log(h / (b - a));
}

double omega_n(const KernelMoments& moments, double h, double a, double b) {
  const double L = std::sqrt(sup_rate(h, a, b));
  if (moments.k_at_c0 == 0.0) {
    return L + std::log(moments.dk2 / (4.0 * moments.nu0 * M_PI)) / L;
  }
  double k2 = moments.k_at_c0 * moments.k_at_c0;
  return L + (std::log(k2 / (moments.nu0 * std::sqrt(M_PI))) +
              0.5 * std::log(std::log((b - a) / h))) /
                 L;
}

double gumbel_critical(double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw Error("alpha must be in (0, 1)");
  return -std::log(-0.5 * std::log(1.0 - alpha));
}

Eigen::VectorXd estimate_bias(const ClusterDataset& data, const FitConfig& cfg,
                              double u0) {
  LocalFit pilot = local_fit(data, u0, cfg, 3, false);
  LocalFit main_fit = local_fit(data, u0, cfg, 1, true);
  return bias_from_fits(data, cfg.layout(data), main_fit, pilot);
}

Eigen::MatrixXd estimate_variance(const ClusterDataset& data,
                                  const FitConfig& cfg, double u0,
                                  const VarianceComponents& vc) {
  LocalFit main_fit = local_fit(data, u0, cfg, 1, true);
  return cov_from_fit(data, main_fit, vc.sigma2, vc.Sigma);
}

InferenceGrid inference_on_grid(const ClusterDataset& data,
                                const FitConfig& cfg,
                                const CoefficientCurves& curves,
                                const VarianceComponents& vc) {
  InferenceGrid inf;
  inf.grid = curves.grid;
  inf.a = curves.a;
  inf.b = curves.b;
  inf.h = cfg.h;
  inf.moments = kernel_moments(cfg.kernel);
  const size_t G = curves.grid.size();
  inf.bias.resize(G);
  inf.cov.resize(G);
  const bool have_smoother =
      !curves.fits.empty() && curves.fits.front().smoother.size() > 0;
  parallel_for(static_cast<long>(G), [&](long g) {
    LocalFit refit;
    const LocalFit* main_fit = &curves.fits[g];
    if (!have_smoother) {
      refit = local_fit(data, curves.grid[g], cfg, 1, true);
      main_fit = &refit;
    }
    LocalFit pilot = local_fit(data, curves.grid[g], cfg, 3, false);
    inf.bias[g] = bias_from_fits(data, curves.layout, *main_fit, pilot);
    inf.cov[g] = cov_from_fit(data, *main_fit, vc.sigma2, vc.Sigma);
  });
  return inf;
}

BandResult confidence_band(const CoefficientCurves& curves,
                           const InferenceGrid& inf, const CoefId& id,
                           double level, bool bias_correction) {
  if (!(level > 0 && level < 1)) throw Error("band level must be in (0, 1)");
  const int flat = id.flat(curves.layout);
  BandResult band;
  band.id = id;
  band.level = level;
  band.a = inf.a;
  band.b = inf.b;
  band.omega = omega_n(inf.moments, inf.h, inf.a, inf.b);
  const double L = std::sqrt(sup_rate(inf.h, inf.a, inf.b));
  band.multiplier = std::max(
      0.0, band.omega + (std::log(2.0) - std::log(-std::log(level))) / L);
  band.u = inf.grid;
  const size_t G = inf.grid.size();
  band.estimate.resize(G);
  band.bias.resize(G);
  band.center.resize(G);
  band.se.resize(G);
  band.halfwidth.resize(G);
  for (size_t g = 0; g < G; ++g) {
    band.estimate[g] = curves.fits[g].theta[flat];
    band.bias[g] = inf.bias[g][flat];
    band.center[g] = band.estimate[g] -
                     (bias_correction ? band.bias[g] : 0.0);
    band.se[g] = std::sqrt(std::max(0.0, inf.cov[g](flat, flat)));
    band.halfwidth[g] = band.multiplier * band.se[g];
  }
  return band;
}

namespace {

TestResult sup_test(const CoefficientCurves& curves, const InferenceGrid& inf,
                    const CoefId& id, const std::vector<double>& null_values,
                    double alpha, TestResult::Null kind) {
  const int flat = id.flat(curves.layout);
  TestResult t;
  t.null_kind = kind;
  t.id = id;
  t.alpha = alpha;
  t.omega = omega_n(inf.moments, inf.h, inf.a, inf.b);
  t.critical = gumbel_critical(alpha);
  const double L = std::sqrt(sup_rate(inf.h, inf.a, inf.b));

  double sup = -1;
  size_t arg = 0;
  for (size_t g = 0; g < inf.grid.size(); ++g) {
    double num = std::abs(curves.fits[g].theta[flat] - null_values[g] -
                          inf.bias[g][flat]);
    double se = std::sqrt(std::max(0.0, inf.cov[g](flat, flat)));
    double dev;
    if (se > 0)
      dev = num / se;
    else
      dev = num == 0 ? 0.0 : std::numeric_limits<double>::infinity();
    if (dev > sup) {
      sup = dev;
      arg = g;
    }
  }
  t.statistic = L * (sup - t.omega);
  t.p_value = -std::expm1(-2.0 * std::exp(-t.statistic));
  t.reject = t.statistic > t.critical;
  t.sup_u = inf.grid[arg];
  return t;
}

}  // namespace

TestResult test_specified(const CoefficientCurves& curves,
                          const InferenceGrid& inf, const CoefId& id,
                          const std::function<double(double)>& null_fn,
                          double alpha) {
  std::vector<double> nulls(inf.grid.size());
  for (size_t g = 0; g < inf.grid.size(); ++g) nulls[g] = null_fn(inf.grid[g]);
  return sup_test(curves, inf, id, nulls, alpha, TestResult::Null::Specified);
}

TestResult test_constancy_with(const CoefficientCurves& curves,
                               const InferenceGrid& inf, const CoefId& id,
                               double c_hat, double alpha) {
  std::vector<double> nulls(inf.grid.size(), c_hat);
  TestResult t =
      sup_test(curves, inf, id, nulls, alpha, TestResult::Null::Constancy);
  t.constant = c_hat;
  return t;
}

TestResult test_constancy(const CoefficientCurves& curves,
                          const InferenceGrid& inf, const ClusterDataset& data,
                          const FitConfig& cfg, const CoefId& id,
                          double alpha) {
  return test_constancy_with(curves, inf, id, estimate_constant(data, cfg, id),
                             alpha);
}

std::vector<ConstantEstimate> jackknife_constants(
    const ClusterDataset& data, const FitConfig& cfg,
    const std::vector<CoefId>& ids) {
  const int m = data.m();
  if (m < 2)
    throw TooFewClusters("jackknife needs at least 2 clusters");

  PointEvaluations full = evaluate_at_observations(data, cfg);
  std::vector<ConstantEstimate> out(ids.size());
  for (size_t t = 0; t < ids.size(); ++t) {
    out[t].id = ids[t];
    out[t].value = constant_from_evals(full, ids[t]);
  }

  // Fit interval held fixed at the full-data interval across replicates.
  FitConfig rep_cfg = cfg;
  rep_cfg.grid.interval = cfg.fit_interval(data);

  Eigen::MatrixXd reps(m, static_cast<int>(ids.size()));
  parallel_for(m, [&](long i) {
    ClusterDataset reduced;
    reduced.clusters.reserve(m - 1);
    for (int k = 0; k < m; ++k)
      if (k != i) reduced.clusters.push_back(data.clusters[k]);
    reduced = validate_dataset(std::move(reduced));
    PointEvaluations ev = evaluate_at_observations(reduced, rep_cfg);
    for (size_t t = 0; t < ids.size(); ++t)
      reps(i, static_cast<int>(t)) = constant_from_evals(ev, ids[t]);
  });

  for (size_t t = 0; t < ids.size(); ++t) {
    double mean = reps.col(static_cast<int>(t)).mean();
    double ss = (reps.col(static_cast<int>(t)).array() - mean).square().sum();
    out[t].se = std::sqrt((m - 1.0) / m * ss);
  }
  return out;
}

Eigen::MatrixXd cluster_effect(const CoefficientCurves& curves,
                               const std::map<int, double>& constants,
                               const Eigen::VectorXd& z,
                               const Eigen::VectorXd* e_hat) {
  const CoefLayout& lay = curves.layout;
  if (static_cast<int>(z.size()) != lay.q)
    throw DimensionMismatch("cluster_effect: z has length " +
                            std::to_string(z.size()) + ", expected " +
                            std::to_string(lay.q));
  if (e_hat && static_cast<int>(e_hat->size()) != lay.p)
    throw DimensionMismatch("cluster_effect: e-hat has wrong length");

  auto value = [&](int flat, size_t g) {
    auto it = constants.find(flat);
    return it != constants.end() ? it->second : curves.fits[g].theta[flat];
  };

  const size_t G = curves.grid.size();
  Eigen::MatrixXd eff(G, lay.p);
  for (size_t g = 0; g < G; ++g)
    for (int j = 1; j <= lay.p; ++j) {
      double v = value(CoefId::alpha(0, j).flat(lay), g);
      for (int k = 1; k <= lay.q; ++k)
        v += value(CoefId::alpha(k, j).flat(lay), g) * z[k - 1];
      if (e_hat) v += (*e_hat)[j - 1];
      eff(g, j - 1) = v;
    }
  return eff;
}

}  // namespace vcmix
