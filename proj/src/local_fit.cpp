#include "vcmix/local_fit.hpp"

#include <algorithm>
#include <cmath>

#include "vcmix/errors.hpp"
#include "vcmix/parallel.hpp"

namespace vcmix {

namespace {

double factorial(int j) {
  double f = 1;
  for (int i = 2; i <= j; ++i) f *= i;
  return f;
}

// Observations with nonzero kernel weight at u0, cluster-major order.
struct ActiveSet {
  std::vector<long> rows;                    // global row ids
  std::vector<std::pair<int, int>> idx;      // (cluster, obs)
  Eigen::VectorXd w, d, y;                   // weight, U - u0, response
};

ActiveSet gather_active(const ClusterDataset& data, double u0, double h,
                        const Kernel& kernel) {
  ActiveSet act;
  const double support = kernel.c0 * h;
  for (int i = 0; i < data.m(); ++i) {
    const Cluster& c = data.clusters[i];
    for (int j = 0; j < c.size(); ++j) {
      double d = c.obs[j].u - u0;
      if (std::abs(d) > support) continue;
      double w = kernel_eval(kernel, d / h) / h;
      if (w <= 0.0) continue;
      act.rows.push_back(data.row_offset[i] + j);
      act.idx.emplace_back(i, j);
    }
  }
  const long na = static_cast<long>(act.rows.size());
  act.w.resize(na);
  act.d.resize(na);
  act.y.resize(na);
  for (long r = 0; r < na; ++r) {
    auto [i, j] = act.idx[r];
    const Observation& o = data.clusters[i].obs[j];
    act.d[r] = o.u - u0;
    act.w[r] = kernel_eval(kernel, act.d[r] / h) / h;
    act.y[r] = o.y;
  }
  return act;
}

}  // namespace

DesignBundle build_design(const ClusterDataset& data, double u0, int degree,
                          double h, const Kernel& kernel, bool intercept) {
  if (!data.validated) throw Error("build_design: dataset not validated");
  if (degree != 1 && degree != 3)
    throw Error("build_design: degree must be 1 or 3");
  if (!(h > 0)) throw Error("build_design: h must be positive");

  const CoefLayout lay{data.p, data.q, intercept};
  const int s = lay.size();
  DesignBundle b;
  b.u0 = u0;
  b.degree = degree;
  b.s = s;
  b.X.resize(data.n, (degree + 1) * s);
  b.w.resize(data.n);
  b.y.resize(data.n);

  const double support = kernel.c0 * h;
  long r = 0;
  for (const Cluster& c : data.clusters) {
    for (const Observation& o : c.obs) {
      Eigen::VectorXd g = gamma_row(o.x, c.z, lay);
      double d = o.u - u0;
      double pow_d = 1.0;
      for (int deg = 0; deg <= degree; ++deg) {
        b.X.row(r).segment(deg * s, s) = pow_d * g.transpose();
        pow_d *= d;
      }
      b.w[r] = std::abs(d) > support ? 0.0 : kernel_eval(kernel, d / h) / h;
      b.y[r] = o.y;
      ++r;
    }
  }
  return b;
}

LocalFit local_fit(const ClusterDataset& data, double u0, const FitConfig& cfg,
                   int degree, bool need_smoother) {
  if (!data.validated) throw Error("local_fit: dataset not validated");
  const CoefLayout lay = cfg.layout(data);
  const int s = lay.size();
  const int cols = (degree + 1) * s;
  const double h = degree == 3 ? cfg.pilot_bandwidth(data.n) : cfg.h;

  ActiveSet act = gather_active(data, u0, h, cfg.kernel);
  const long na = static_cast<long>(act.rows.size());
  if (na < static_cast<long>(std::ceil(cfg.min_local_obs_factor * cols)))
    throw InsufficientLocalData(
        "local fit at u0=" + std::to_string(u0) + ": " + std::to_string(na) +
        " observations in the kernel support, need " +
        std::to_string(static_cast<long>(std::ceil(cfg.min_local_obs_factor * cols))));

  // Design in the rescaled parameterisation t = (U - u0)/h; block j then
  // carries theta^(j) h^j / j!, which keeps the normal matrix condition
  // independent of h.
  Eigen::MatrixXd G(na, cols);
  Eigen::VectorXd sqw = act.w.cwiseSqrt();
  for (long r = 0; r < na; ++r) {
    auto [i, j] = act.idx[r];
    const Observation& o = data.clusters[i].obs[j];
    Eigen::VectorXd g = gamma_row(o.x, data.clusters[i].z, lay);
    double t = act.d[r] / h;
    double pow_t = 1.0;
    for (int deg = 0; deg <= degree; ++deg) {
      G.row(r).segment(deg * s, s) = pow_t * g.transpose();
      pow_t *= t;
    }
  }
  Eigen::MatrixXd Gw = sqw.asDiagonal() * G;
  Eigen::MatrixXd A(cols, cols);
  A.setZero();
  A.selfadjointView<Eigen::Lower>().rankUpdate(Gw.transpose());
  A = A.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd rhs = Gw.transpose() * (sqw.cwiseProduct(act.y));

  LocalFit fit;
  fit.u0 = u0;
  fit.degree = degree;
  fit.s = s;
  fit.n_active = na;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  auto condition_bad = [&](const Eigen::LDLT<Eigen::MatrixXd>& f) {
    if (f.info() != Eigen::Success) return true;
    Eigen::VectorXd dv = f.vectorD().cwiseAbs();
    double dmax = dv.maxCoeff();
    double dmin = dv.minCoeff();
    return !(dmin > 0) || dmax / dmin > 1e12;
  };
  if (condition_bad(ldlt)) {
    if (cfg.ridge_eps <= 0)
      throw SingularSystem("local fit at u0=" + std::to_string(u0) +
                           ": normal matrix numerically singular");
    A.diagonal().array() += cfg.ridge_eps * A.trace() / cols;
    ldlt.compute(A);
    fit.regularized = true;
  }

  Eigen::VectorXd theta_scaled = ldlt.solve(rhs);
  if (!theta_scaled.allFinite())
    throw SingularSystem("local fit at u0=" + std::to_string(u0) +
                         ": solve produced non-finite coefficients");

  fit.theta = theta_scaled.segment(0, s);
  fit.derivs.resize(degree);
  double hj = 1.0;
  for (int j = 1; j <= degree; ++j) {
    hj *= h;
    fit.derivs[j - 1] = theta_scaled.segment(j * s, s) * (factorial(j) / hj);
  }

  if (need_smoother) {
    // First s rows of (X'WX)^{-1} X'W on the active columns; invariant
    // under the t-rescaling, so computed in the scaled basis.
    Eigen::MatrixXd M = ldlt.solve(Gw.transpose());
    fit.smoother = M.topRows(s) * sqw.asDiagonal();
    fit.active_rows = std::move(act.rows);
  }
  return fit;
}

CoefficientCurves fit_curves(const ClusterDataset& data, const FitConfig& cfg,
                             bool need_smoother) {
  cfg.validate();
  CoefficientCurves curves;
  curves.layout = cfg.layout(data);
  curves.grid = cfg.grid_points(data);
  auto [a, b] = cfg.fit_interval(data);
  curves.a = a;
  curves.b = b;
  curves.fits.resize(curves.grid.size());
  parallel_for(static_cast<long>(curves.grid.size()), [&](long g) {
    curves.fits[g] = local_fit(data, curves.grid[g], cfg, 1, need_smoother);
  });
  return curves;
}

std::vector<Eigen::VectorXd> evaluate_at(const CoefficientCurves& curves,
                                         const ClusterDataset& data,
                                         const FitConfig& cfg,
                                         const std::vector<double>& points) {
  std::vector<Eigen::VectorXd> out(points.size());
  const auto& grid = curves.grid;
  parallel_for(static_cast<long>(points.size()), [&](long k) {
    double u = points[k];
    if (cfg.eval_mode == EvalMode::Exact || grid.empty() || u < grid.front() ||
        u > grid.back()) {
      out[k] = local_fit(data, u, cfg, 1, false).theta;
      return;
    }
    auto it = std::lower_bound(grid.begin(), grid.end(), u);
    size_t hi = static_cast<size_t>(it - grid.begin());
    if (hi < grid.size() && grid[hi] == u) {
      out[k] = curves.fits[hi].theta;
      return;
    }
    size_t lo = hi - 1;
    double f = (u - grid[lo]) / (grid[hi] - grid[lo]);
    out[k] = (1.0 - f) * curves.fits[lo].theta + f * curves.fits[hi].theta;
  });
  return out;
}

PointEvaluations evaluate_at_observations(const ClusterDataset& data,
                                          const FitConfig& cfg,
                                          const CoefficientCurves* curves) {
  PointEvaluations ev;
  ev.layout = cfg.layout(data);
  auto [a, b] = cfg.fit_interval(data);
  ev.a = a;
  ev.b = b;

  CoefficientCurves local;
  if (cfg.eval_mode == EvalMode::Interp && curves == nullptr) {
    local = fit_curves(data, cfg);
    curves = &local;
  }

  std::vector<double> pts;
  pts.reserve(data.n);
  for (const Cluster& c : data.clusters)
    for (const Observation& o : c.obs) pts.push_back(o.u);

  std::vector<Eigen::VectorXd> theta;
  if (cfg.eval_mode == EvalMode::Interp) {
    theta = evaluate_at(*curves, data, cfg, pts);
  } else {
    CoefficientCurves dummy;
    dummy.layout = ev.layout;
    theta = evaluate_at(dummy, data, cfg, pts);
  }

  ev.theta.resize(data.m());
  ev.in_interval.resize(data.m());
  long r = 0;
  for (int i = 0; i < data.m(); ++i) {
    const Cluster& c = data.clusters[i];
    ev.theta[i].resize(c.size());
    ev.in_interval[i].resize(c.size());
    for (int j = 0; j < c.size(); ++j, ++r) {
      ev.theta[i][j] = std::move(theta[r]);
      ev.in_interval[i][j] = (c.obs[j].u >= a && c.obs[j].u <= b) ? 1 : 0;
    }
  }
  return ev;
}

double constant_from_evals(const PointEvaluations& evals, const CoefId& id) {
  const int flat = id.flat(evals.layout);
  double sum = 0;
  long count = 0;
  for (size_t i = 0; i < evals.theta.size(); ++i)
    for (size_t j = 0; j < evals.theta[i].size(); ++j)
      if (evals.in_interval[i][j]) {
        sum += evals.theta[i][j][flat];
        ++count;
      }
  if (count == 0)
    throw InsufficientLocalData(
        "constant estimator: no observation points inside the fit interval");
  return sum / static_cast<double>(count);
}

double estimate_constant(const ClusterDataset& data, const FitConfig& cfg,
                         const CoefId& id) {
  return constant_from_evals(evaluate_at_observations(data, cfg), id);
}

UnstructuredCurves fit_unstructured(const ClusterDataset& data, double h,
                                    const Kernel& kernel,
                                    const UnstructuredOptions& opts) {
  if (!data.validated) throw Error("fit_unstructured: dataset not validated");

  FitConfig cfg;
  cfg.h = h;
  cfg.kernel = kernel;
  cfg.grid = opts.grid;
  cfg.min_local_obs_factor = opts.min_local_obs_factor;
  cfg.ridge_eps = opts.ridge_eps;
  cfg.trim = opts.trim;
  cfg.intercept = opts.intercept;

  UnstructuredCurves out;
  out.grid = cfg.grid_points(data);
  const int G = static_cast<int>(out.grid.size());
  out.a.assign(data.m(), Eigen::MatrixXd::Zero(G, data.p));
  out.ok.assign(data.m(), std::vector<char>(G, 0));

  // One single-cluster dataset per cluster, z dropped (q = 0); the
  // within-cluster share of the cluster-level terms is a function of U
  // alone, absorbed by the intercept column when enabled.
  std::vector<ClusterDataset> singles(data.m());
  for (int i = 0; i < data.m(); ++i) {
    ClusterDataset d;
    Cluster c = data.clusters[i];
    c.z.resize(0);
    d.clusters.push_back(std::move(c));
    singles[i] = validate_dataset(std::move(d));
  }

  parallel_for(static_cast<long>(data.m()) * G, [&](long t) {
    int i = static_cast<int>(t / G);
    int g = static_cast<int>(t % G);
    try {
      LocalFit fit = local_fit(singles[i], out.grid[g], cfg, 1, false);
      out.a[i].row(g) = fit.theta.head(data.p).transpose();
      out.ok[i][g] = 1;
    } catch (const InsufficientLocalData&) {
    } catch (const SingularSystem&) {
    }
  });
  return out;
}

}  // namespace vcmix
