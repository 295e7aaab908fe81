#include "vcmix/simulation.hpp"

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <optional>

#include "vcmix/errors.hpp"
#include "vcmix/local_fit.hpp"
#include "vcmix/inference.hpp"
#include "vcmix/parallel.hpp"
#include "vcmix/rng.hpp"
#include "vcmix/variance.hpp"

namespace vcmix {

namespace {

std::vector<double> split_spec(const std::string& s) {
  std::vector<double> vals;
  size_t pos = s.find(':');
  while (pos != std::string::npos) {
    size_t next = s.find(':', pos + 1);
    std::string tok = s.substr(pos + 1, next == std::string::npos
                                            ? std::string::npos
                                            : next - pos - 1);
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      throw ConfigError("bad numeric argument in truth spec '" + s + "'");
    }
    pos = next;
  }
  return vals;
}

double trapz(const std::vector<double>& grid,
             const std::function<double(size_t)>& f) {
  double sum = 0;
  for (size_t g = 0; g + 1 < grid.size(); ++g)
    sum += 0.5 * (f(g) + f(g + 1)) * (grid[g + 1] - grid[g]);
  return sum;
}

// Trapezoid over the maximal runs of grid points where mask holds.
double trapz_masked(const std::vector<double>& grid,
                    const std::function<double(size_t)>& f,
                    const std::function<bool(size_t)>& mask) {
  double sum = 0;
  for (size_t g = 0; g + 1 < grid.size(); ++g)
    if (mask(g) && mask(g + 1))
      sum += 0.5 * (f(g) + f(g + 1)) * (grid[g + 1] - grid[g]);
  return sum;
}

}  // namespace

TruthFn TruthFn::constant(double c) {
  TruthFn t;
  t.spec = "const:" + std::to_string(c);
  t.fn = [c](double) { return c; };
  return t;
}

TruthFn TruthFn::parse(const std::string& spec) {
  TruthFn t;
  t.spec = spec;
  if (spec == "zero") {
    t.fn = [](double) { return 0.0; };
  } else if (spec == "sin2pi") {
    t.fn = [](double u) { return std::sin(2.0 * M_PI * u); };
  } else if (spec == "cos2pi") {
    t.fn = [](double u) { return std::cos(2.0 * M_PI * u); };
  } else if (spec == "sinpi") {
    t.fn = [](double u) { return std::sin(M_PI * u); };
  } else if (spec.rfind("const:", 0) == 0) {
    auto v = split_spec(spec);
    if (v.size() != 1) throw ConfigError("const truth needs one value");
    t.fn = [c = v[0]](double) { return c; };
  } else if (spec.rfind("linear:", 0) == 0) {
    auto v = split_spec(spec);
    if (v.size() != 2) throw ConfigError("linear truth needs two values");
    t.fn = [a = v[0], b = v[1]](double u) { return a + b * u; };
  } else if (spec.rfind("quad:", 0) == 0) {
    auto v = split_spec(spec);
    if (v.size() != 3) throw ConfigError("quad truth needs three values");
    t.fn = [a = v[0], b = v[1], c = v[2]](double u) {
      return a + b * u + c * u * u;
    };
  } else {
    throw ConfigError("unknown truth spec '" + spec + "'");
  }
  return t;
}

SimTruth SimTruth::defaults(int p, int q, bool intercept) {
  SimTruth t;
  t.layout = CoefLayout{p, q, intercept};
  t.coef.resize(t.layout.size());
  auto block = [&](int k) {
    switch (k) {
      case 1: return TruthFn::parse("cos2pi");
      case 2: return TruthFn::parse("sinpi");
      default: return TruthFn::parse("sin2pi");
    }
  };
  for (int k = 0; k <= q; ++k)
    for (int j = 1; j <= p; ++j)
      t.coef[CoefId::alpha(k, j).flat(t.layout)] = block(k);
  if (intercept)
    t.coef[CoefId::intercept().flat(t.layout)] = TruthFn::parse("sin2pi");
  for (int j = 1; j <= q; ++j)
    t.coef[CoefId::beta(j).flat(t.layout)] = TruthFn::parse("sin2pi");
  return t;
}

Eigen::VectorXd SimTruth::theta(double u) const {
  Eigen::VectorXd th(coef.size());
  for (size_t i = 0; i < coef.size(); ++i) th[i] = coef[i](u);
  return th;
}

void SimTruth::set(const CoefId& id, TruthFn f) {
  coef[id.flat(layout)] = std::move(f);
}

SimConfig SimConfig::defaults() {
  SimConfig sim;
  sim.Sigma = 0.25 * Eigen::MatrixXd::Identity(sim.p, sim.p);
  sim.truth = SimTruth::defaults(sim.p, sim.q, sim.intercept);
  return sim;
}

void SimConfig::validate() const {
  if (p < 1 || q < 0 || m < 1) throw ConfigError("invalid simulation dimensions");
  if (sigma < 0) throw ConfigError("sigma must be nonnegative");
  if (Sigma.rows() != p || Sigma.cols() != p)
    throw ConfigError("Sigma must be p x p");
  if ((Sigma - Sigma.transpose()).norm() > 1e-12 * (1.0 + Sigma.norm()))
    throw ConfigError("Sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12) throw ConfigError("Sigma must be PSD");
  if (size_rule == ClusterSizeRule::Fixed && fixed_size < 1)
    throw ConfigError("fixed cluster size must be positive");
  if (static_cast<int>(truth.coef.size()) != layout().size())
    throw ConfigError("truth does not match the coefficient layout");
}

GeneratedData generate_dataset(const SimConfig& sim, std::uint64_t seed) {
  sim.validate();
  const CoefLayout lay = sim.layout();

  // PSD square root of Sigma (handles singular covariances).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sim.Sigma);
  Eigen::MatrixXd L = es.eigenvectors() *
                      es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  GeneratedData gen;
  gen.data.clusters.resize(sim.m);
  gen.e.resize(sim.m);
  gen.eps.resize(sim.m);

  for (int i = 0; i < sim.m; ++i) {
    Rng rng(Rng::split(seed, static_cast<std::uint64_t>(i)));
    Cluster& c = gen.data.clusters[i];
    c.id = "c" + std::to_string(i + 1);

    int ni;
    if (sim.size_rule == ClusterSizeRule::NormalAbs) {
      ni = static_cast<int>(std::floor(std::abs(2.0 * rng.normal()) + 6.0));
    } else {
      ni = sim.fixed_size;
    }

    c.z.resize(sim.q);
    for (int k = 0; k < sim.q; ++k) c.z[k] = rng.normal();

    Eigen::VectorXd std_normals(sim.p);
    for (int k = 0; k < sim.p; ++k) std_normals[k] = rng.normal();
    gen.e[i] = L * std_normals;

    c.obs.resize(ni);
    gen.eps[i].resize(ni);
    for (int j = 0; j < ni; ++j) {
      Observation& o = c.obs[j];
      o.u = rng.uniform();
      o.x.resize(sim.p);
      for (int k = 0; k < sim.p; ++k) o.x[k] = rng.normal();
      double eps = sim.sigma * rng.normal();
      gen.eps[i][j] = eps;
      Eigen::VectorXd g = gamma_row(o.x, c.z, lay);
      o.y = g.dot(sim.truth.theta(o.u)) + o.x.dot(gen.e[i]) + eps;
    }
  }
  gen.data = validate_dataset(std::move(gen.data));
  return gen;
}

// ---------------------------------------------------------------------------
// MISE study
// ---------------------------------------------------------------------------

MiseReport mise_study(const SimConfig& sim, const FitConfig& cfg, int reps) {
  if (reps < 1) throw ConfigError("mise_study needs at least one replicate");
  if (cfg.intercept != sim.intercept)
    throw ConfigError("fit and simulation disagree on the intercept");
  const CoefLayout lay = sim.layout();
  const int s = lay.size();
  const int p = sim.p;

  struct RepResult {
    Eigen::VectorXd mise;      // per coefficient
    double sigma2_err2 = 0;    // squared errors
    Eigen::MatrixXd sigma_err2;
  };
  std::vector<std::optional<RepResult>> results(reps);

  parallel_for(reps, [&](long r) {
    try {
      GeneratedData gen = generate_dataset(sim, Rng::split(sim.seed, r));
      CoefficientCurves curves = fit_curves(gen.data, cfg);
      PointEvaluations evals = evaluate_at_observations(gen.data, cfg, &curves);
      ResidualSet res = residuals_from_evals(gen.data, evals);
      double sigma2 = estimate_sigma2(gen.data, res);
      Eigen::MatrixXd Sigma_raw = estimate_Sigma_raw(gen.data, res, sigma2);

      RepResult out;
      out.mise.resize(s);
      for (int c = 0; c < s; ++c)
        out.mise[c] = trapz(curves.grid, [&](size_t g) {
          double e = curves.fits[g].theta[c] -
                     sim.truth.eval_flat(c, curves.grid[g]);
          return e * e;
        });
      double ds = sigma2 - sim.sigma * sim.sigma;
      out.sigma2_err2 = ds * ds;
      out.sigma_err2 = (Sigma_raw - sim.Sigma).array().square().matrix();
      results[r] = std::move(out);
    } catch (const Error&) {
      results[r].reset();
    }
  });

  MiseReport rep;
  rep.reps = reps;
  Eigen::VectorXd mise_sum = Eigen::VectorXd::Zero(s);
  double s2_sum = 0;
  Eigen::MatrixXd S_sum = Eigen::MatrixXd::Zero(p, p);
  int ok = 0;
  for (int r = 0; r < reps; ++r) {
    if (!results[r]) {
      ++rep.failed;
      continue;
    }
    mise_sum += results[r]->mise;
    s2_sum += results[r]->sigma2_err2;
    S_sum += results[r]->sigma_err2;
    ++ok;
  }
  if (ok == 0) throw Error("mise_study: every replicate failed");

  for (const CoefId& id : all_coefficients(lay)) {
    rep.coef.push_back(id.label());
    rep.mise.push_back(mise_sum[id.flat(lay)] / ok);
  }
  rep.varcomp_mse.emplace_back("sigma2", s2_sum / ok);
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b)
      rep.varcomp_mse.emplace_back(
          "Sigma_" + std::to_string(a + 1) + "_" + std::to_string(b + 1),
          S_sum(a, b) / ok);
  return rep;
}

// ---------------------------------------------------------------------------
// RMISE study
// ---------------------------------------------------------------------------

namespace {

// Local linear fit at u0 of the model with a free coefficient vector per
// cluster and shared cluster-level terms, solved through the Schur
// complement of the per-cluster blocks. Returns the shared-level
// coefficients (intercept first when present) or nothing when no cluster
// has enough local support.
std::optional<Eigen::VectorXd> free_cluster_beta(const ClusterDataset& data,
                                                 double u0, double h,
                                                 const Kernel& kernel,
                                                 bool intercept) {
  const int p = data.p;
  const int qe = data.q + (intercept ? 1 : 0);
  const int pc = 2 * p;   // per-cluster columns (level + slope)
  const int sc = 2 * qe;  // shared columns
  const double support = kernel.c0 * h;

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(sc, sc);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sc);
  int used = 0;

  for (const Cluster& c : data.clusters) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(pc, pc);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(pc, sc);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(sc, sc);
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(pc);
    Eigen::VectorXd by = Eigen::VectorXd::Zero(sc);

    Eigen::VectorXd zt(qe);
    if (intercept) zt << 1.0, c.z;
    else zt = c.z;

    int rows = 0;
    for (const Observation& o : c.obs) {
      double d = o.u - u0;
      if (std::abs(d) > support) continue;
      double w = kernel_eval(kernel, d / h) / h;
      if (w <= 0) continue;
      double t = d / h;
      Eigen::VectorXd gc(pc), gs(sc);
      gc << o.x, t * o.x;
      gs << zt, t * zt;
      D.selfadjointView<Eigen::Lower>().rankUpdate(gc, w);
      B.selfadjointView<Eigen::Lower>().rankUpdate(gs, w);
      C += w * gc * gs.transpose();
      dy += w * o.y * gc;
      by += w * o.y * gs;
      ++rows;
    }
    if (rows < pc + 1) continue;  // cluster unidentifiable here, drop it
    D = D.selfadjointView<Eigen::Lower>();
    B = B.selfadjointView<Eigen::Lower>();
    D.diagonal().array() += 1e-10 * D.trace() / pc;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(D);
    Eigen::MatrixXd DiC = ldlt.solve(C);
    Eigen::VectorXd Did = ldlt.solve(dy);
    S += B - C.transpose() * DiC;
    rhs += by - C.transpose() * Did;
    ++used;
  }
  if (used == 0) return std::nullopt;
  S.diagonal().array() += 1e-10 * S.trace() / sc;
  Eigen::VectorXd sol = S.ldlt().solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  return sol.head(qe);  // level coefficients
}

}  // namespace

RmiseReport rmise_study(const SimConfig& sim, const FitConfig& cfg,
                        const std::vector<double>& bandwidths, int reps) {
  if (reps < 1) throw ConfigError("rmise_study needs at least one replicate");
  if (cfg.intercept != sim.intercept)
    throw ConfigError("fit and simulation disagree on the intercept");
  const CoefLayout lay = sim.layout();
  const int H = static_cast<int>(bandwidths.size());

  struct Acc {
    std::vector<double> num_a, den_a, num_b, den_b;
  };
  std::vector<std::optional<Acc>> results(reps);

  parallel_for(reps, [&](long r) {
    try {
      GeneratedData gen = generate_dataset(sim, Rng::split(sim.seed, r));
      Acc acc{std::vector<double>(H, 0), std::vector<double>(H, 0),
              std::vector<double>(H, 0), std::vector<double>(H, 0)};

      for (int hi = 0; hi < H; ++hi) {
        FitConfig ch = cfg;
        ch.h = bandwidths[hi];
        CoefficientCurves curves = fit_curves(gen.data, ch);
        const auto& grid = curves.grid;
        const size_t G = grid.size();

        UnstructuredOptions uo;
        uo.grid.count = ch.grid.count;
        uo.grid.interval = std::make_pair(curves.a, curves.b);
        uo.min_local_obs_factor = 1.0;
        uo.ridge_eps = 1e-8;
        UnstructuredCurves free =
            fit_unstructured(gen.data, ch.h, ch.kernel, uo);

        // true and structured a_i(u) on the grid
        for (int i = 0; i < gen.data.m(); ++i) {
          const Eigen::VectorXd& z = gen.data.clusters[i].z;
          auto a_true = [&](size_t g, int j) {
            double v = sim.truth.eval_flat(CoefId::alpha(0, j + 1).flat(lay),
                                           grid[g]);
            for (int k = 1; k <= sim.q; ++k)
              v += z[k - 1] * sim.truth.eval_flat(
                                  CoefId::alpha(k, j + 1).flat(lay), grid[g]);
            return v + gen.e[i][j];
          };
          auto a_struct = [&](size_t g, int j) {
            double v = curves.fits[g].theta[lay.alpha_offset(0) + j];
            for (int k = 1; k <= sim.q; ++k)
              v += z[k - 1] * curves.fits[g].theta[lay.alpha_offset(k) + j];
            return v;
          };
          auto mask = [&](size_t g) { return free.ok[i][g] != 0; };
          acc.num_a[hi] += trapz_masked(grid, [&](size_t g) {
            double e2 = 0;
            for (int j = 0; j < sim.p; ++j) {
              double e = a_struct(g, j) - a_true(g, j);
              e2 += e * e;
            }
            return e2;
          }, mask);
          acc.den_a[hi] += trapz_masked(grid, [&](size_t g) {
            double e2 = 0;
            for (int j = 0; j < sim.p; ++j) {
              double e = free.a[i](g, j) - a_true(g, j);
              e2 += e * e;
            }
            return e2;
          }, mask);
        }

        // beta baseline from the free-a_i joint fit
        if (sim.q == 0) continue;
        std::vector<char> bok(G, 0);
        Eigen::MatrixXd bfree = Eigen::MatrixXd::Zero(G, sim.q);
        for (size_t g = 0; g < G; ++g) {
          auto beta = free_cluster_beta(gen.data, grid[g], ch.h, ch.kernel,
                                        sim.intercept);
          if (!beta) continue;
          bok[g] = 1;
          bfree.row(g) =
              beta->tail(sim.q).transpose();  // skip the intercept level
        }
        auto bmask = [&](size_t g) { return bok[g] != 0; };
        acc.num_b[hi] += trapz_masked(grid, [&](size_t g) {
          double e2 = 0;
          for (int j = 1; j <= sim.q; ++j) {
            double e = curves.fits[g].theta[CoefId::beta(j).flat(lay)] -
                       sim.truth.eval_flat(CoefId::beta(j).flat(lay), grid[g]);
            e2 += e * e;
          }
          return e2;
        }, bmask);
        acc.den_b[hi] += trapz_masked(grid, [&](size_t g) {
          double e2 = 0;
          for (int j = 1; j <= sim.q; ++j) {
            double e = bfree(g, j - 1) -
                       sim.truth.eval_flat(CoefId::beta(j).flat(lay), grid[g]);
            e2 += e * e;
          }
          return e2;
        }, bmask);
      }
      results[r] = std::move(acc);
    } catch (const Error&) {
      results[r].reset();
    }
  });

  RmiseReport rep;
  rep.bandwidths = bandwidths;
  rep.reps = reps;
  std::vector<double> na(H, 0), da(H, 0), nb(H, 0), db(H, 0);
  for (int r = 0; r < reps; ++r) {
    if (!results[r]) continue;
    for (int hi = 0; hi < H; ++hi) {
      na[hi] += results[r]->num_a[hi];
      da[hi] += results[r]->den_a[hi];
      nb[hi] += results[r]->num_b[hi];
      db[hi] += results[r]->den_b[hi];
    }
  }
  rep.rmise_a.resize(H);
  rep.rmise_beta.resize(H);
  for (int hi = 0; hi < H; ++hi) {
    rep.rmise_a[hi] = da[hi] > 0 ? na[hi] / da[hi] : 0;
    rep.rmise_beta[hi] = db[hi] > 0 ? nb[hi] / db[hi] : 0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Calibration study
// ---------------------------------------------------------------------------

CalibrationReport calibration_study(const SimConfig& sim, const FitConfig& cfg,
                                    const CoefId& target, double alpha,
                                    int reps) {
  if (reps < 1) throw ConfigError("calibration_study needs replicates");
  if (cfg.intercept != sim.intercept)
    throw ConfigError("fit and simulation disagree on the intercept");

  CalibrationReport rep;
  rep.target = target;
  rep.alpha = alpha;
  rep.reps = reps;

  SimConfig sim_const = sim;
  sim_const.truth.set(target, TruthFn::constant(0.0));

  const int flat = target.flat(sim.layout());

  // arm 0: given truth (power + band coverage); arm 1: constant truth (size)
  struct RepOut {
    bool ok = false;
    bool reject = false;
    bool covered = false;
  };
  std::vector<std::array<RepOut, 2>> results(reps);

  auto run_arm = [&](const SimConfig& s, std::uint64_t arm_seed, long r,
                     bool want_coverage) {
    RepOut out;
    try {
      GeneratedData gen = generate_dataset(s, Rng::split(arm_seed, r));
      CoefficientCurves curves = fit_curves(gen.data, cfg, true);
      PointEvaluations evals = evaluate_at_observations(gen.data, cfg, &curves);
      ResidualSet res = residuals_from_evals(gen.data, evals);
      VarianceComponents vc = estimate_components(gen.data, res);
      InferenceGrid inf = inference_on_grid(gen.data, cfg, curves, vc);
      double c_hat = constant_from_evals(evals, target);
      TestResult t = test_constancy_with(curves, inf, target, c_hat, alpha);
      out.reject = t.reject;
      if (want_coverage) {
        BandResult band = confidence_band(curves, inf, target, 1.0 - alpha);
        out.covered = true;
        for (size_t g = 0; g < band.u.size(); ++g) {
          double truth = s.truth.eval_flat(flat, band.u[g]);
          if (std::abs(band.center[g] - truth) > band.halfwidth[g]) {
            out.covered = false;
            break;
          }
        }
      }
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;
    }
    return out;
  };

  const std::uint64_t seed_power = Rng::split(sim.seed, 1);
  const std::uint64_t seed_size = Rng::split(sim.seed, 2);
  parallel_for(reps, [&](long r) {
    results[r][0] = run_arm(sim, seed_power, r, true);
    results[r][1] = run_arm(sim_const, seed_size, r, false);
  });

  long okp = 0, oks = 0, rejp = 0, rejs = 0, cov = 0;
  for (int r = 0; r < reps; ++r) {
    if (results[r][0].ok) {
      ++okp;
      rejp += results[r][0].reject;
      cov += results[r][0].covered;
    } else {
      ++rep.failed;
    }
    if (results[r][1].ok) {
      ++oks;
      rejs += results[r][1].reject;
    } else {
      ++rep.failed;
    }
  }
  if (okp == 0 || oks == 0) throw Error("calibration_study: all replicates failed");
  rep.power = static_cast<double>(rejp) / okp;
  rep.size = static_cast<double>(rejs) / oks;
  rep.band_coverage = static_cast<double>(cov) / okp;
  return rep;
}

// ---------------------------------------------------------------------------
// Rate study
// ---------------------------------------------------------------------------

RateReport rate_study(const SimConfig& sim, const FitConfig& cfg,
                      const CoefId& target, double constant, int reps) {
  if (reps < 1) throw ConfigError("rate_study needs replicates");
  RateReport rep;
  rep.target = target;
  rep.constant = constant;
  rep.reps = reps;
  rep.m1 = sim.m;
  rep.m2 = 2 * sim.m;

  SimConfig base = sim;
  base.truth.set(target, TruthFn::constant(constant));

  auto run_m = [&](int mm, double& mse_c, double& mse_s) {
    SimConfig s = base;
    s.m = mm;
    const std::uint64_t arm_seed =
        Rng::split(sim.seed, 100 + static_cast<std::uint64_t>(mm));
    std::vector<std::optional<std::pair<double, double>>> results(reps);
    parallel_for(reps, [&](long r) {
      try {
        GeneratedData gen = generate_dataset(s, Rng::split(arm_seed, r));
        PointEvaluations evals = evaluate_at_observations(gen.data, cfg);
        double c_hat = constant_from_evals(evals, target);
        ResidualSet res = residuals_from_evals(gen.data, evals);
        double s2 = estimate_sigma2(gen.data, res);
        double ec = c_hat - constant;
        double es = s2 - sim.sigma * sim.sigma;
        results[r] = std::make_pair(ec * ec, es * es);
      } catch (const Error&) {
        results[r].reset();
      }
    });
    double sc = 0, ss = 0;
    int ok = 0;
    for (int r = 0; r < reps; ++r) {
      if (!results[r]) continue;
      sc += results[r]->first;
      ss += results[r]->second;
      ++ok;
    }
    if (ok == 0) throw Error("rate_study: all replicates failed");
    mse_c = sc / ok;
    mse_s = ss / ok;
  };

  run_m(rep.m1, rep.mse_c_m1, rep.mse_s_m1);
  run_m(rep.m2, rep.mse_c_m2, rep.mse_s_m2);
  return rep;
}

}  // namespace vcmix
