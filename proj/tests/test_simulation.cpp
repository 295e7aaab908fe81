#include <doctest.h>

#include <cmath>

#include "vcmix/errors.hpp"
#include "vcmix/rng.hpp"
#include "vcmix/simulation.hpp"

using namespace vcmix;

TEST_CASE("generation is deterministic given the seed") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 12;
  GeneratedData a = generate_dataset(sim, 99);
  GeneratedData b = generate_dataset(sim, 99);
  REQUIRE(a.data.m() == b.data.m());
  for (int i = 0; i < a.data.m(); ++i) {
    CHECK((a.data.clusters[i].z - b.data.clusters[i].z).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.data.clusters[i].size() == b.data.clusters[i].size());
    for (int j = 0; j < a.data.clusters[i].size(); ++j) {
      CHECK(a.data.clusters[i].obs[j].y == b.data.clusters[i].obs[j].y);
      CHECK(a.data.clusters[i].obs[j].u == b.data.clusters[i].obs[j].u);
    }
  }
  GeneratedData c = generate_dataset(sim, 100);
  CHECK(c.data.clusters[0].obs[0].y != a.data.clusters[0].obs[0].y);
}

TEST_CASE("latents reproduce the responses") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 8;
  GeneratedData gen = generate_dataset(sim, 3);
  CoefLayout lay = sim.layout();
  for (int i = 0; i < gen.data.m(); ++i) {
    const Cluster& c = gen.data.clusters[i];
    for (int j = 0; j < c.size(); ++j) {
      Eigen::VectorXd g = gamma_row(c.obs[j].x, c.z, lay);
      double y = g.dot(sim.truth.theta(c.obs[j].u)) +
                 c.obs[j].x.dot(gen.e[i]) + gen.eps[i][j];
      CHECK(c.obs[j].y == doctest::Approx(y).epsilon(1e-14));
    }
  }
}

TEST_CASE("cluster size rules") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 2000;
  GeneratedData gen = generate_dataset(sim, 17);
  double mean = 0;
  for (const Cluster& c : gen.data.clusters) {
    CHECK(c.size() >= 6);
    mean += c.size();
  }
  mean /= sim.m;
  // analytic value of E floor(|2 xi| + 6) = 6 + 2 sum_k (1 - Phi(k/2))
  CHECK(mean == doctest::Approx(7.1292).epsilon(0.15 / 7.1292));

  sim.size_rule = ClusterSizeRule::Fixed;
  sim.fixed_size = 50;
  sim.m = 10;
  GeneratedData fixed = generate_dataset(sim, 17);
  for (const Cluster& c : fixed.data.clusters) CHECK(c.size() == 50);
}

TEST_CASE("mean cluster size at scale matches the analytic oracle") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 100000;
  sim.p = 1;
  sim.q = 0;
  sim.intercept = false;
  sim.Sigma = Eigen::MatrixXd::Zero(1, 1);
  sim.truth = SimTruth::defaults(1, 0, false);
  GeneratedData gen = generate_dataset(sim, 23);
  double mean = 0;
  for (const Cluster& c : gen.data.clusters) mean += c.size();
  mean /= sim.m;
  CHECK(std::abs(mean - 7.12916) < 0.02);
}

TEST_CASE("truth parsing") {
  CHECK(TruthFn::parse("sin2pi")(0.25) == doctest::Approx(1.0));
  CHECK(TruthFn::parse("cos2pi")(0.5) == doctest::Approx(-1.0));
  CHECK(TruthFn::parse("sinpi")(0.5) == doctest::Approx(1.0));
  CHECK(TruthFn::parse("const:2.5")(0.9) == doctest::Approx(2.5));
  CHECK(TruthFn::parse("linear:1:2")(0.5) == doctest::Approx(2.0));
  CHECK(TruthFn::parse("quad:0:0:1")(0.5) == doctest::Approx(0.25));
  CHECK_THROWS_AS(TruthFn::parse("cubic:1"), ConfigError);
  CHECK_THROWS_AS(TruthFn::parse("const:x"), ConfigError);
}

TEST_CASE("noise-free constant design has vanishing MISE") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 60;
  sim.sigma = 0.0;
  sim.Sigma = Eigen::MatrixXd::Zero(3, 3);
  for (const CoefId& id : all_coefficients(sim.layout()))
    sim.truth.set(id, TruthFn::constant(0.5));

  FitConfig cfg;
  cfg.h = 0.2;
  cfg.intercept = true;
  MiseReport rep = mise_study(sim, cfg, 2);
  CHECK(rep.failed == 0);
  for (double v : rep.mise) CHECK(v < 1e-10);
  bool found = false;
  for (const auto& [name, v] : rep.varcomp_mse)
    if (name == "sigma2") {
      CHECK(v < 1e-16);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("mise study reports every coefficient once") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 60;
  FitConfig cfg;
  cfg.h = 0.2;
  cfg.intercept = true;
  cfg.grid.count = 41;
  MiseReport rep = mise_study(sim, cfg, 2);
  CHECK(rep.coef.size() == 12);
  CHECK(rep.varcomp_mse.size() == 7);  // sigma2 + vech(Sigma)
  for (double v : rep.mise) CHECK(v > 0);
}

TEST_CASE("forced-identical estimators give RMISE one") {
  // single cluster, no cluster-level structure: the structured fit and
  // the per-cluster free fit are the same estimator
  SimConfig sim = SimConfig::defaults();
  sim.p = 2;
  sim.q = 0;
  sim.m = 1;
  sim.intercept = false;
  sim.size_rule = ClusterSizeRule::Fixed;
  sim.fixed_size = 60;
  sim.sigma = 0.4;
  sim.Sigma = Eigen::MatrixXd::Zero(2, 2);
  sim.truth = SimTruth::defaults(2, 0, false);

  FitConfig cfg;
  cfg.h = 0.25;
  cfg.grid.count = 21;
  cfg.intercept = false;
  RmiseReport rep = rmise_study(sim, cfg, {0.25}, 3);
  CHECK(rep.rmise_a[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("calibration study smoke run") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 40;
  FitConfig cfg;
  cfg.h = 0.2;
  cfg.intercept = true;
  cfg.grid.count = 41;
  CalibrationReport rep =
      calibration_study(sim, cfg, CoefId::alpha(0, 1), 0.05, 4);
  CHECK(rep.reps == 4);
  CHECK(rep.power >= 0.0);
  CHECK(rep.power <= 1.0);
  CHECK(rep.size >= 0.0);
  CHECK(rep.size <= 1.0);
  CHECK(rep.band_coverage >= 0.0);
  CHECK(rep.band_coverage <= 1.0);
}

TEST_CASE("rate study smoke run") {
  SimConfig sim = SimConfig::defaults();
  sim.m = 60;
  FitConfig cfg;
  cfg.h = 0.25;
  cfg.intercept = true;
  RateReport rep = rate_study(sim, cfg, CoefId::alpha(0, 1), 1.0, 3);
  CHECK(rep.m1 == 60);
  CHECK(rep.m2 == 120);
  CHECK(rep.mse_c_m1 > 0);
  CHECK(rep.mse_c_m2 > 0);
  CHECK(rep.mse_s_m1 > 0);
}

TEST_CASE("noise monotonicity of MISE") {
  SimConfig loud = SimConfig::defaults();
  loud.m = 40;
  SimConfig quiet = loud;
  quiet.sigma = loud.sigma / 2.0;
  quiet.Sigma = loud.Sigma / 4.0;  // sd halved

  FitConfig cfg;
  cfg.h = 0.2;
  cfg.intercept = true;
  cfg.grid.count = 41;
  MiseReport a = mise_study(loud, cfg, 25);
  MiseReport b = mise_study(quiet, cfg, 25);
  double sum_a = 0, sum_b = 0;
  for (double v : a.mise) sum_a += v;
  for (double v : b.mise) sum_b += v;
  CHECK(sum_b < sum_a);
}
