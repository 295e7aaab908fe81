#include <doctest.h>

#include "test_util.hpp"
#include "vcmix/errors.hpp"
#include "vcmix/simulation.hpp"

using namespace vcmix;

namespace {

ClusterDataset two_cluster_raw() {
  ClusterDataset d;
  for (int i = 0; i < 2; ++i) {
    Cluster c;
    c.id = "c" + std::to_string(i);
    c.z = Eigen::VectorXd::Constant(1, 0.5 * i);
    for (int j = 0; j < 4; ++j) {
      Observation o;
      o.u = 0.2 * (j + 1) + 0.05 * i;
      o.y = 1.0 + j;
      o.x = Eigen::VectorXd::Constant(2, 1.0 + 0.1 * j);
      c.obs.push_back(o);
    }
    d.clusters.push_back(c);
  }
  return d;
}

}  // namespace

TEST_CASE("validation fills derived fields") {
  ClusterDataset d = validate_dataset(two_cluster_raw());
  CHECK(d.p == 2);
  CHECK(d.q == 1);
  CHECK(d.m() == 2);
  CHECK(d.n == 8);
  CHECK(d.s() == 5);  // (q+1)p + q
  CHECK(d.u_min == doctest::Approx(0.2));
  CHECK(d.u_max == doctest::Approx(0.85));
  CHECK(d.row_offset == std::vector<long>{0, 4, 8});
  CHECK(d.validated);
}

TEST_CASE("validation is idempotent") {
  ClusterDataset d1 = validate_dataset(two_cluster_raw());
  ClusterDataset d2 = validate_dataset(d1);
  CHECK(d1.n == d2.n);
  CHECK(d1.u_min == d2.u_min);
  CHECK(d1.u_max == d2.u_max);
  CHECK(d1.row_offset == d2.row_offset);
  CHECK(d1.small_cluster == d2.small_cluster);
}

TEST_CASE("ragged x dimensions rejected") {
  ClusterDataset d = two_cluster_raw();
  d.clusters[0].obs[2].x = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(validate_dataset(d), DimensionMismatch);
}

TEST_CASE("ragged z dimensions rejected") {
  ClusterDataset d = two_cluster_raw();
  d.clusters[1].z = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(validate_dataset(d), DimensionMismatch);
}

TEST_CASE("non-finite values rejected") {
  ClusterDataset d = two_cluster_raw();
  d.clusters[0].obs[1].y = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_dataset(d), NonFiniteValue);
}

TEST_CASE("degenerate index rejected") {
  ClusterDataset d = two_cluster_raw();
  for (auto& c : d.clusters)
    for (auto& o : c.obs) o.u = 0.5;
  CHECK_THROWS_AS(validate_dataset(d), DegenerateIndex);
}

TEST_CASE("small clusters are flagged, not rejected") {
  ClusterDataset d = two_cluster_raw();
  Cluster tiny;
  tiny.id = "tiny";
  tiny.z = Eigen::VectorXd::Zero(1);
  for (int j = 0; j < 2; ++j) {
    Observation o;
    o.u = 0.3 + 0.1 * j;
    o.y = 0;
    o.x = Eigen::VectorXd::Ones(2);
    tiny.obs.push_back(o);
  }
  d.clusters.push_back(tiny);
  ClusterDataset v = validate_dataset(d);
  CHECK(v.small_cluster == std::vector<char>{0, 0, 1});
}

TEST_CASE("reference simulated design validates cleanly") {
  GeneratedData gen = generate_dataset(SimConfig::defaults(), 7);
  CHECK(gen.data.p == 3);
  CHECK(gen.data.q == 2);
  CHECK(gen.data.m() == 100);
  for (char f : gen.data.small_cluster) CHECK(f == 0);  // n_i >= 6 > p
}

TEST_CASE("coefficient ids round-trip") {
  CoefLayout lay{3, 2, true};
  CHECK(lay.size() == 12);
  std::vector<CoefId> ids = all_coefficients(lay);
  CHECK(ids.size() == 12);
  for (int f = 0; f < lay.size(); ++f) {
    CHECK(ids[f].flat(lay) == f);
    CHECK(CoefId::parse(ids[f].label()).flat(lay) == f);
  }
  CHECK(CoefId::alpha(0, 1).label() == "alpha_0_1");
  CHECK(CoefId::intercept().label() == "beta_0");
  CHECK(CoefId::beta(2).label() == "beta_2");
  CHECK_THROWS_AS(CoefId::parse("gamma_1"), Error);

  CoefLayout no_icpt{3, 2, false};
  CHECK(no_icpt.size() == 11);
  CHECK_THROWS_AS(CoefId::intercept().flat(no_icpt), Error);
}

TEST_CASE("gamma row layout") {
  CoefLayout lay{3, 2, false};
  Eigen::VectorXd x(3), z(2);
  x << 1, 0, 0;
  z << 0, 0;
  Eigen::VectorXd g = gamma_row(x, z, lay);
  Eigen::VectorXd expect(11);
  expect << 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0;
  CHECK((g - expect).cwiseAbs().maxCoeff() == 0.0);

  z << 2, -1;
  x << 1, 2, 3;
  g = gamma_row(x, z, lay);
  CHECK(g.segment(0, 3).isApprox(x));
  CHECK(g.segment(3, 3).isApprox(2.0 * x));
  CHECK(g.segment(6, 3).isApprox(-1.0 * x));
  CHECK(g[9] == 2.0);
  CHECK(g[10] == -1.0);

  CoefLayout with_icpt{3, 2, true};
  Eigen::VectorXd gi = gamma_row(x, z, with_icpt);
  CHECK(gi.size() == 12);
  CHECK(gi[9] == 1.0);  // intercept column ahead of the beta block
  CHECK(gi[10] == 2.0);
  CHECK(gi[11] == -1.0);
}
