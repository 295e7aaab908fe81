#include "vcmix/dataset.hpp"

#include <cmath>

#include "vcmix/errors.hpp"

namespace vcmix {

ClusterDataset validate_dataset(ClusterDataset raw) {
  if (raw.clusters.empty())
    throw DimensionMismatch("dataset has no clusters");

  const int p = static_cast<int>(raw.clusters.front().obs.empty()
                                     ? 0
                                     : raw.clusters.front().obs.front().x.size());
  const int q = static_cast<int>(raw.clusters.front().z.size());

  long n = 0;
  double u_min = std::numeric_limits<double>::infinity();
  double u_max = -std::numeric_limits<double>::infinity();
  raw.row_offset.assign(raw.clusters.size() + 1, 0);
  raw.small_cluster.assign(raw.clusters.size(), 0);

  for (size_t i = 0; i < raw.clusters.size(); ++i) {
    const Cluster& c = raw.clusters[i];
    if (static_cast<int>(c.z.size()) != q)
      throw DimensionMismatch("cluster '" + c.id + "': z has length " +
                              std::to_string(c.z.size()) + ", expected " +
                              std::to_string(q));
    if (!c.z.allFinite())
      throw NonFiniteValue("cluster '" + c.id + "': non-finite z");
    if (c.obs.empty())
      throw DimensionMismatch("cluster '" + c.id + "' has no observations");
    for (const Observation& o : c.obs) {
      if (static_cast<int>(o.x.size()) != p)
        throw DimensionMismatch("cluster '" + c.id + "': x has length " +
                                std::to_string(o.x.size()) + ", expected " +
                                std::to_string(p));
      if (!std::isfinite(o.y) || !std::isfinite(o.u) || !o.x.allFinite())
        throw NonFiniteValue("cluster '" + c.id + "': non-finite observation");
      u_min = std::min(u_min, o.u);
      u_max = std::max(u_max, o.u);
    }
    n += c.size();
    raw.row_offset[i + 1] = n;
    raw.small_cluster[i] = c.size() <= p ? 1 : 0;
  }

  if (!(u_max > u_min))
    throw DegenerateIndex("index covariate U takes a single value");

  raw.p = p;
  raw.q = q;
  raw.n = n;
  raw.u_min = u_min;
  raw.u_max = u_max;
  raw.validated = true;
  return raw;
}

int CoefId::flat(const CoefLayout& lay) const {
  switch (kind) {
    case Kind::Alpha:
      if (k < 0 || k > lay.q || j < 1 || j > lay.p)
        throw Error("coefficient alpha_" + std::to_string(k) + "_" +
                    std::to_string(j) + " out of range");
      return lay.alpha_offset(k) + (j - 1);
    case Kind::Intercept:
      if (!lay.intercept) throw Error("model has no intercept coefficient");
      return lay.intercept_offset();
    case Kind::Beta:
      if (j < 1 || j > lay.q)
        throw Error("coefficient beta_" + std::to_string(j) + " out of range");
      return lay.beta_offset() + (j - 1);
  }
  throw Error("bad coefficient id");
}

std::string CoefId::label() const {
  switch (kind) {
    case Kind::Alpha:
      return "alpha_" + std::to_string(k) + "_" + std::to_string(j);
    case Kind::Intercept:
      return "beta_0";
    case Kind::Beta:
      return "beta_" + std::to_string(j);
  }
  return "?";
}

CoefId CoefId::parse(const std::string& label) {
  auto bad = [&] { return Error("cannot parse coefficient id '" + label + "'"); };
  if (label.rfind("alpha_", 0) == 0) {
    auto rest = label.substr(6);
    auto sep = rest.find('_');
    if (sep == std::string::npos) throw bad();
    try {
      return alpha(std::stoi(rest.substr(0, sep)), std::stoi(rest.substr(sep + 1)));
    } catch (const std::logic_error&) {
      throw bad();
    }
  }
  if (label.rfind("beta_", 0) == 0) {
    try {
      int j = std::stoi(label.substr(5));
      return j == 0 ? intercept() : beta(j);
    } catch (const std::logic_error&) {
      throw bad();
    }
  }
  throw bad();
}

std::vector<CoefId> all_coefficients(const CoefLayout& lay) {
  std::vector<CoefId> ids;
  ids.reserve(lay.size());
  for (int k = 0; k <= lay.q; ++k)
    for (int j = 1; j <= lay.p; ++j) ids.push_back(CoefId::alpha(k, j));
  if (lay.intercept) ids.push_back(CoefId::intercept());
  for (int j = 1; j <= lay.q; ++j) ids.push_back(CoefId::beta(j));
  return ids;
}

Eigen::VectorXd gamma_row(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                          const CoefLayout& lay) {
  Eigen::VectorXd g(lay.size());
  g.segment(0, lay.p) = x;
  for (int k = 1; k <= lay.q; ++k)
    g.segment(lay.alpha_offset(k), lay.p) = z[k - 1] * x;
  if (lay.intercept) g[lay.intercept_offset()] = 1.0;
  g.segment(lay.beta_offset(), lay.q) = z;
  return g;
}

}  // namespace vcmix
