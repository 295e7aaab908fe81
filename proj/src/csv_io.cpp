#include "vcmix/csv_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "vcmix/errors.hpp"

namespace vcmix {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& tok, long line_no) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("row " + std::to_string(line_no) + ": cannot parse '" +
                     tok + "' as a number");
  }
}

}  // namespace

ClusterDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  // header: cluster_id,y,u,x1..xp,z1..zq
  std::vector<std::string> head = split_line(line);
  if (head.size() < 3 || head[0] != "cluster_id" || head[1] != "y" ||
      head[2] != "u")
    throw SchemaError("header must start with cluster_id,y,u");
  int p = 0, q = 0;
  size_t col = 3;
  while (col < head.size() && head[col] == "x" + std::to_string(p + 1)) {
    ++p;
    ++col;
  }
  while (col < head.size() && head[col] == "z" + std::to_string(q + 1)) {
    ++q;
    ++col;
  }
  if (col != head.size())
    throw SchemaError("unexpected header column '" + head[col] + "'");
  if (p == 0) throw SchemaError("no x columns found");

  ClusterDataset data;
  std::unordered_map<std::string, int> index;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_line(line);
    if (static_cast<int>(f.size()) != 3 + p + q)
      throw ParseError("row " + std::to_string(line_no) + ": expected " +
                       std::to_string(3 + p + q) + " fields, got " +
                       std::to_string(f.size()));
    Observation o;
    o.y = parse_number(f[1], line_no);
    o.u = parse_number(f[2], line_no);
    o.x.resize(p);
    for (int k = 0; k < p; ++k) o.x[k] = parse_number(f[3 + k], line_no);
    Eigen::VectorXd z(q);
    for (int k = 0; k < q; ++k) z[k] = parse_number(f[3 + p + k], line_no);

    auto [it, fresh] = index.emplace(f[0], data.m());
    if (fresh) {
      Cluster c;
      c.id = f[0];
      c.z = z;
      data.clusters.push_back(std::move(c));
    } else if (q > 0 &&
               (data.clusters[it->second].z - z).cwiseAbs().maxCoeff() != 0.0) {
      throw InconsistentClusterCovariate(
          "row " + std::to_string(line_no) + ": cluster '" + f[0] +
          "' has differing z values");
    }
    data.clusters[it->second].obs.push_back(std::move(o));
  }
  return validate_dataset(std::move(data));
}

void save_csv(const ClusterDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "cluster_id,y,u";
  for (int k = 1; k <= data.p; ++k) out << ",x" << k;
  for (int k = 1; k <= data.q; ++k) out << ",z" << k;
  out << "\n";
  for (const Cluster& c : data.clusters)
    for (const Observation& o : c.obs) {
      out << c.id << ',' << format_double(o.y) << ',' << format_double(o.u);
      for (int k = 0; k < data.p; ++k) out << ',' << format_double(o.x[k]);
      for (int k = 0; k < data.q; ++k) out << ',' << format_double(c.z[k]);
      out << "\n";
    }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace vcmix
