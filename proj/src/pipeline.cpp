#include "vcmix/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vcmix/csv_io.hpp"
#include "vcmix/errors.hpp"

namespace vcmix {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Error naming for structured reports
// ---------------------------------------------------------------------------

std::string error_name(const std::exception& e) {
#define VCMIX_NAME(T) \
  if (dynamic_cast<const T*>(&e)) return #T;
  VCMIX_NAME(DimensionMismatch)
  VCMIX_NAME(NonFiniteValue)
  VCMIX_NAME(DegenerateIndex)
  VCMIX_NAME(QuadratureFailure)
  VCMIX_NAME(InsufficientLocalData)
  VCMIX_NAME(SingularSystem)
  VCMIX_NAME(NoUsableClusters)
  VCMIX_NAME(SingularCluster)
  VCMIX_NAME(InvalidInterval)
  VCMIX_NAME(TooFewClusters)
  VCMIX_NAME(SchemaError)
  VCMIX_NAME(InconsistentClusterCovariate)
  VCMIX_NAME(ParseError)
  VCMIX_NAME(IoError)
  VCMIX_NAME(ConfigError)
#undef VCMIX_NAME
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

struct StagedError : Error {
  std::string stage_name;
  std::string type;
  StagedError(std::string stage, std::string type_, const std::string& what)
      : Error(what), stage_name(std::move(stage)), type(std::move(type_)) {}
};

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StagedError&) {
    throw;
  } catch (const Error& e) {
    throw StagedError(name, error_name(e), e.what());
  }
}

// ---------------------------------------------------------------------------
// Deterministic JSON emission (17 significant digits everywhere)
// ---------------------------------------------------------------------------

std::string jnum(double v) {
  if (!std::isfinite(v)) return "null";
  return format_double(v);
}

std::string jesc(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string jarr(const std::vector<double>& v) {
  std::string out = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += jnum(v[i]);
  }
  out.push_back(']');
  return out;
}

std::string jarr(const Eigen::VectorXd& v) {
  return jarr(std::vector<double>(v.data(), v.data() + v.size()));
}

std::string jmat(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out.push_back(',');
    out.push_back('[');
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(',');
      out += jnum(m(r, c));
    }
    out.push_back(']');
  }
  out.push_back(']');
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::string test_json(const TestResult& t) {
  std::ostringstream o;
  o << "{\"null\":"
    << (t.null_kind == TestResult::Null::Constancy ? "\"constancy\""
                                                   : "\"specified\"")
    << ",\"level\":" << jnum(t.alpha) << ",\"statistic\":" << jnum(t.statistic)
    << ",\"omega_n\":" << jnum(t.omega)
    << ",\"critical_value\":" << jnum(t.critical)
    << ",\"p_value\":" << jnum(t.p_value)
    << ",\"reject\":" << (t.reject ? "true" : "false")
    << ",\"sup_u\":" << jnum(t.sup_u);
  if (t.null_kind == TestResult::Null::Constancy)
    o << ",\"constant\":" << jnum(t.constant);
  o << "}";
  return o.str();
}

std::string band_json(const BandResult& b) {
  std::ostringstream o;
  o << "{\"level\":" << jnum(b.level) << ",\"omega_n\":" << jnum(b.omega)
    << ",\"multiplier\":" << jnum(b.multiplier) << ",\"interval\":["
    << jnum(b.a) << "," << jnum(b.b) << "],\"u\":" << jarr(b.u)
    << ",\"estimate\":" << jarr(b.estimate) << ",\"bias\":" << jarr(b.bias)
    << ",\"center\":" << jarr(b.center) << ",\"se\":" << jarr(b.se)
    << ",\"halfwidth\":" << jarr(b.halfwidth) << "}";
  return o.str();
}

std::string varcomp_json(const std::vector<std::string>& cluster_ids,
                         const VarianceComponents& vc) {
  std::ostringstream o;
  o << "{\n  \"sigma2\": " << jnum(vc.sigma2)
    << ",\n  \"Sigma_raw\": " << jmat(vc.Sigma_raw)
    << ",\n  \"Sigma\": " << jmat(vc.Sigma) << ",\n  \"df\": " << vc.df
    << ",\n  \"excluded\": [";
  for (size_t i = 0; i < vc.excluded.size(); ++i) {
    if (i) o << ",";
    o << jesc(cluster_ids[vc.excluded[i]]);
  }
  o << "],\n  \"random_effects\": [";
  for (size_t i = 0; i < cluster_ids.size(); ++i) {
    if (i) o << ",";
    o << "\n    {\"cluster\": " << jesc(cluster_ids[i]) << ", \"e\": "
      << (vc.e_hat[i].size() ? jarr(vc.e_hat[i]) : std::string("null")) << "}";
  }
  o << "\n  ]\n}\n";
  return o.str();
}

std::vector<std::string> ids_of(const ClusterDataset& data) {
  std::vector<std::string> ids;
  ids.reserve(data.m());
  for (const Cluster& c : data.clusters) ids.push_back(c.id);
  return ids;
}

std::string varcomp_json_inline(const VarianceComponents& vc) {
  std::ostringstream o;
  o << "{\"sigma2\":" << jnum(vc.sigma2)
    << ",\"Sigma_raw\":" << jmat(vc.Sigma_raw) << ",\"Sigma\":"
    << jmat(vc.Sigma) << ",\"df\":" << vc.df << "}";
  return o.str();
}

const char* kCurvesHeader = "coefficient,u,estimate,bias,se,band_lo,band_hi\n";
const char* kTestsHeader =
    "coefficient,null,statistic,omega_n,critical_value,p_value,reject,sup_u,"
    "constant\n";

void append_band_rows(std::ostringstream& o, const BandResult& b) {
  for (size_t g = 0; g < b.u.size(); ++g) {
    o << b.id.label() << ',' << format_double(b.u[g]) << ','
      << format_double(b.estimate[g]) << ',' << format_double(b.bias[g]) << ','
      << format_double(b.se[g]) << ','
      << format_double(b.center[g] - b.halfwidth[g]) << ','
      << format_double(b.center[g] + b.halfwidth[g]) << "\n";
  }
}

void append_test_row(std::ostringstream& o, const TestResult& t) {
  o << t.id.label() << ','
    << (t.null_kind == TestResult::Null::Constancy ? "constancy" : "specified")
    << ',' << format_double(t.statistic) << ',' << format_double(t.omega)
    << ',' << format_double(t.critical) << ',' << format_double(t.p_value)
    << ',' << (t.reject ? "1" : "0") << ',' << format_double(t.sup_u) << ','
    << (t.null_kind == TestResult::Null::Constancy ? format_double(t.constant)
                                                   : std::string())
    << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

AnalysisReport run_pipeline(const ClusterDataset& data,
                            const PipelineOptions& opts) {
  opts.fit.validate();
  for (const auto& z : opts.z_profiles)
    if (static_cast<int>(z.size()) != data.q)
      throw ConfigError("z profile length does not match q");

  AnalysisReport rep;
  rep.p = data.p;
  rep.q = data.q;
  rep.m = data.m();
  rep.n = data.n;
  rep.cluster_ids = ids_of(data);
  rep.layout = opts.fit.layout(data);

  CoefficientCurves curves =
      stage("fit", [&] { return fit_curves(data, opts.fit, true); });
  rep.grid = curves.grid;
  rep.a = curves.a;
  rep.b = curves.b;

  PointEvaluations evals = stage("evaluate", [&] {
    return evaluate_at_observations(data, opts.fit, &curves);
  });

  rep.varcomp = stage("variance_components", [&] {
    return estimate_components(data, residuals_from_evals(data, evals));
  });

  InferenceGrid inf = stage("inference", [&] {
    return inference_on_grid(data, opts.fit, curves, rep.varcomp);
  });

  const std::vector<CoefId> ids = all_coefficients(rep.layout);
  std::vector<CoefId> constant_ids;
  rep.coefficients.resize(ids.size());
  stage("constancy_tests", [&] {
    for (size_t t = 0; t < ids.size(); ++t) {
      CoefficientReport& cr = rep.coefficients[t];
      cr.id = ids[t];
      double c_hat = constant_from_evals(evals, ids[t]);
      cr.constancy =
          test_constancy_with(curves, inf, ids[t], c_hat, opts.level);
      cr.varying = cr.constancy.reject;
      if (!cr.varying) constant_ids.push_back(ids[t]);
    }
    return 0;
  });

  stage("constants", [&] {
    if (!constant_ids.empty()) {
      auto constants = jackknife_constants(data, opts.fit, constant_ids);
      size_t k = 0;
      for (auto& cr : rep.coefficients)
        if (!cr.varying) cr.constant = constants[k++];
    }
    return 0;
  });

  stage("bands", [&] {
    for (auto& cr : rep.coefficients)
      if (cr.varying)
        cr.band = confidence_band(curves, inf, cr.id, opts.band_level,
                                  opts.bias_correction);
    return 0;
  });

  stage("effects", [&] {
    std::map<int, double> constants;
    for (const auto& cr : rep.coefficients)
      if (cr.constant) constants[cr.id.flat(rep.layout)] = cr.constant->value;
    for (const auto& z : opts.z_profiles) {
      rep.z_profiles.push_back(z);
      rep.effects.push_back(cluster_effect(curves, constants, z));
    }
    return 0;
  });

  return rep;
}

void write_results(const AnalysisReport& rep, const std::string& outdir) {
  std::filesystem::create_directories(outdir);
  auto path = [&](const char* f) { return outdir + "/" + f; };

  // results.json
  std::ostringstream o;
  o << "{\n  \"dims\": {\"p\": " << rep.p << ", \"q\": " << rep.q
    << ", \"m\": " << rep.m << ", \"n\": " << rep.n << "},\n";
  o << "  \"interval\": [" << jnum(rep.a) << "," << jnum(rep.b) << "],\n";
  o << "  \"grid\": " << jarr(rep.grid) << ",\n";
  o << "  \"coefficients\": [";
  for (size_t t = 0; t < rep.coefficients.size(); ++t) {
    const CoefficientReport& cr = rep.coefficients[t];
    if (t) o << ",";
    o << "\n    {\"id\": " << jesc(cr.id.label()) << ", \"classification\": "
      << (cr.varying ? "\"varying\"" : "\"constant\"")
      << ",\n     \"constancy_test\": " << test_json(cr.constancy);
    if (cr.constant)
      o << ",\n     \"constant\": {\"value\": " << jnum(cr.constant->value)
        << ", \"se\": " << jnum(cr.constant->se) << "}";
    if (cr.band) o << ",\n     \"band\": " << band_json(*cr.band);
    o << "}";
  }
  o << "\n  ],\n";
  o << "  \"variance_components\": " << varcomp_json_inline(rep.varcomp)
    << ",\n";
  o << "  \"effects\": [";
  for (size_t k = 0; k < rep.effects.size(); ++k) {
    if (k) o << ",";
    o << "\n    {\"z\": " << jarr(rep.z_profiles[k])
      << ", \"a\": " << jmat(rep.effects[k]) << "}";
  }
  o << "\n  ]\n}\n";
  write_file(path("results.json"), o.str());

  // curves.csv: varying coefficients only
  std::ostringstream c;
  c << kCurvesHeader;
  for (const auto& cr : rep.coefficients)
    if (cr.varying && cr.band) append_band_rows(c, *cr.band);
  write_file(path("curves.csv"), c.str());

  std::ostringstream t;
  t << kTestsHeader;
  for (const auto& cr : rep.coefficients) append_test_row(t, cr.constancy);
  write_file(path("tests.csv"), t.str());

  write_file(path("varcomp.json"), varcomp_json(rep.cluster_ids, rep.varcomp));
}

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" + it.key() + "'");
}

const std::set<std::string> kFitKeys = {
    "h",         "kernel",    "grid",      "interval", "h_pilot",
    "min_local_obs_factor",   "ridge_eps", "trim",     "intercept",
    "eval_mode"};

// Fit keys shared by every subcommand. The intercept defaults to on: the
// applications this tool targets regress with an intercept term.
FitConfig fit_from_json(const json& j, bool require_h) {
  FitConfig cfg;
  cfg.intercept = true;
  if (j.contains("h")) cfg.h = j.at("h").get<double>();
  else if (require_h)
    throw ConfigError("bandwidth required: config key 'h' or --h");
  if (j.contains("kernel"))
    cfg.kernel = Kernel::parse(j.at("kernel").get<std::string>());
  if (j.contains("grid")) cfg.grid.count = j.at("grid").get<int>();
  if (j.contains("interval")) {
    auto v = j.at("interval");
    if (!v.is_array() || v.size() != 2)
      throw ConfigError("interval must be [a, b]");
    cfg.grid.interval = std::make_pair(v[0].get<double>(), v[1].get<double>());
  }
  if (j.contains("h_pilot")) cfg.h_pilot = j.at("h_pilot").get<double>();
  if (j.contains("min_local_obs_factor"))
    cfg.min_local_obs_factor = j.at("min_local_obs_factor").get<double>();
  if (j.contains("ridge_eps")) cfg.ridge_eps = j.at("ridge_eps").get<double>();
  if (j.contains("trim")) cfg.trim = j.at("trim").get<bool>();
  if (j.contains("intercept")) cfg.intercept = j.at("intercept").get<bool>();
  if (j.contains("eval_mode")) {
    std::string mode = j.at("eval_mode").get<std::string>();
    if (mode == "exact") cfg.eval_mode = EvalMode::Exact;
    else if (mode == "interp") cfg.eval_mode = EvalMode::Interp;
    else throw ConfigError("eval_mode must be 'exact' or 'interp'");
  }
  return cfg;
}

PipelineOptions options_from_json(const json& j, bool require_h) {
  std::set<std::string> keys = kFitKeys;
  keys.insert({"level", "band_level", "bias_correction", "z_profiles"});
  check_keys(j, keys);
  PipelineOptions opts;
  opts.fit = fit_from_json(j, require_h);
  if (j.contains("level")) opts.level = j.at("level").get<double>();
  if (j.contains("band_level"))
    opts.band_level = j.at("band_level").get<double>();
  if (j.contains("bias_correction"))
    opts.bias_correction = j.at("bias_correction").get<bool>();
  if (j.contains("z_profiles")) {
    for (const auto& row : j.at("z_profiles")) {
      Eigen::VectorXd z(row.size());
      for (size_t k = 0; k < row.size(); ++k) z[k] = row[k].get<double>();
      opts.z_profiles.push_back(std::move(z));
    }
  }
  return opts;
}

SimConfig sim_from_json(const json& j) {
  SimConfig sim = SimConfig::defaults();
  if (j.contains("p")) sim.p = j.at("p").get<int>();
  if (j.contains("q")) sim.q = j.at("q").get<int>();
  if (j.contains("m")) sim.m = j.at("m").get<int>();
  if (j.contains("intercept")) sim.intercept = j.at("intercept").get<bool>();
  if (j.contains("cluster_size")) {
    const auto& v = j.at("cluster_size");
    if (v.is_string() && v.get<std::string>() == "random") {
      sim.size_rule = ClusterSizeRule::NormalAbs;
    } else if (v.is_number_integer()) {
      sim.size_rule = ClusterSizeRule::Fixed;
      sim.fixed_size = v.get<int>();
    } else {
      throw ConfigError("cluster_size must be \"random\" or an integer");
    }
  }
  if (j.contains("sigma")) sim.sigma = j.at("sigma").get<double>();
  if (j.contains("Sigma")) {
    const auto& v = j.at("Sigma");
    if (v.is_number()) {
      sim.Sigma = v.get<double>() * Eigen::MatrixXd::Identity(sim.p, sim.p);
    } else if (v.is_array()) {
      sim.Sigma.resize(sim.p, sim.p);
      if (static_cast<int>(v.size()) != sim.p)
        throw ConfigError("Sigma matrix must be p x p");
      for (int r = 0; r < sim.p; ++r)
        for (int c = 0; c < sim.p; ++c) sim.Sigma(r, c) = v[r][c].get<double>();
    } else {
      throw ConfigError("Sigma must be a number or a matrix");
    }
  } else {
    sim.Sigma = 0.25 * Eigen::MatrixXd::Identity(sim.p, sim.p);
  }
  if (j.contains("seed")) sim.seed = j.at("seed").get<std::uint64_t>();
  sim.truth = SimTruth::defaults(sim.p, sim.q, sim.intercept);
  if (j.contains("truth")) {
    for (auto it = j.at("truth").begin(); it != j.at("truth").end(); ++it)
      sim.truth.set(CoefId::parse(it.key()),
                    TruthFn::parse(it.value().get<std::string>()));
  }
  return sim;
}

// ---------------------------------------------------------------------------
// Subcommand dispatch
// ---------------------------------------------------------------------------

int run_simulate(const json& cfg_json, const RunSpec& spec) {
  std::set<std::string> keys = kFitKeys;
  keys.insert({"study", "reps", "seed", "p", "q", "m", "cluster_size", "sigma",
               "Sigma", "intercept", "truth", "bandwidths", "target", "level",
               "constant"});
  check_keys(cfg_json, keys);

  SimConfig sim = sim_from_json(cfg_json);
  if (spec.seed) sim.seed = *spec.seed;

  FitConfig fit = fit_from_json(cfg_json, false);
  if (!cfg_json.contains("h") && !spec.h) fit.h = 0.15;  // reference study
  if (spec.h) fit.h = *spec.h;
  if (spec.grid) fit.grid.count = *spec.grid;
  fit.intercept = sim.intercept;

  std::string study = cfg_json.value("study", "mise");
  int reps = cfg_json.value("reps", study == "calibration" ? 200 : 100);
  double level = cfg_json.value("level", 0.05);
  if (spec.level) level = *spec.level;

  std::filesystem::create_directories(spec.outdir);
  auto path = [&](const std::string& f) { return spec.outdir + "/" + f; };

  if (study == "generate") {
    GeneratedData gen = generate_dataset(sim, sim.seed);
    save_csv(gen.data, path("dataset.csv"));
    return 0;
  }
  if (study == "mise") {
    MiseReport rep = mise_study(sim, fit, reps);
    std::ostringstream o;
    o << "{\n  \"reps\": " << rep.reps << ",\n  \"failed\": " << rep.failed
      << ",\n  \"mise\": {";
    for (size_t i = 0; i < rep.coef.size(); ++i) {
      if (i) o << ",";
      o << "\n    " << jesc(rep.coef[i]) << ": " << jnum(rep.mise[i]);
    }
    o << "\n  },\n  \"varcomp_mse\": {";
    for (size_t i = 0; i < rep.varcomp_mse.size(); ++i) {
      if (i) o << ",";
      o << "\n    " << jesc(rep.varcomp_mse[i].first) << ": "
        << jnum(rep.varcomp_mse[i].second);
    }
    o << "\n  }\n}\n";
    write_file(path("mise.json"), o.str());

    std::ostringstream c;
    c << "coefficient,mise\n";
    for (size_t i = 0; i < rep.coef.size(); ++i)
      c << rep.coef[i] << ',' << format_double(rep.mise[i]) << "\n";
    write_file(path("mise.csv"), c.str());

    std::ostringstream vm;
    vm << "component,mse\n";
    for (const auto& [name, v] : rep.varcomp_mse)
      vm << name << ',' << format_double(v) << "\n";
    write_file(path("varcomp_mse.csv"), vm.str());
    return 0;
  }
  if (study == "rmise") {
    std::vector<double> bandwidths{0.1, 0.15, 0.2, 0.25, 0.3};
    if (cfg_json.contains("bandwidths"))
      bandwidths = cfg_json.at("bandwidths").get<std::vector<double>>();
    if (!cfg_json.contains("reps")) reps = 20;
    RmiseReport rep = rmise_study(sim, fit, bandwidths, reps);
    std::ostringstream o;
    o << "{\n  \"reps\": " << rep.reps << ",\n  \"bandwidths\": "
      << jarr(rep.bandwidths) << ",\n  \"rmise_a\": " << jarr(rep.rmise_a)
      << ",\n  \"rmise_beta\": " << jarr(rep.rmise_beta) << "\n}\n";
    write_file(path("rmise.json"), o.str());
    std::ostringstream c;
    c << "h,rmise_a,rmise_beta\n";
    for (size_t i = 0; i < bandwidths.size(); ++i)
      c << format_double(rep.bandwidths[i]) << ','
        << format_double(rep.rmise_a[i]) << ','
        << format_double(rep.rmise_beta[i]) << "\n";
    write_file(path("rmise.csv"), c.str());
    return 0;
  }
  if (study == "calibration") {
    CoefId target = CoefId::parse(cfg_json.value("target", "alpha_0_1"));
    CalibrationReport rep = calibration_study(sim, fit, target, level, reps);
    std::ostringstream o;
    o << "{\n  \"target\": " << jesc(rep.target.label())
      << ",\n  \"level\": " << jnum(rep.alpha) << ",\n  \"reps\": " << rep.reps
      << ",\n  \"failed\": " << rep.failed
      << ",\n  \"power\": " << jnum(rep.power)
      << ",\n  \"size\": " << jnum(rep.size)
      << ",\n  \"band_coverage\": " << jnum(rep.band_coverage) << "\n}\n";
    write_file(path("calibration.json"), o.str());
    return 0;
  }
  if (study == "rate") {
    CoefId target = CoefId::parse(cfg_json.value("target", "alpha_0_1"));
    double constant = cfg_json.value("constant", 1.0);
    RateReport rep = rate_study(sim, fit, target, constant, reps);
    std::ostringstream o;
    o << "{\n  \"target\": " << jesc(rep.target.label())
      << ",\n  \"constant\": " << jnum(rep.constant)
      << ",\n  \"reps\": " << rep.reps << ",\n  \"m\": [" << rep.m1 << ","
      << rep.m2 << "]"
      << ",\n  \"mse_constant\": [" << jnum(rep.mse_c_m1) << ","
      << jnum(rep.mse_c_m2) << "]"
      << ",\n  \"mse_sigma2\": [" << jnum(rep.mse_s_m1) << ","
      << jnum(rep.mse_s_m2) << "]"
      << ",\n  \"ratio_constant\": " << jnum(rep.ratio_c())
      << ",\n  \"ratio_sigma2\": " << jnum(rep.ratio_s()) << "\n}\n";
    write_file(path("rate.json"), o.str());
    return 0;
  }
  throw ConfigError("unknown study '" + study + "'");
}

}  // namespace

int run_spec(const RunSpec& spec) {
  try {
    json cfg_json = json::object();
    if (!spec.config.empty()) cfg_json = load_json(spec.config);
    if (!cfg_json.is_object()) throw ConfigError("config must be a JSON object");

    if (spec.subcommand == "simulate") return run_simulate(cfg_json, spec);

    if (spec.input.empty())
      throw ConfigError("subcommand '" + spec.subcommand +
                        "' requires --input");
    PipelineOptions opts =
        options_from_json(cfg_json, !spec.h.has_value());
    if (spec.h) opts.fit.h = *spec.h;
    if (spec.grid) opts.fit.grid.count = *spec.grid;
    if (spec.level) opts.level = *spec.level;
    opts.fit.validate();

    ClusterDataset data =
        stage("load", [&] { return load_csv(spec.input); });

    std::filesystem::create_directories(spec.outdir);
    auto path = [&](const char* f) { return spec.outdir + std::string("/") + f; };

    if (spec.subcommand == "fit") {
      CoefficientCurves curves =
          stage("fit", [&] { return fit_curves(data, opts.fit); });
      std::ostringstream c;
      c << kCurvesHeader;
      for (const CoefId& id : all_coefficients(curves.layout)) {
        int flat = id.flat(curves.layout);
        for (size_t g = 0; g < curves.grid.size(); ++g)
          c << id.label() << ',' << format_double(curves.grid[g]) << ','
            << format_double(curves.fits[g].theta[flat]) << ",,,,\n";
      }
      write_file(path("curves.csv"), c.str());
      return 0;
    }

    if (spec.subcommand == "varcomp") {
      VarianceComponents vc = stage("variance_components", [&] {
        PointEvaluations ev = evaluate_at_observations(data, opts.fit);
        return estimate_components(data, residuals_from_evals(data, ev));
      });
      write_file(path("varcomp.json"), varcomp_json(ids_of(data), vc));
      return 0;
    }

    if (spec.subcommand == "bands" || spec.subcommand == "test") {
      CoefficientCurves curves =
          stage("fit", [&] { return fit_curves(data, opts.fit, true); });
      PointEvaluations evals = stage("evaluate", [&] {
        return evaluate_at_observations(data, opts.fit, &curves);
      });
      VarianceComponents vc = stage("variance_components", [&] {
        return estimate_components(data, residuals_from_evals(data, evals));
      });
      InferenceGrid inf = stage("inference", [&] {
        return inference_on_grid(data, opts.fit, curves, vc);
      });
      if (spec.subcommand == "bands") {
        std::ostringstream c;
        c << kCurvesHeader;
        for (const CoefId& id : all_coefficients(curves.layout))
          append_band_rows(c, confidence_band(curves, inf, id, opts.band_level,
                                              opts.bias_correction));
        write_file(path("curves.csv"), c.str());
      } else {
        std::ostringstream t;
        t << kTestsHeader;
        for (const CoefId& id : all_coefficients(curves.layout)) {
          double c_hat = constant_from_evals(evals, id);
          append_test_row(
              t, test_constancy_with(curves, inf, id, c_hat, opts.level));
        }
        write_file(path("tests.csv"), t.str());
      }
      return 0;
    }

    if (spec.subcommand == "report") {
      write_results(run_pipeline(data, opts), spec.outdir);
      return 0;
    }

    throw ConfigError("unknown subcommand '" + spec.subcommand + "'");
  } catch (const StagedError& e) {
    std::cerr << "{\"error\": \"" << e.type << "\", \"stage\": \""
              << e.stage_name << "\", \"message\": " << jesc(e.what()) << "}"
              << std::endl;
    return 1;
  } catch (const Error& e) {
    std::cerr << "{\"error\": \"" << error_name(e)
              << "\", \"message\": " << jesc(e.what()) << "}" << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": \"InternalError\", \"message\": "
              << jesc(e.what()) << "}" << std::endl;
    return 2;
  }
}

}  // namespace vcmix
