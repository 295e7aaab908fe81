#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vcmix/config.hpp"
#include "vcmix/dataset.hpp"
#include "vcmix/inference.hpp"
#include "vcmix/simulation.hpp"

namespace vcmix {

/// Full-analysis options: fit settings, constancy screening level, band
/// level and requested composed-effect profiles.
struct PipelineOptions {
  FitConfig fit;
  double level = 0.05;       // constancy screening
  double band_level = 0.95;  // simultaneous band level
  bool bias_correction = true;
  std::vector<Eigen::VectorXd> z_profiles;
};

struct CoefficientReport {
  CoefId id;
  bool varying = false;
  TestResult constancy;
  std::optional<ConstantEstimate> constant;  // when classified constant
  std::optional<BandResult> band;            // when classified varying
};

struct AnalysisReport {
  int p = 0, q = 0, m = 0;
  long n = 0;
  double a = 0, b = 0;
  std::vector<double> grid;
  std::vector<std::string> cluster_ids;
  CoefLayout layout;
  std::vector<CoefficientReport> coefficients;
  VarianceComponents varcomp;
  std::vector<Eigen::VectorXd> z_profiles;
  std::vector<Eigen::MatrixXd> effects;  // per profile, grid x p
};

/// Runs the whole analysis: curves, variance components, a constancy
/// test per coefficient, constant re-estimation with jackknife SEs,
/// bands for the varying coefficients and composed effects per profile.
AnalysisReport run_pipeline(const ClusterDataset& data,
                            const PipelineOptions& opts);

/// Emits results.json, curves.csv, varcomp.json and tests.csv into
/// outdir; all floating-point values carry 17 significant digits and
/// reruns are byte-identical.
void write_results(const AnalysisReport& report, const std::string& outdir);

// ---------------------------------------------------------------------------
// CLI plumbing
// ---------------------------------------------------------------------------

struct RunSpec {
  std::string subcommand;  // fit | varcomp | bands | test | report | simulate
  std::string input;
  std::string config;
  std::string outdir = ".";
  std::optional<double> h;
  std::optional<double> level;
  std::optional<int> grid;
  std::optional<std::uint64_t> seed;
};

/// Dispatches a CLI invocation; writes output files under spec.outdir.
/// Returns 0 on success; on error prints a JSON error object to stderr
/// and returns a nonzero code.
int run_spec(const RunSpec& spec);

}  // namespace vcmix
