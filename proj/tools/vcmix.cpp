// Command-line front end: fit | varcomp | bands | test | report | simulate.

#include <CLI11.hpp>

#include "vcmix/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Varying-coefficient mixed-effects models for clustered data"};
  app.require_subcommand(1);

  vcmix::RunSpec spec;
  double h = 0, level = 0;
  int grid = 0;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_input) {
    sub->set_help_flag("--help", "print help");  // frees -h for the bandwidth
    auto* in = sub->add_option("--input", spec.input, "input dataset CSV");
    if (needs_input) in->required();
    sub->add_option("--config", spec.config, "JSON configuration file");
    sub->add_option("--out", spec.outdir, "output directory")
        ->default_val(".");
    sub->add_option("--h", h, "bandwidth override");
    sub->add_option("--level", level, "significance level override");
    sub->add_option("--grid", grid, "evaluation grid size override");
    sub->add_option("--seed", seed, "random seed override");
  };

  add_common(app.add_subcommand("fit", "estimate the coefficient curves"), true);
  add_common(app.add_subcommand("varcomp", "estimate variance components"), true);
  add_common(app.add_subcommand("bands", "simultaneous confidence bands"), true);
  add_common(app.add_subcommand("test", "constancy tests per coefficient"), true);
  add_common(app.add_subcommand("report", "full analysis pipeline"), true);
  add_common(app.add_subcommand("simulate", "Monte Carlo studies"), false);

  CLI11_PARSE(app, argc, argv);

  CLI::App* sub = app.get_subcommands().front();
  spec.subcommand = sub->get_name();
  if (sub->count("--h")) spec.h = h;
  if (sub->count("--level")) spec.level = level;
  if (sub->count("--grid")) spec.grid = grid;
  if (sub->count("--seed")) spec.seed = seed;

  return vcmix::run_spec(spec);
}
