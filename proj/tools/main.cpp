#include <iostream>

#include "CLI11.hpp"
#include "profiler/cli.hpp"

using namespace profiler;

int main(int argc, char** argv) {
  CLI::App app{"hospital outcome profiling toolkit"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, cli::CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "random seed")->default_val(1);
    cmd->add_option("--out", o.out_dir, "output directory")->default_val("out");
    cmd->add_option("--config", o.config_path, "JSON run config");
    cmd->add_option("--threads", o.threads, "cap worker threads (0 = library default)");
  };

  cli::SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "generate a calibrated synthetic cohort");
  c_sim->add_option("targets", sim.targets_path, "calibration targets JSON")->required();
  c_sim->add_option("coefficients", sim.coef_path, "risk-model coefficients JSON")->required();
  c_sim->add_option("--volume", sim.volume_override,
                    "override every hospital's volume (deaths rescale)");
  add_common(c_sim, sim);

  cli::ProfileOpts prof;
  auto* c_prof = app.add_subcommand("profile", "fit models and build the report card");
  c_prof->add_option("cohort", prof.cohort_path, "cohort CSV")->required();
  c_prof->add_flag("--crossval", prof.crossval, "add leave-one-out p-values (I extra fits)");
  double tau_fixed_val = -1.0;
  auto* tf = c_prof->add_option("--tau-fixed", tau_fixed_val,
                                "also run the in-control analysis at this fixed tau");
  c_prof->add_option("--anchor", prof.anchor_pct,
                     "anchor rate in percent (default: cohort pooled rate)");
  c_prof->add_flag("--emit-draws", prof.emit_draws, "also write the flat draws CSV");
  add_common(c_prof, prof);

  cli::SensitivityOpts sens;
  auto* c_sens = app.add_subcommand("sensitivity", "posterior summaries under several priors");
  c_sens->add_option("cohort", sens.cohort_path, "cohort CSV")->required();
  c_sens->add_option("--priors", sens.priors_path, "JSON list of tau priors")->required();
  add_common(c_sens, sens);

  cli::CompositeOpts comp;
  auto* c_comp = app.add_subcommand("composite", "multi-measure quality scores");
  c_comp->add_option("--panel", comp.panel_path, "panel CSV (hospital,measure,num,den)");
  c_comp->add_option("--patients", comp.patient_path, "patient-level eligibility CSV");
  c_comp->add_option("--model", comp.model, "pooled | allornone | rasch | 2pl")
      ->default_val("pooled");
  add_common(c_comp, comp);

  cli::ClassicalOpts klass;
  auto* c_cls = app.add_subcommand("classical", "fixed-effects fit, z scores, O/E table");
  c_cls->add_option("cohort", klass.cohort_path, "cohort CSV")->required();
  c_cls->add_option("--threshold", klass.threshold, "z flag threshold")->default_val(1.645);
  add_common(c_cls, klass);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return cli::kInputError;
  }

  auto fill_seed_flag = [&](CLI::App* cmd, cli::CommonOpts& o) {
    o.seed_given = cmd->count("--seed") > 0;
  };

  if (c_sim->parsed()) {
    fill_seed_flag(c_sim, sim);
    return cli::cmd_simulate(sim);
  }
  if (c_prof->parsed()) {
    fill_seed_flag(c_prof, prof);
    if (tf->count() > 0) prof.tau_fixed = tau_fixed_val;
    return cli::cmd_profile(prof);
  }
  if (c_sens->parsed()) {
    fill_seed_flag(c_sens, sens);
    return cli::cmd_sensitivity(sens);
  }
  if (c_comp->parsed()) {
    fill_seed_flag(c_comp, comp);
    return cli::cmd_composite(comp);
  }
  if (c_cls->parsed()) {
    fill_seed_flag(c_cls, klass);
    return cli::cmd_classical(klass);
  }
  std::cerr << "no command given\n";
  return cli::kInputError;
}
