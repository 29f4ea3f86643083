// dwr: dwell-time valid-read pipeline.
//
//   dwr [--config pipeline.ini] <command> [flags]
//
// The optional config file is INI/TOML with one section per command, e.g.
//   [train]
//   epochs = 5
//   objective = "vr_ndt"
// Flags given on the command line win over config values.
#include <iostream>

#include <CLI11.hpp>

#include "dwr/error.hpp"
#include "dwr/pipeline.hpp"

namespace pl = dwr::pipeline;

namespace {

int fail(int status, const std::string& reason, const std::string& message) {
  std::cerr << "error " << reason << ": " << message << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dwell-time valid-read pipeline"};
  app.set_config("--config", "", "Pipeline config file (INI/TOML, one section per command)");
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print artifact and file-format versions");

  nlohmann::json summary;
  std::function<nlohmann::json()> run;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic event log and sidecar");
  pl::SimulateArgs sim;
  std::string sim_config;
  std::uint64_t sim_seed = 0;
  std::string sim_sidecar;
  simulate->add_option("--sim-config", sim_config, "Simulator key = value config");
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Overrides the config seed");
  simulate->add_option("--out", sim.out, "Event log output")->required();
  simulate->add_option("--sidecar", sim_sidecar, "Ground-truth sidecar CSV output");
  simulate->callback([&] {
    if (!sim_config.empty()) sim.sim_config = sim_config;
    if (sim_seed_opt->count() > 0) sim.seed = sim_seed;
    if (!sim_sidecar.empty()) sim.sidecar = sim_sidecar;
    run = [&] { return pl::simulate(sim); };
  });

  auto* fit = app.add_subcommand("fit-stats", "Fit the ln dwell-time Gaussian");
  pl::FitStatsArgs fit_args;
  std::string fit_out;
  fit->add_option("--log", fit_args.log)->required();
  fit->add_flag("--header", fit_args.has_header, "Log has a header line");
  fit->add_option("--out", fit_out, "Stats JSON output");
  fit->callback([&] {
    if (!fit_out.empty()) fit_args.out = fit_out;
    run = [&] { return pl::fit_stats(fit_args); };
  });

  auto* report = app.add_subcommand("stats-report", "Histogram of ln dwell time");
  pl::StatsReportArgs report_args;
  report->add_option("--log", report_args.log)->required();
  report->add_flag("--header", report_args.has_header);
  report->add_option("--bins", report_args.bins)->capture_default_str();
  report->add_option("--out", report_args.out)->required();
  report->callback([&] { run = [&] { return pl::stats_report(report_args); }; });

  auto* profiles = app.add_subcommand("build-profiles", "Build item and user profiles");
  pl::BuildProfilesArgs prof_args;
  profiles->add_option("--log", prof_args.log)->required();
  profiles->add_flag("--header", prof_args.has_header);
  profiles->add_option("--seed", prof_args.seed, "Seed recorded in the store");
  profiles->add_option("--out", prof_args.out)->required();
  profiles->callback([&] { run = [&] { return pl::build_profiles(prof_args); }; });

  auto* label = app.add_subcommand("label", "Label events as valid reads");
  pl::LabelArgs label_args;
  std::string label_report;
  label->add_option("--log", label_args.log)->required();
  label->add_flag("--header", label_args.has_header);
  label->add_option("--stats", label_args.stats)->required();
  label->add_option("--profiles", label_args.profiles)->required();
  label->add_option("--out", label_args.out)->required();
  label->add_option("--report", label_report, "Composition report JSON");
  label->add_option("--noise-floor", label_args.labeling.noise_floor_s)->capture_default_str();
  label->add_option("--light-user-threshold", label_args.labeling.light_user_threshold)->capture_default_str();
  label->add_option("--min-records-t3", label_args.labeling.min_records_t3)->capture_default_str();
  label->add_flag("--exclude-self", label_args.labeling.exclude_self, "Drop the event's own record from P10");
  label->callback([&] {
    if (!label_report.empty()) label_args.report = label_report;
    run = [&] { return pl::label(label_args); };
  });

  auto* ndt = app.add_subcommand("ndt-params", "Normalized dwell-time curve parameters");
  pl::NdtParamsArgs ndt_args;
  std::string ndt_stats, ndt_out;
  ndt->add_option("--stats", ndt_stats);
  ndt->add_option("--precision", ndt_args.precision)->capture_default_str();
  ndt->add_option("--t-max", ndt_args.t_max)->capture_default_str();
  ndt->add_option("--mode", ndt_args.mode)->check(CLI::IsMember({"paper_default", "solved"}))->capture_default_str();
  ndt->add_option("--out", ndt_out);
  ndt->callback([&] {
    if (!ndt_stats.empty()) ndt_args.stats = ndt_stats;
    if (!ndt_out.empty()) ndt_args.out = ndt_out;
    run = [&] { return pl::ndt_params(ndt_args); };
  });

  auto* train = app.add_subcommand("train", "Train the two-tower model");
  pl::TrainArgs train_args;
  std::string train_ndt, train_trace, objective = "vr_ndt", neg_mode = "unit";
  std::int64_t before = 0;
  train->add_option("--labeled", train_args.labeled)->required();
  train->add_option("--ndt", train_ndt, "NdtParams JSON (default: offset 15, tau 20)");
  train->add_option("--objective", objective)
      ->check(CLI::IsMember({"single_ctr", "ctr_logdt", "vr_logdt", "vr_ndt"}))
      ->capture_default_str();
  train->add_option("--neg-mode", neg_mode)->check(CLI::IsMember({"unit", "literal"}))->capture_default_str();
  train->add_option("--seed", train_args.train.seed)->capture_default_str();
  train->add_option("--epochs", train_args.train.epochs)->capture_default_str();
  train->add_option("--batch-size", train_args.train.batch_size)->capture_default_str();
  train->add_option("--lr", train_args.train.learning_rate)->capture_default_str();
  train->add_option("--embed-dim", train_args.embed_dim)->capture_default_str();
  train->add_option("--bottom-dim", train_args.bottom_dim)->capture_default_str();
  train->add_option("--hidden1", train_args.hidden1)->capture_default_str();
  train->add_option("--hidden2", train_args.hidden2)->capture_default_str();
  auto* before_opt = train->add_option("--before", before, "Train on events with timestamp < this");
  train->add_option("--out", train_args.out, "Checkpoint output")->required();
  train->add_option("--trace", train_trace, "Loss trace CSV output");
  train->callback([&] {
    train_args.train.objective = dwr::parse_objective(objective);
    train_args.train.neg_mode = dwr::parse_negative_weighting(neg_mode);
    if (!train_ndt.empty()) train_args.ndt = train_ndt;
    if (!train_trace.empty()) train_args.trace = train_trace;
    if (before_opt->count() > 0) train_args.before = before;
    run = [&] { return pl::train(train_args); };
  });

  auto* eval = app.add_subcommand("eval", "Valid-read AUC and RelaImpr");
  pl::EvalArgs eval_args;
  std::string eval_base_model, eval_out;
  double base_auc = 0.0;
  std::int64_t from = 0;
  eval->add_option("--labeled", eval_args.labeled)->required();
  eval->add_option("--model", eval_args.model)->required();
  auto* base_model_opt = eval->add_option("--baseline-model", eval_base_model);
  auto* base_auc_opt = eval->add_option("--base-auc", base_auc);
  base_model_opt->excludes(base_auc_opt);
  auto* from_opt = eval->add_option("--from", from, "Evaluate events with timestamp >= this");
  eval->add_option("--out", eval_out);
  eval->callback([&] {
    if (base_model_opt->count() > 0) eval_args.baseline_model = eval_base_model;
    if (base_auc_opt->count() > 0) eval_args.base_auc = base_auc;
    if (from_opt->count() > 0) eval_args.from = from;
    if (!eval_out.empty()) eval_args.out = eval_out;
    run = [&] { return pl::eval(eval_args); };
  });

  auto* migrate = app.add_subcommand("migrate-report", "Dwell-time migration by activeness level and decile");
  pl::MigrateReportArgs mig_args;
  std::vector<std::uint64_t> boundaries;
  migrate->add_option("--baseline", mig_args.baseline)->required();
  migrate->add_option("--treatment", mig_args.treatment)->required();
  migrate->add_flag("--header", mig_args.has_header);
  migrate->add_option("--boundaries", boundaries, "Six ascending weekly-click boundaries")
      ->expected(6)
      ->delimiter(',');
  migrate->add_flag("--global-deciles", mig_args.global_deciles);
  migrate->add_flag("--percent", mig_args.percent, "Add a delta_pct column");
  migrate->add_option("--out", mig_args.out)->required();
  migrate->callback([&] {
    if (!boundaries.empty()) {
      dwr::ActivenessBoundaries b{};
      std::copy(boundaries.begin(), boundaries.end(), b.begin());
      mig_args.boundaries = b;
    }
    run = [&] { return pl::migrate_report(mig_args); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(1, "usage", e.what());
  } catch (const dwr::ValidationError& e) {
    return fail(1, e.reason(), e.what());
  }

  if (show_version) {
    std::cout << pl::version_info().dump(2) << '\n';
    return 0;
  }
  if (!run) {
    std::cerr << app.help();
    return fail(1, "usage", "no command given");
  }
  try {
    summary = run();
  } catch (const dwr::ValidationError& e) {
    return fail(1, e.reason(), e.what());
  } catch (const dwr::Error& e) {
    return fail(2, e.reason(), e.what());
  } catch (const std::exception& e) {
    return fail(2, "internal", e.what());
  }
  std::cout << summary.dump() << '\n';
  return 0;
}
