#include "dwr/pipeline.hpp"

#include <cmath>

#include "dwr/binary_io.hpp"
#include "dwr/dwell_stats.hpp"
#include "dwr/error.hpp"
#include "dwr/ingest.hpp"
#include "dwr/mtl_model.hpp"
#include "dwr/profiles.hpp"
#include "dwr/simgen.hpp"

namespace dwr::pipeline {

namespace {

void require_input(const Path& path, const std::string& name) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError("missing-input:" + name, "input '" + name + "' not found: " + path.string());
  }
}

nlohmann::json read_json(const Path& path, const std::string& name) {
  require_input(path, name);
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("bad-json:" + name, path.string() + ": " + e.what());
  }
}

void write_json(const Path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

ScanOptions scan_options(bool has_header) {
  ScanOptions o;
  o.has_header = has_header;
  return o;
}

}  // namespace

nlohmann::json version_info() {
  return {{"artifact_version", kArtifactVersion},
          {"formats",
           {{"profile_store", {{"magic", "VRPF"}, {"version", ProfileStore::kVersion}}},
            {"checkpoint", {{"magic", "VRMT"}, {"version", kCheckpointVersion}}},
            {"event_log", "user_id,item_id,timestamp,clicked,dwell_time_s"},
            {"labeled_log", "user_id,item_id,timestamp,clicked,dwell_time_s,label,source"},
            {"loss_trace", "epoch,L_v,L_w,L"},
            {"histogram", "bin_center,count"},
            {"migration", "level,decile,mean_base,mean_treat,delta"}}}};
}

nlohmann::json simulate(const SimulateArgs& args) {
  SimConfig cfg;
  if (args.sim_config) {
    require_input(*args.sim_config, "sim-config");
    cfg = load_sim_config(*args.sim_config);
  }
  if (args.seed) cfg.seed = *args.seed;
  auto out = generate(cfg);
  write_file_atomic(args.out, format_log(out.events));
  if (args.sidecar) write_file_atomic(*args.sidecar, format_sidecar(out));

  std::size_t clicks = 0;
  for (const auto& e : out.events) clicks += e.clicked ? 1 : 0;
  nlohmann::json j = {{"command", "simulate"},
                      {"seed", cfg.seed},
                      {"mode", cfg.mode == SimMode::affinity ? "affinity" : "planted_mix"},
                      {"events", out.events.size()},
                      {"clicks", clicks},
                      {"log", args.out.string()}};
  if (args.sidecar) j["sidecar"] = args.sidecar->string();
  return j;
}

nlohmann::json fit_stats(const FitStatsArgs& args) {
  require_input(args.log, "log");
  LogScanner scanner(args.log, scan_options(args.has_header), ScanPass::stats);
  StatsAccumulator acc;
  while (auto ev = scanner.next()) acc.observe(*ev);
  auto stats = to_json(acc.finalize());
  if (args.out) write_json(*args.out, stats);
  nlohmann::json j = {{"command", "fit-stats"}, {"events", scanner.summary().events}, {"stats", stats}};
  return j;
}

nlohmann::json stats_report(const StatsReportArgs& args) {
  require_input(args.log, "log");
  if (args.bins == 0) throw ValidationError("bad-bins", "--bins must be positive");
  auto events = read_log(args.log, scan_options(args.has_header));
  auto bins = histogram_ln(events, args.bins);
  std::string csv = "bin_center,count\n";
  std::uint64_t total = 0;
  for (const auto& b : bins) {
    csv += format_real(b.center) + ',' + std::to_string(b.count) + '\n';
    total += b.count;
  }
  write_file_atomic(args.out, csv);
  return {{"command", "stats-report"}, {"bins", bins.size()}, {"clicks", total}, {"out", args.out.string()}};
}

nlohmann::json build_profiles(const BuildProfilesArgs& args) {
  require_input(args.log, "log");
  LogScanner scanner(args.log, scan_options(args.has_header), ScanPass::stats);
  ProfileStore store;
  store.seed = args.seed;
  while (auto ev = scanner.next()) store.observe(*ev);
  store.save(args.out);
  return {{"command", "build-profiles"},
          {"seed", args.seed},
          {"events", scanner.summary().events},
          {"items", store.items().size()},
          {"users", store.users().size()},
          {"out", args.out.string()}};
}

nlohmann::json label(const LabelArgs& args) {
  require_input(args.log, "log");
  require_input(args.stats, "stats");
  require_input(args.profiles, "profiles");
  const auto stats = dwell_stats_from_json(read_json(args.stats, "stats"));
  const auto store = ProfileStore::load(args.profiles);

  LogScanner scanner(args.log, scan_options(args.has_header), ScanPass::label);
  CompositionCounter counter;
  std::string out;
  while (auto ev = scanner.next()) {
    LabeledEvent le{*ev, label_event(*ev, stats, store, args.labeling)};
    counter.add(le.label);
    out += format_labeled_event(le);
    out += '\n';
  }
  write_file_atomic(args.out, out);
  auto report = counter.report().to_json();
  report["seed"] = store.seed;
  if (args.report) write_json(*args.report, report);
  return {{"command", "label"}, {"out", args.out.string()}, {"composition", report}};
}

nlohmann::json ndt_params(const NdtParamsArgs& args) {
  if (args.mode != "paper_default" && args.mode != "solved") {
    throw ValidationError("bad-ndt-mode", "--mode must be paper_default or solved");
  }
  nlohmann::json j = {{"selected", args.mode},
                      {"paper_default", to_json(make_ndt_params(kDefaultNdtOffset, kDefaultNdtTau, args.t_max,
                                                                args.precision))}};
  if (args.stats) {
    const auto stats = dwell_stats_from_json(read_json(*args.stats, "stats"));
    j["solved"] = to_json(solved_ndt_params(stats, args.precision, args.t_max));
  } else if (args.mode == "solved") {
    throw ValidationError("missing-input:stats", "solved mode needs --stats");
  }
  if (args.out) write_json(*args.out, j);
  return {{"command", "ndt-params"}, {"params", j}};
}

nlohmann::json train(const TrainArgs& args) {
  require_input(args.labeled, "labeled");
  NdtParams ndt_p = default_ndt_params();
  if (args.ndt) ndt_p = ndt_params_from_json(read_json(*args.ndt, "ndt"));

  auto events = read_labeled_log(args.labeled);
  if (args.before) {
    std::erase_if(events, [&](const LabeledEvent& le) { return le.event.timestamp >= *args.before; });
  }
  if (events.empty()) throw ValidationError("no-instances", "no labeled events to train on");

  const auto encoder = FeatureEncoder::fit(events);
  const auto instances = build_instances(events, encoder, ndt_p, args.train);
  MtlConfig arch;
  arch.slots = encoder.slots();
  arch.embed_dim = args.embed_dim;
  arch.bottom_dim = args.bottom_dim;
  arch.tower_hidden1 = args.hidden1;
  arch.tower_hidden2 = args.hidden2;

  auto result = dwr::train(args.train, arch, instances);
  nlohmann::json meta = {{"seed", args.train.seed},
                         {"objective", to_string(args.train.objective)},
                         {"neg_mode", to_string(args.train.neg_mode)},
                         {"epochs", args.train.epochs},
                         {"batch_size", args.train.batch_size},
                         {"learning_rate", args.train.learning_rate},
                         {"n_instances", instances.size()},
                         {"ndt", to_json(ndt_p)},
                         {"vocabulary", encoder.to_json()}};
  meta["before"] = args.before ? nlohmann::json(*args.before) : nlohmann::json(nullptr);
  save_checkpoint(args.out, result.net, meta);
  if (args.trace) write_file_atomic(*args.trace, format_loss_trace(result.trace));

  const auto& last = result.trace.back();
  return {{"command", "train"},
          {"seed", args.train.seed},
          {"objective", to_string(args.train.objective)},
          {"instances", instances.size()},
          {"initial_loss", result.trace.front().total},
          {"final_loss", last.total},
          {"out", args.out.string()}};
}

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, std::span<const LabeledEvent> events) {
  if (!ckpt.metadata.contains("vocabulary")) {
    throw ValidationError("bad-checkpoint", "checkpoint has no vocabulary");
  }
  const auto encoder = FeatureEncoder::from_json(ckpt.metadata.at("vocabulary"));
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(events.size());
  labels.reserve(events.size());
  EvalReport r;
  for (const auto& le : events) {
    scores.push_back(score(ckpt.net, encoder.encode(le.event)));
    const int y = le.label.kind == LabelKind::ValidRead ? 1 : 0;
    labels.push_back(y);
    (y == 1 ? r.n_pos : r.n_neg) += 1;
  }
  r.auc = auc(scores, labels);
  return r;
}

nlohmann::json eval(const EvalArgs& args) {
  require_input(args.labeled, "labeled");
  require_input(args.model, "model");
  if (args.baseline_model && args.base_auc) {
    throw ValidationError("conflicting-baseline", "give either --baseline-model or --base-auc");
  }
  auto events = read_labeled_log(args.labeled);
  if (args.from) {
    std::erase_if(events, [&](const LabeledEvent& le) { return le.event.timestamp < *args.from; });
  }
  auto report = evaluate_checkpoint(load_checkpoint(args.model), events);
  if (args.baseline_model) {
    require_input(*args.baseline_model, "baseline-model");
    report.base_auc = evaluate_checkpoint(load_checkpoint(*args.baseline_model), events).auc;
  } else if (args.base_auc) {
    report.base_auc = *args.base_auc;
  }
  if (report.base_auc) report.relaimpr = relaimpr(report.auc, *report.base_auc);
  if (!std::isfinite(report.auc)) throw RuntimeFailure("non-finite-auc", "AUC is not finite");

  auto j = report.to_json();
  if (args.out) write_json(*args.out, j);
  return {{"command", "eval"}, {"report", j}};
}

nlohmann::json migrate_report(const MigrateReportArgs& args) {
  require_input(args.baseline, "baseline");
  require_input(args.treatment, "treatment");
  const auto base = read_log(args.baseline, scan_options(args.has_header));
  const auto treat = read_log(args.treatment, scan_options(args.has_header));
  MigrationOptions opts;
  opts.boundaries = args.boundaries;
  opts.global_deciles = args.global_deciles;
  const auto cells = migration_report(base, treat, opts);
  write_file_atomic(args.out, format_migration_csv(cells, args.percent));
  std::size_t empty = 0;
  for (const auto& c : cells) empty += c.delta ? 0 : 1;
  return {{"command", "migrate-report"}, {"cells", cells.size()}, {"empty_cells", empty}, {"out", args.out.string()}};
}

}  // namespace dwr::pipeline
