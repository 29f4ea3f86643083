#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dwr/evaluator.hpp"
#include "dwr/labeler.hpp"
#include "dwr/ndt.hpp"
#include "dwr/trainer.hpp"

// Command implementations behind the `dwr` executable. Each returns the JSON
// summary printed on stdout and writes its artifacts atomically. Missing input
// files raise ValidationError("missing-input:<name>").
namespace dwr::pipeline {

using Path = std::filesystem::path;

inline constexpr const char* kArtifactVersion = "1.0.0";

nlohmann::json version_info();

struct SimulateArgs {
  std::optional<Path> sim_config;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  Path out;
  std::optional<Path> sidecar;
};
nlohmann::json simulate(const SimulateArgs& args);

struct FitStatsArgs {
  Path log;
  bool has_header = false;
  std::optional<Path> out;
};
nlohmann::json fit_stats(const FitStatsArgs& args);

struct StatsReportArgs {
  Path log;
  bool has_header = false;
  std::size_t bins = 50;
  Path out;
};
nlohmann::json stats_report(const StatsReportArgs& args);

struct BuildProfilesArgs {
  Path log;
  bool has_header = false;
  std::uint64_t seed = 0;
  Path out;
};
nlohmann::json build_profiles(const BuildProfilesArgs& args);

struct LabelArgs {
  Path log;
  bool has_header = false;
  Path stats;
  Path profiles;
  Path out;
  std::optional<Path> report;
  LabelingConfig labeling;
};
nlohmann::json label(const LabelArgs& args);

struct NdtParamsArgs {
  std::optional<Path> stats;
  double precision = kDefaultNdtPrecision;
  double t_max = kDefaultNdtTmax;
  std::string mode = "paper_default";  // or "solved"
  std::optional<Path> out;
};
nlohmann::json ndt_params(const NdtParamsArgs& args);

struct TrainArgs {
  Path labeled;
  std::optional<Path> ndt;  // defaults to the curve with offset 15, tau 20
  TrainConfig train;
  std::uint32_t embed_dim = 16;
  std::uint32_t bottom_dim = 64;
  std::uint32_t hidden1 = 64;
  std::uint32_t hidden2 = 32;
  // Train only on events with timestamp < before.
  std::optional<std::int64_t> before;
  Path out;
  std::optional<Path> trace;
};
nlohmann::json train(const TrainArgs& args);

struct EvalArgs {
  Path labeled;
  Path model;
  std::optional<Path> baseline_model;
  std::optional<double> base_auc;
  // Evaluate only events with timestamp >= from.
  std::optional<std::int64_t> from;
  std::optional<Path> out;
};
nlohmann::json eval(const EvalArgs& args);

struct MigrateReportArgs {
  Path baseline;
  Path treatment;
  bool has_header = false;
  std::optional<ActivenessBoundaries> boundaries;
  bool global_deciles = false;
  bool percent = false;
  Path out;
};
nlohmann::json migrate_report(const MigrateReportArgs& args);

// Valid-read AUC of a checkpoint on labeled events.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, std::span<const LabeledEvent> events);

}  // namespace dwr::pipeline
