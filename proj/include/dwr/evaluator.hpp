#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwr/ingest.hpp"

namespace dwr {

// Mann-Whitney AUC: share of (positive, negative) pairs where the positive
// scores higher, ties counting one half. Computed from midranks in
// O(n log n); labels are 0/1. Throws ValidationError("undefined-auc") when
// either class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);

// (auc - 0.5) / (base_auc - 0.5) - 1. Requires base_auc > 0.5 and auc >= 0.5.
double relaimpr(double auc_value, double base_auc);

struct EvalReport {
  double auc = 0.0;
  std::optional<double> base_auc;
  std::optional<double> relaimpr;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;

  nlohmann::json to_json() const;
};

using ActivenessBoundaries = std::array<std::uint64_t, 6>;

// 1 + number of boundaries <= week_clicks; 7 is the most active level.
int activeness_level(std::uint64_t week_clicks, const ActivenessBoundaries& boundaries);

// Boundary j (1-based) is the value at sorted 0-based index floor(j * n / 7),
// bumped as needed to keep the boundaries strictly ascending.
ActivenessBoundaries equal_frequency_boundaries(std::span<const std::uint64_t> week_clicks);

// Average weekly click count per user: floor(clicks * 604800 / span), where span
// is the log's time extent (max - min + 1 seconds), at least one week.
std::map<std::string, std::uint64_t> weekly_clicks(std::span<const InteractionEvent> events);

struct MigrationCell {
  int level = 1;
  int decile = 1;
  std::optional<double> mean_base;
  std::optional<double> mean_treat;
  std::optional<double> delta;  // treat - base; empty if either side is empty
};

struct MigrationOptions {
  // Defaults to equal-frequency boundaries over the baseline log.
  std::optional<ActivenessBoundaries> boundaries;
  // Cut deciles over all clicks instead of within each activeness level.
  bool global_deciles = false;
};

// Decile of 1-based sorted index i among n values: the smallest d with
// i <= ceil(d * n / 10), consistent with nearest-rank quantiles.
int decile_of_rank(std::uint64_t i, std::uint64_t n);

// Per (activeness level, dwell-time decile) mean dwell time of clicked events
// in each log. Levels come from each log's own weekly click counts. Output is
// level-major, decile-minor, always 70 cells.
std::vector<MigrationCell> migration_report(std::span<const InteractionEvent> baseline,
                                            std::span<const InteractionEvent> treatment,
                                            const MigrationOptions& options = {});

// CSV `level,decile,mean_base,mean_treat,delta` with NA for empty cells;
// with_percent appends a `delta_pct` column (100 * delta / mean_base).
std::string format_migration_csv(const std::vector<MigrationCell>& cells, bool with_percent = false);

}  // namespace dwr
