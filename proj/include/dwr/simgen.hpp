#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dwr/ingest.hpp"

namespace dwr {

// An item length class. Dwell time given a click is log-normal with
// ln T ~ N(ln_mean + coupling * affinity, ln_std); click_shift is added to
// the click logit of every item in the class.
struct ItemClass {
  std::string name;
  double share = 1.0;
  double ln_mean = 4.0;
  double ln_std = 1.0;
  double click_shift = 0.0;
};

enum class SimMode {
  // Users and items carry latent vectors; clicks and dwell times follow affinity.
  affinity,
  // Click population constructed so every click's valid-read rule is known.
  planted_mix,
};

// Key-value configuration, one `key = value` per line, '#' starts a comment.
// Lists are comma separated; `class = name:share:ln_mean:ln_std[:click_shift]`
// may repeat (the first occurrence replaces the defaults).
struct SimConfig {
  SimMode mode = SimMode::affinity;
  std::uint64_t seed = 1;
  std::size_t n_users = 400;
  std::size_t n_items = 200;
  std::int64_t start_ts = 1700000000;
  int span_days = 14;

  // affinity mode
  std::size_t latent_dim = 8;
  double latent_std = 0.5;
  double click_bias = -1.5;
  double dt_affinity_coupling = 0.5;
  std::array<double, 7> activeness_mix = {0.2, 0.15, 0.15, 0.15, 0.15, 0.1, 0.1};
  std::array<double, 7> impressions_per_week = {3, 8, 15, 60, 120, 200, 320};
  std::vector<ItemClass> item_classes = {
      {"news", 0.35, 3.0, 0.7, 0.0},
      {"article", 0.35, 4.2, 0.8, 0.0},
      {"longform", 0.15, 5.0, 0.8, -0.3},
      {"clickbait", 0.15, 1.9, 0.6, 1.2},
  };
  // Dwell time used for the sidecar's valid-read propensity.
  double vr_reference_s = 15.0;

  // planted_mix mode
  std::size_t n_events = 100000;
  double click_rate = 0.3;
  double noise_fraction = 0.1;
  double invalid_fraction = 0.1;
  std::array<double, 3> planted_mix = {0.8, 0.1, 0.1};  // T1, T2, T3 over valid reads
};

// Throws ValidationError("bad-sim-config") with the offending key.
SimConfig parse_sim_config(std::string_view text);
SimConfig load_sim_config(const std::filesystem::path& path);
void validate(const SimConfig& cfg);

// Ground truth for one generated event, aligned with the log row.
struct SidecarRow {
  double affinity = 0.0;
  int user_level = 1;
  std::string item_class;
  double click_prob = 0.0;
  double vr_propensity = 0.0;  // click_prob * P(T > vr_reference_s | click)
  std::string planted_label;   // planted_mix mode only
};

struct SimOutput {
  std::vector<InteractionEvent> events;
  std::vector<SidecarRow> sidecar;
};

// Deterministic given cfg (including seed). Events are ordered by timestamp.
//
// planted_mix construction: light users (user_level 1) each make at most 4
// clicks, all of them T2. Heavy users (user_level 7) click inside a 6-day
// block whose first 6 clicks are long (T1) or noise, so every later click sees
// at least 7 clicks in its trailing week. Items in group A receive noise, T2
// and T3 clicks, with noise being over 10% of each item's records so P10 < 5 s;
// items in group B receive T1 clicks plus invalid clicks at one fixed dwell time
// that is every B item's P10. Short dwell times sit below the realized x_l and
// long ones above it; generation fails if the draw violates that.
SimOutput generate(const SimConfig& cfg);

std::string format_sidecar(const SimOutput& out);

// Treatment log for migration checks: within each targeted level, clicked
// dwell times at or below the level's nearest-rank `quantile` value q get
// +shift_s, and larger ones become max(T, q + shift_s). The map is monotone,
// so the decile membership of every click is unchanged and the lowest
// deciles (up to `quantile`) move by exactly shift_s.
struct MigrationPlant {
  std::vector<int> target_levels = {1, 2, 3};
  double quantile = 0.3;
  double shift_s = 10.0;
};

std::vector<InteractionEvent> plant_migration(std::span<const InteractionEvent> baseline,
                                              const std::map<std::string, int>& user_levels,
                                              const MigrationPlant& plant);

}  // namespace dwr
