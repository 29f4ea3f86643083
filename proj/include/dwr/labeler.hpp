#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dwr/dwell_stats.hpp"
#include "dwr/ingest.hpp"
#include "dwr/profiles.hpp"

namespace dwr {

enum class LabelKind { NotClicked, NoiseClick, InvalidClick, ValidRead };

// Which valid-read rule fired: T1 dwell time above the global threshold x_l,
// T2 light user, T3 dwell time above the item's historical P10.
enum class ValidReadSource { T1, T2, T3 };

struct ValidReadLabel {
  LabelKind kind = LabelKind::NotClicked;
  std::optional<ValidReadSource> source;  // set iff kind == ValidRead
  double dwell_time_s = 0.0;

  bool operator==(const ValidReadLabel&) const = default;
};

struct LabelingConfig {
  double noise_floor_s = 5.0;
  std::size_t light_user_threshold = 7;
  std::int64_t light_user_window_s = kWeekSeconds;
  // Items with fewer records never satisfy T3.
  std::uint64_t min_records_t3 = 1;
  // Drop the event's own record from its item's P10 history.
  bool exclude_self = false;
};

// Pure function of the event and the frozen statistics/profiles. Rules are
// tried in order T1, T2, T3; all comparisons are strict. A missing item
// profile disables T3; a missing user profile counts as zero clicks.
ValidReadLabel label_event(const InteractionEvent& event, const DwellStats& stats,
                           const ItemDwellProfile* item, const UserActivityProfile* user,
                           const LabelingConfig& cfg = {});

ValidReadLabel label_event(const InteractionEvent& event, const DwellStats& stats,
                           const ProfileStore& profiles, const LabelingConfig& cfg = {});

std::string_view to_string(LabelKind kind);
std::string_view to_string(ValidReadSource source);
LabelKind parse_label_kind(std::string_view s);
ValidReadSource parse_source(std::string_view s);

struct LabeledEvent {
  InteractionEvent event;
  ValidReadLabel label;

  bool operator==(const LabeledEvent&) const = default;
};

// Event columns followed by `label,source`; source is empty unless ValidRead.
std::string format_labeled_event(const LabeledEvent& le);
LabeledEvent parse_labeled_event(std::string_view line, std::size_t line_no = 0);
std::vector<LabeledEvent> read_labeled_log(const std::filesystem::path& path);

struct CompositionReport {
  std::uint64_t total = 0;
  std::map<std::string, std::uint64_t> counts;  // per kind and per source
  std::map<std::string, double> fractions;      // per source, over valid reads

  nlohmann::json to_json() const;
};

class CompositionCounter {
 public:
  void add(const ValidReadLabel& label);
  CompositionReport report() const;

 private:
  std::uint64_t total_ = 0;
  std::uint64_t kinds_[4] = {0, 0, 0, 0};
  std::uint64_t sources_[3] = {0, 0, 0};
};

}  // namespace dwr
