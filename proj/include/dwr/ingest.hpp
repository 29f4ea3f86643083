#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dwr {

// One impression row. dwell_time_s is zero for unclicked impressions.
struct InteractionEvent {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
  bool clicked = false;
  double dwell_time_s = 0.0;

  bool operator==(const InteractionEvent&) const = default;
};

// Parses `user_id,item_id,timestamp,clicked,dwell_time_s`. Throws ParseError
// carrying line_no on any schema or invariant violation.
InteractionEvent parse_event(std::string_view record, std::size_t line_no = 0);

// Canonical form: dwell time is written with the shortest representation that
// parses back to the same double ("42.0" becomes "42"). Lines already in
// canonical form round-trip byte for byte.
std::string format_event(const InteractionEvent& event);

// Shortest round-trip decimal for a double.
std::string format_real(double value);

// Splits on ',' without trimming; a trailing '\r' is dropped first.
std::vector<std::string_view> split_fields(std::string_view line);

enum class ScanPass { stats, label };

struct ScanOptions {
  bool has_header = false;
  // Number of bad lines tolerated (and skipped) before the scan fails.
  std::size_t bad_line_budget = 0;
};

struct ScanSummary {
  std::size_t events = 0;
  std::size_t skipped = 0;
};

// Single-consumer pull stream over a log file, in file order.
class LogScanner {
 public:
  LogScanner(const std::filesystem::path& path, ScanOptions options = {},
             ScanPass pass = ScanPass::stats);

  std::optional<InteractionEvent> next();
  const ScanSummary& summary() const { return summary_; }
  ScanPass pass() const { return pass_; }

 private:
  std::ifstream in_;
  std::string path_;
  ScanOptions options_;
  ScanPass pass_;
  ScanSummary summary_;
  std::size_t line_no_ = 0;
};

std::vector<InteractionEvent> read_log(const std::filesystem::path& path,
                                       ScanOptions options = {},
                                       ScanSummary* summary = nullptr);

std::string format_log(const std::vector<InteractionEvent>& events);

}  // namespace dwr
