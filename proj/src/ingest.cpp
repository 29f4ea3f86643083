#include "dwr/ingest.hpp"

#include <charconv>
#include <cmath>

#include "dwr/error.hpp"

namespace dwr {

std::vector<std::string_view> split_fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

InteractionEvent parse_event(std::string_view record, std::size_t line_no) {
  auto fields = split_fields(record);
  if (fields.size() != 5) {
    throw ParseError("field-count", line_no,
                     "expected 5 fields, got " + std::to_string(fields.size()));
  }

  InteractionEvent ev;
  if (fields[0].empty() || fields[1].empty()) {
    throw ParseError("empty-token", line_no, "empty user_id or item_id");
  }
  ev.user_id = std::string(fields[0]);
  ev.item_id = std::string(fields[1]);

  auto ts = fields[2];
  auto [ts_end, ts_ec] = std::from_chars(ts.data(), ts.data() + ts.size(), ev.timestamp);
  if (ts_ec != std::errc{} || ts_end != ts.data() + ts.size() || ev.timestamp <= 0) {
    throw ParseError("bad-timestamp", line_no, "timestamp must be a positive integer");
  }

  if (fields[3] == "1") {
    ev.clicked = true;
  } else if (fields[3] == "0") {
    ev.clicked = false;
  } else {
    throw ParseError("bad-clicked", line_no, "clicked must be 0 or 1");
  }

  auto dt = fields[4];
  auto [dt_end, dt_ec] = std::from_chars(dt.data(), dt.data() + dt.size(), ev.dwell_time_s);
  if (dt_ec != std::errc{} || dt_end != dt.data() + dt.size() || !std::isfinite(ev.dwell_time_s)) {
    throw ParseError("bad-dwell-time", line_no, "dwell_time_s is not a finite number");
  }
  if (ev.dwell_time_s < 0.0) {
    throw ParseError("negative-dwell-time", line_no, "dwell_time_s is negative");
  }
  if (!ev.clicked && ev.dwell_time_s > 0.0) {
    throw ParseError("dwell-without-click", line_no, "dwell time on an unclicked impression");
  }
  return ev;
}

std::string format_real(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_event(const InteractionEvent& event) {
  std::string out;
  out.reserve(event.user_id.size() + event.item_id.size() + 32);
  out += event.user_id;
  out += ',';
  out += event.item_id;
  out += ',';
  out += std::to_string(event.timestamp);
  out += event.clicked ? ",1," : ",0,";
  out += format_real(event.dwell_time_s);
  return out;
}

std::string format_log(const std::vector<InteractionEvent>& events) {
  std::string out;
  for (const auto& ev : events) {
    out += format_event(ev);
    out += '\n';
  }
  return out;
}

LogScanner::LogScanner(const std::filesystem::path& path, ScanOptions options, ScanPass pass)
    : in_(path), path_(path.string()), options_(options), pass_(pass) {
  if (!in_) throw ValidationError("unreadable-file", "cannot open log " + path_);
}

std::optional<InteractionEvent> LogScanner::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line_no_ == 1 && options_.has_header) continue;
    if (line.empty() || line == "\r") continue;
    try {
      auto ev = parse_event(line, line_no_);
      ++summary_.events;
      return ev;
    } catch (const ParseError& err) {
      ++summary_.skipped;
      if (summary_.skipped > options_.bad_line_budget) {
        throw ParseError(err.reason(), err.line(),
                         std::string(err.what()) + " in " + path_ + " (bad-line budget " +
                             std::to_string(options_.bad_line_budget) + " exceeded)");
      }
    }
  }
  return std::nullopt;
}

std::vector<InteractionEvent> read_log(const std::filesystem::path& path, ScanOptions options,
                                       ScanSummary* summary) {
  LogScanner scanner(path, options);
  std::vector<InteractionEvent> events;
  while (auto ev = scanner.next()) events.push_back(std::move(*ev));
  if (summary) *summary = scanner.summary();
  return events;
}

}  // namespace dwr
