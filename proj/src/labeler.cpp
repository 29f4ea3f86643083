#include "dwr/labeler.hpp"

#include <fstream>

#include "dwr/error.hpp"

namespace dwr {

namespace {

bool passes_item_rule(const InteractionEvent& event, const ItemDwellProfile* item,
                      const LabelingConfig& cfg) {
  if (item == nullptr || item->n_records == 0 || item->n_records < cfg.min_records_t3) return false;
  std::optional<double> p10;
  if (cfg.exclude_self) {
    p10 = item->p10_excluding(event.dwell_time_s);
  } else {
    p10 = item->p10();
  }
  return p10 && event.dwell_time_s > *p10;
}

}  // namespace

ValidReadLabel label_event(const InteractionEvent& event, const DwellStats& stats,
                           const ItemDwellProfile* item, const UserActivityProfile* user,
                           const LabelingConfig& cfg) {
  ValidReadLabel label;
  label.dwell_time_s = event.dwell_time_s;
  if (!event.clicked) {
    label.kind = LabelKind::NotClicked;
    return label;
  }
  if (event.dwell_time_s < cfg.noise_floor_s) {
    label.kind = LabelKind::NoiseClick;
    return label;
  }

  label.kind = LabelKind::ValidRead;
  if (event.dwell_time_s > stats.x_l) {
    label.source = ValidReadSource::T1;
    return label;
  }
  const std::size_t week_clicks =
      user ? user->clicks_in_window(event.timestamp, cfg.light_user_window_s) : 0;
  if (week_clicks < cfg.light_user_threshold) {
    label.source = ValidReadSource::T2;
    return label;
  }
  if (passes_item_rule(event, item, cfg)) {
    label.source = ValidReadSource::T3;
    return label;
  }
  label.kind = LabelKind::InvalidClick;
  return label;
}

ValidReadLabel label_event(const InteractionEvent& event, const DwellStats& stats,
                           const ProfileStore& profiles, const LabelingConfig& cfg) {
  return label_event(event, stats, profiles.find_item(event.item_id),
                     profiles.find_user(event.user_id), cfg);
}

std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::NotClicked: return "NotClicked";
    case LabelKind::NoiseClick: return "NoiseClick";
    case LabelKind::InvalidClick: return "InvalidClick";
    case LabelKind::ValidRead: return "ValidRead";
  }
  return "?";
}

std::string_view to_string(ValidReadSource source) {
  switch (source) {
    case ValidReadSource::T1: return "T1";
    case ValidReadSource::T2: return "T2";
    case ValidReadSource::T3: return "T3";
  }
  return "?";
}

LabelKind parse_label_kind(std::string_view s) {
  if (s == "NotClicked") return LabelKind::NotClicked;
  if (s == "NoiseClick") return LabelKind::NoiseClick;
  if (s == "InvalidClick") return LabelKind::InvalidClick;
  if (s == "ValidRead") return LabelKind::ValidRead;
  throw ValidationError("bad-label", "unknown label '" + std::string(s) + "'");
}

ValidReadSource parse_source(std::string_view s) {
  if (s == "T1") return ValidReadSource::T1;
  if (s == "T2") return ValidReadSource::T2;
  if (s == "T3") return ValidReadSource::T3;
  throw ValidationError("bad-label", "unknown valid-read source '" + std::string(s) + "'");
}

std::string format_labeled_event(const LabeledEvent& le) {
  std::string out = format_event(le.event);
  out += ',';
  out += to_string(le.label.kind);
  out += ',';
  if (le.label.source) out += to_string(*le.label.source);
  return out;
}

LabeledEvent parse_labeled_event(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto source_comma = line.rfind(',');
  if (source_comma == std::string_view::npos) {
    throw ParseError("field-count", line_no, "expected 7 fields in labeled line");
  }
  auto label_comma = line.rfind(',', source_comma == 0 ? 0 : source_comma - 1);
  if (label_comma == std::string_view::npos || label_comma >= source_comma) {
    throw ParseError("field-count", line_no, "expected 7 fields in labeled line");
  }
  LabeledEvent le;
  le.event = parse_event(line.substr(0, label_comma), line_no);
  try {
    le.label.kind = parse_label_kind(line.substr(label_comma + 1, source_comma - label_comma - 1));
    auto source = line.substr(source_comma + 1);
    if (!source.empty()) le.label.source = parse_source(source);
  } catch (const ValidationError& e) {
    throw ParseError(e.reason(), line_no, e.what());
  }
  le.label.dwell_time_s = le.event.dwell_time_s;
  if ((le.label.kind == LabelKind::ValidRead) != le.label.source.has_value()) {
    throw ParseError("bad-label", line_no, "source must be present iff label is ValidRead");
  }
  return le;
}

std::vector<LabeledEvent> read_labeled_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("unreadable-file", "cannot open labeled log " + path.string());
  std::vector<LabeledEvent> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    out.push_back(parse_labeled_event(line, line_no));
  }
  return out;
}

void CompositionCounter::add(const ValidReadLabel& label) {
  ++total_;
  ++kinds_[static_cast<int>(label.kind)];
  if (label.source) ++sources_[static_cast<int>(*label.source)];
}

CompositionReport CompositionCounter::report() const {
  CompositionReport r;
  r.total = total_;
  for (int k = 0; k < 4; ++k) r.counts[std::string(to_string(static_cast<LabelKind>(k)))] = kinds_[k];
  for (int s = 0; s < 3; ++s) {
    r.counts[std::string(to_string(static_cast<ValidReadSource>(s)))] = sources_[s];
  }
  const auto valid = kinds_[static_cast<int>(LabelKind::ValidRead)];
  if (valid > 0) {
    for (int s = 0; s < 3; ++s) {
      r.fractions[std::string(to_string(static_cast<ValidReadSource>(s)))] =
          static_cast<double>(sources_[s]) / static_cast<double>(valid);
    }
  }
  return r;
}

nlohmann::json CompositionReport::to_json() const {
  return {{"total", total}, {"counts", counts}, {"fractions", fractions}};
}

}  // namespace dwr
