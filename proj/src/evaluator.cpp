#include "dwr/evaluator.hpp"

#include <algorithm>
#include <numeric>

#include "dwr/error.hpp"
#include "dwr/profiles.hpp"

namespace dwr {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("size-mismatch", "scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the midrank sum of positives, kept integral.
  std::uint64_t n_pos = 0;
  std::uint64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      pos_in_group += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    // Ranks i+1..j share the midrank (i + 1 + j) / 2.
    twice_rank_sum += pos_in_group * static_cast<std::uint64_t>(i + 1 + j);
    n_pos += pos_in_group;
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("undefined-auc", "AUC needs at least one positive and one negative");
  }
  // 2U = 2 * rank_sum - n_pos * (n_pos + 1)
  const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double relaimpr(double auc_value, double base_auc) {
  if (!(base_auc > 0.5)) throw ValidationError("bad-base-auc", "RelaImpr needs base AUC > 0.5");
  if (!(auc_value >= 0.5)) throw ValidationError("bad-auc", "RelaImpr needs AUC >= 0.5");
  return (auc_value - 0.5) / (base_auc - 0.5) - 1.0;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"auc", auc}, {"n_pos", n_pos}, {"n_neg", n_neg}};
  j["base_auc"] = base_auc ? nlohmann::json(*base_auc) : nlohmann::json(nullptr);
  j["relaimpr"] = relaimpr ? nlohmann::json(*relaimpr) : nlohmann::json(nullptr);
  return j;
}

int activeness_level(std::uint64_t week_clicks, const ActivenessBoundaries& boundaries) {
  int level = 1;
  for (auto b : boundaries) {
    if (b <= week_clicks) ++level;
  }
  return level;
}

ActivenessBoundaries equal_frequency_boundaries(std::span<const std::uint64_t> week_clicks) {
  if (week_clicks.empty()) throw ValidationError("no-users", "cannot derive boundaries from no users");
  std::vector<std::uint64_t> sorted(week_clicks.begin(), week_clicks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  ActivenessBoundaries b{};
  for (std::size_t j = 1; j <= 6; ++j) {
    b[j - 1] = sorted[std::min(n - 1, j * n / 7)];
    if (j > 1 && b[j - 1] <= b[j - 2]) b[j - 1] = b[j - 2] + 1;
  }
  return b;
}

std::map<std::string, std::uint64_t> weekly_clicks(std::span<const InteractionEvent> events) {
  std::map<std::string, std::uint64_t> clicks;
  if (events.empty()) return clicks;
  auto [mn, mx] = std::minmax_element(events.begin(), events.end(),
                                      [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  const auto span = std::max<std::int64_t>(kWeekSeconds, mx->timestamp - mn->timestamp + 1);
  for (const auto& ev : events) {
    auto& c = clicks[ev.user_id];
    if (ev.clicked) ++c;
  }
  for (auto& [user, c] : clicks) {
    c = static_cast<std::uint64_t>((static_cast<unsigned __int128>(c) * kWeekSeconds) /
                                   static_cast<unsigned __int128>(span));
  }
  return clicks;
}

int decile_of_rank(std::uint64_t i, std::uint64_t n) {
  for (int d = 1; d <= 10; ++d) {
    if (i <= (static_cast<std::uint64_t>(d) * n + 9) / 10) return d;
  }
  return 10;
}

namespace {

using CellSums = std::array<std::array<std::pair<double, std::uint64_t>, 10>, 7>;

CellSums cell_sums(std::span<const InteractionEvent> events, const ActivenessBoundaries& boundaries,
                   bool global_deciles) {
  auto per_user = weekly_clicks(events);
  std::array<std::vector<double>, 7> by_level;
  std::vector<std::pair<double, int>> all;
  for (const auto& ev : events) {
    if (!ev.clicked) continue;
    int level = activeness_level(per_user.at(ev.user_id), boundaries);
    if (global_deciles) {
      all.emplace_back(ev.dwell_time_s, level);
    } else {
      by_level[level - 1].push_back(ev.dwell_time_s);
    }
  }

  CellSums sums{};
  if (global_deciles) {
    std::stable_sort(all.begin(), all.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < all.size(); ++i) {
      int d = decile_of_rank(i + 1, all.size());
      auto& cell = sums[all[i].second - 1][d - 1];
      cell.first += all[i].first;
      ++cell.second;
    }
    return sums;
  }
  for (int l = 0; l < 7; ++l) {
    auto& v = by_level[l];
    std::sort(v.begin(), v.end());
    for (std::size_t i = 0; i < v.size(); ++i) {
      int d = decile_of_rank(i + 1, v.size());
      sums[l][d - 1].first += v[i];
      ++sums[l][d - 1].second;
    }
  }
  return sums;
}

}  // namespace

std::vector<MigrationCell> migration_report(std::span<const InteractionEvent> baseline,
                                            std::span<const InteractionEvent> treatment,
                                            const MigrationOptions& options) {
  auto has_click = [](std::span<const InteractionEvent> log) {
    return std::any_of(log.begin(), log.end(), [](const auto& e) { return e.clicked; });
  };
  if (!has_click(baseline) || !has_click(treatment)) {
    throw ValidationError("no-clicks", "migration report needs clicks in both logs");
  }
  ActivenessBoundaries boundaries{};
  if (options.boundaries) {
    boundaries = *options.boundaries;
    for (std::size_t j = 1; j < boundaries.size(); ++j) {
      if (boundaries[j] <= boundaries[j - 1]) {
        throw ValidationError("bad-boundaries", "activeness boundaries must be strictly ascending");
      }
    }
  } else {
    auto per_user = weekly_clicks(baseline);
    std::vector<std::uint64_t> counts;
    counts.reserve(per_user.size());
    for (const auto& [u, c] : per_user) counts.push_back(c);
    boundaries = equal_frequency_boundaries(counts);
  }

  auto base = cell_sums(baseline, boundaries, options.global_deciles);
  auto treat = cell_sums(treatment, boundaries, options.global_deciles);
  std::vector<MigrationCell> cells;
  cells.reserve(70);
  for (int l = 0; l < 7; ++l) {
    for (int d = 0; d < 10; ++d) {
      MigrationCell c;
      c.level = l + 1;
      c.decile = d + 1;
      if (base[l][d].second > 0) c.mean_base = base[l][d].first / static_cast<double>(base[l][d].second);
      if (treat[l][d].second > 0) c.mean_treat = treat[l][d].first / static_cast<double>(treat[l][d].second);
      if (c.mean_base && c.mean_treat) c.delta = *c.mean_treat - *c.mean_base;
      cells.push_back(c);
    }
  }
  return cells;
}

std::string format_migration_csv(const std::vector<MigrationCell>& cells, bool with_percent) {
  auto fmt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("NA"); };
  std::string out = with_percent ? "level,decile,mean_base,mean_treat,delta,delta_pct\n"
                                 : "level,decile,mean_base,mean_treat,delta\n";
  for (const auto& c : cells) {
    out += std::to_string(c.level) + ',' + std::to_string(c.decile) + ',' + fmt(c.mean_base) + ',' +
           fmt(c.mean_treat) + ',' + fmt(c.delta);
    if (with_percent) {
      std::optional<double> pct;
      if (c.delta && *c.mean_base != 0.0) pct = 100.0 * *c.delta / *c.mean_base;
      out += ',' + fmt(pct);
    }
    out += '\n';
  }
  return out;
}

}  // namespace dwr
