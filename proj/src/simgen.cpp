#include "dwr/simgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dwr/binary_io.hpp"
#include "dwr/error.hpp"
#include "dwr/ndt.hpp"
#include "dwr/rank_sketch.hpp"

namespace dwr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_key(std::string_view key, const std::string& why) {
  throw ValidationError("bad-sim-config", "sim config key '" + std::string(key) + "': " + why);
}

double to_double(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad_key(key, "not a number");
  return out;
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
  v = trim(v);
  Int out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) bad_key(key, "not an integer");
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <std::size_t N>
std::array<double, N> to_array(std::string_view key, std::string_view v) {
  auto parts = split(v, ',');
  if (parts.size() != N) bad_key(key, "expected " + std::to_string(N) + " values");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_double(key, parts[i]);
  return out;
}

}  // namespace

SimConfig parse_sim_config(std::string_view text) {
  SimConfig cfg;
  bool classes_replaced = false;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    auto line_end = text.find('\n', line_start);
    auto line = text.substr(line_start, line_end == std::string_view::npos ? std::string_view::npos
                                                                             : line_end - line_start);
    line_start = line_end == std::string_view::npos ? text.size() + 1 : line_end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) bad_key(line, "expected key = value");
    auto key = trim(line.substr(0, eq));
    auto val = trim(line.substr(eq + 1));

    if (key == "mode") {
      if (val == "affinity") cfg.mode = SimMode::affinity;
      else if (val == "planted_mix") cfg.mode = SimMode::planted_mix;
      else bad_key(key, "must be affinity or planted_mix");
    } else if (key == "seed") cfg.seed = to_int<std::uint64_t>(key, val);
    else if (key == "n_users") cfg.n_users = to_int<std::size_t>(key, val);
    else if (key == "n_items") cfg.n_items = to_int<std::size_t>(key, val);
    else if (key == "start_ts") cfg.start_ts = to_int<std::int64_t>(key, val);
    else if (key == "span_days") cfg.span_days = to_int<int>(key, val);
    else if (key == "latent_dim") cfg.latent_dim = to_int<std::size_t>(key, val);
    else if (key == "latent_std") cfg.latent_std = to_double(key, val);
    else if (key == "click_bias") cfg.click_bias = to_double(key, val);
    else if (key == "dt_affinity_coupling") cfg.dt_affinity_coupling = to_double(key, val);
    else if (key == "activeness_mix") cfg.activeness_mix = to_array<7>(key, val);
    else if (key == "impressions_per_week") cfg.impressions_per_week = to_array<7>(key, val);
    else if (key == "vr_reference_s") cfg.vr_reference_s = to_double(key, val);
    else if (key == "n_events") cfg.n_events = to_int<std::size_t>(key, val);
    else if (key == "click_rate") cfg.click_rate = to_double(key, val);
    else if (key == "noise_fraction") cfg.noise_fraction = to_double(key, val);
    else if (key == "invalid_fraction") cfg.invalid_fraction = to_double(key, val);
    else if (key == "planted_mix") cfg.planted_mix = to_array<3>(key, val);
    else if (key == "class") {
      auto parts = split(val, ':');
      if (parts.size() != 4 && parts.size() != 5) bad_key(key, "expected name:share:ln_mean:ln_std[:click_shift]");
      if (!classes_replaced) {
        cfg.item_classes.clear();
        classes_replaced = true;
      }
      ItemClass c{std::string(parts[0]), to_double(key, parts[1]), to_double(key, parts[2]),
                  to_double(key, parts[3]), parts.size() == 5 ? to_double(key, parts[4]) : 0.0};
      cfg.item_classes.push_back(std::move(c));
    } else {
      bad_key(key, "unknown key");
    }
  }
  validate(cfg);
  return cfg;
}

SimConfig load_sim_config(const std::filesystem::path& path) { return parse_sim_config(read_file(path)); }

void validate(const SimConfig& cfg) {
  auto sums_to_one = [](auto first, auto last) {
    double s = std::accumulate(first, last, 0.0);
    return std::abs(s - 1.0) < 1e-9 && std::all_of(first, last, [](double x) { return x >= 0.0; });
  };
  if (cfg.span_days <= 0 || cfg.start_ts <= 0) bad_key("span_days", "time span must be positive");
  if (cfg.mode == SimMode::planted_mix) {
    if (cfg.n_events == 0 || cfg.n_items < 2) bad_key("n_events", "planted mode needs events and >= 2 items");
    if (!(cfg.click_rate > 0.0 && cfg.click_rate <= 1.0)) bad_key("click_rate", "must be in (0, 1]");
    if (cfg.noise_fraction < 0.0 || cfg.invalid_fraction < 0.0 || cfg.noise_fraction + cfg.invalid_fraction >= 1.0) {
      bad_key("noise_fraction", "noise + invalid fractions must be in [0, 1)");
    }
    if (!sums_to_one(cfg.planted_mix.begin(), cfg.planted_mix.end())) bad_key("planted_mix", "must sum to 1");
    if (cfg.span_days < 7) bad_key("span_days", "planted mode needs at least 7 days");
    return;
  }
  if (cfg.n_users == 0 || cfg.n_items == 0) bad_key("n_users", "need at least one user and one item");
  if (cfg.latent_dim == 0 || cfg.latent_std < 0.0) bad_key("latent_dim", "latent model must be non-degenerate");
  if (!sums_to_one(cfg.activeness_mix.begin(), cfg.activeness_mix.end())) bad_key("activeness_mix", "must sum to 1");
  if (std::any_of(cfg.impressions_per_week.begin(), cfg.impressions_per_week.end(), [](double x) { return x < 0.0; })) {
    bad_key("impressions_per_week", "must be non-negative");
  }
  if (cfg.item_classes.empty()) bad_key("class", "need at least one item class");
  std::vector<double> shares;
  for (const auto& c : cfg.item_classes) {
    if (c.ln_std < 0.0) bad_key("class", "ln_std must be >= 0 for " + c.name);
    shares.push_back(c.share);
  }
  if (!sums_to_one(shares.begin(), shares.end())) bad_key("class", "class shares must sum to 1");
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double round_ms(double t) { return std::round(t * 1000.0) / 1000.0; }

struct Generated {
  InteractionEvent event;
  SidecarRow side;
};

SimOutput finish(std::vector<Generated> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Generated& a, const Generated& b) { return a.event.timestamp < b.event.timestamp; });
  SimOutput out;
  out.events.reserve(rows.size());
  out.sidecar.reserve(rows.size());
  for (auto& r : rows) {
    out.events.push_back(std::move(r.event));
    out.sidecar.push_back(std::move(r.side));
  }
  return out;
}

std::string token(char prefix, std::size_t i) { return prefix + std::to_string(i); }

SimOutput generate_affinity(const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> latent(0.0, cfg.latent_std);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::discrete_distribution<int> level_dist(cfg.activeness_mix.begin(), cfg.activeness_mix.end());
  std::vector<double> shares;
  for (const auto& c : cfg.item_classes) shares.push_back(c.share);
  std::discrete_distribution<std::size_t> class_dist(shares.begin(), shares.end());

  std::vector<int> user_level(cfg.n_users);
  std::vector<std::vector<double>> user_vec(cfg.n_users, std::vector<double>(cfg.latent_dim));
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    user_level[u] = level_dist(rng) + 1;
    for (auto& x : user_vec[u]) x = latent(rng);
  }
  std::vector<std::size_t> item_class(cfg.n_items);
  std::vector<std::vector<double>> item_vec(cfg.n_items, std::vector<double>(cfg.latent_dim));
  for (std::size_t i = 0; i < cfg.n_items; ++i) {
    item_class[i] = class_dist(rng);
    for (auto& x : item_vec[i]) x = latent(rng);
  }

  const std::int64_t span_s = static_cast<std::int64_t>(cfg.span_days) * 86400;
  std::uniform_int_distribution<std::int64_t> ts_dist(cfg.start_ts, cfg.start_ts + span_s - 1);
  std::uniform_int_distribution<std::size_t> item_dist(0, cfg.n_items - 1);
  const double log_ref = std::log(cfg.vr_reference_s);

  std::vector<Generated> rows;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const double rate = cfg.impressions_per_week[user_level[u] - 1] * cfg.span_days / 7.0;
    std::poisson_distribution<std::int64_t> n_impr(rate);
    const auto m = rate > 0.0 ? n_impr(rng) : 0;
    for (std::int64_t k = 0; k < m; ++k) {
      const auto i = item_dist(rng);
      const auto& cls = cfg.item_classes[item_class[i]];
      const double affinity = std::inner_product(user_vec[u].begin(), user_vec[u].end(), item_vec[i].begin(), 0.0);
      const double p_click = logistic(cfg.click_bias + cls.click_shift + affinity);
      const double ln_mu = cls.ln_mean + cfg.dt_affinity_coupling * affinity;

      Generated g;
      g.event.user_id = token('u', u);
      g.event.item_id = token('i', i);
      g.event.timestamp = ts_dist(rng);
      g.event.clicked = unit(rng) < p_click;
      const double z = std_normal(rng);
      if (g.event.clicked) g.event.dwell_time_s = round_ms(std::exp(ln_mu + cls.ln_std * z));

      double p_long = 0.0;
      if (cls.ln_std > 0.0) {
        p_long = normal_sf((log_ref - ln_mu) / cls.ln_std);
      } else {
        p_long = ln_mu > log_ref ? 1.0 : 0.0;
      }
      g.side = {affinity, user_level[u], cls.name, p_click, p_click * p_long, ""};
      rows.push_back(std::move(g));
    }
  }
  return finish(std::move(rows));
}

enum class Planted { T1, T2, T3, Noise, Invalid };

std::string_view planted_name(Planted p) {
  switch (p) {
    case Planted::T1: return "T1";
    case Planted::T2: return "T2";
    case Planted::T3: return "T3";
    case Planted::Noise: return "NoiseClick";
    case Planted::Invalid: return "InvalidClick";
  }
  return "?";
}

[[noreturn]] void infeasible(const std::string& why) {
  throw ValidationError("planted-mix-infeasible", "planted mix cannot be realized: " + why);
}

struct PlantedClick {
  Planted kind;
  std::size_t user = 0;  // index into the combined user list
  std::size_t item = 0;
  std::int64_t ts = 0;
  double dwell = 0.0;
};

constexpr std::size_t kLightClicksPerUser = 4;
constexpr std::size_t kHeavyClicksPerUser = 40;
constexpr std::size_t kHeavyWarmup = 6;
constexpr double kInvalidDwell = 6.0;

SimOutput generate_planted(const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  const auto n_clicks = static_cast<std::size_t>(std::llround(cfg.n_events * cfg.click_rate));
  const auto n_noise = static_cast<std::size_t>(std::llround(n_clicks * cfg.noise_fraction));
  const auto n_invalid = static_cast<std::size_t>(std::llround(n_clicks * cfg.invalid_fraction));
  const std::size_t n_valid = n_clicks - n_noise - n_invalid;
  const auto n_t2 = static_cast<std::size_t>(std::llround(n_valid * cfg.planted_mix[1]));
  const auto n_t3 = static_cast<std::size_t>(std::llround(n_valid * cfg.planted_mix[2]));
  const std::size_t n_t1 = n_valid - n_t2 - n_t3;

  std::vector<PlantedClick> clicks;
  clicks.reserve(n_clicks);
  auto add = [&clicks](Planted k, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) clicks.push_back({k, 0, 0, 0, 0.0});
  };
  // Category-sorted so round-robin dealing gives every user and item a
  // near-exact share of each category.
  add(Planted::T1, n_t1);
  add(Planted::Noise, n_noise);
  add(Planted::Invalid, n_invalid);
  add(Planted::T3, n_t3);
  add(Planted::T2, n_t2);

  const std::size_t n_heavy_clicks = n_clicks - n_t2;
  const std::size_t n_light = (n_t2 + kLightClicksPerUser - 1) / kLightClicksPerUser;
  const std::size_t n_heavy = std::max<std::size_t>(1, n_heavy_clicks / kHeavyClicksPerUser);
  const std::size_t n_users = n_light + n_heavy;  // heavy users first, then light

  const std::size_t n_group_a = cfg.n_items / 2;
  const std::size_t n_group_b = cfg.n_items - n_group_a;
  std::size_t deal_heavy = 0, deal_light = 0, deal_a = 0, deal_b = 0;
  for (auto& c : clicks) {
    if (c.kind == Planted::T2) {
      c.user = n_heavy + (deal_light++ % n_light);
    } else {
      c.user = deal_heavy++ % n_heavy;
    }
    if (c.kind == Planted::T1 || c.kind == Planted::Invalid) {
      c.item = n_group_a + (deal_b++ % n_group_b);
    } else {
      c.item = deal_a++ % n_group_a;
    }
  }

  // Dwell times. Short ones cluster just above the noise floor; long ones sit
  // far enough above that x_l = exp(mu - sigma) lands in between.
  for (auto& c : clicks) {
    switch (c.kind) {
      case Planted::Noise: c.dwell = round_ms(3.0 + 1.9 * unit(rng)); break;
      case Planted::Invalid: c.dwell = kInvalidDwell; break;
      case Planted::T2:
      case Planted::T3: c.dwell = round_ms(5.5 + 1.5 * unit(rng)); break;
      case Planted::T1: c.dwell = round_ms(std::exp(5.5 + 0.3 * std_normal(rng))); break;
    }
  }

  // Timestamps.
  const std::int64_t span_s = static_cast<std::int64_t>(cfg.span_days) * 86400;
  const std::int64_t block_s = 6 * 86400;
  std::vector<std::vector<std::size_t>> by_user(n_users);
  for (std::size_t i = 0; i < clicks.size(); ++i) by_user[clicks[i].user].push_back(i);
  std::uniform_int_distribution<std::int64_t> any_ts(cfg.start_ts, cfg.start_ts + span_s - 1);
  std::uniform_int_distribution<std::int64_t> block_start(cfg.start_ts, cfg.start_ts + span_s - block_s);
  for (std::size_t u = 0; u < n_users; ++u) {
    auto& mine = by_user[u];
    if (u >= n_heavy) {
      for (auto i : mine) clicks[i].ts = any_ts(rng);
      continue;
    }
    std::shuffle(mine.begin(), mine.end(), rng);
    auto is_warmup = [&](std::size_t i) {
      return clicks[i].kind == Planted::T1 || clicks[i].kind == Planted::Noise;
    };
    std::size_t placed = 0;
    for (std::size_t j = 0; j < mine.size() && placed < kHeavyWarmup; ++j) {
      if (is_warmup(mine[j])) std::rotate(mine.begin() + placed, mine.begin() + j, mine.begin() + j + 1), ++placed;
    }
    const bool needs_warmup = std::any_of(mine.begin(), mine.end(), [&](auto i) { return !is_warmup(i); });
    if (needs_warmup && placed < kHeavyWarmup) infeasible("a heavy user lacks 6 long or noise clicks");
    std::set<std::int64_t> offsets;
    std::uniform_int_distribution<std::int64_t> off(0, block_s - 1);
    while (offsets.size() < mine.size()) offsets.insert(off(rng));
    const auto start = block_start(rng);
    std::size_t j = 0;
    for (auto o : offsets) clicks[mine[j++]].ts = start + o;
  }

  // Check the realized thresholds against the construction.
  {
    double s1 = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& c : clicks) {
      if (c.dwell <= 0.0) continue;
      double x = std::log(c.dwell);
      s1 += x;
      s2 += x * x;
      ++n;
    }
    if (n < 2) infeasible("too few clicks");
    const double mu = s1 / n;
    const double sigma = std::sqrt(std::max(0.0, s2 / n - mu * mu));
    const double x_l = std::exp(mu - sigma);
    double short_max = kInvalidDwell, long_min = std::numeric_limits<double>::infinity();
    for (const auto& c : clicks) {
      if (c.kind == Planted::T1) long_min = std::min(long_min, c.dwell);
      if (c.kind == Planted::T2 || c.kind == Planted::T3) short_max = std::max(short_max, c.dwell);
    }
    if (!(short_max < x_l && x_l < long_min)) {
      infeasible("x_l = " + std::to_string(x_l) + " does not separate short (" + std::to_string(short_max) +
                 ") from long (" + std::to_string(long_min) + ") dwell times");
    }
  }
  // Every item's P10 must land on its planted floor records.
  {
    std::vector<std::size_t> records(cfg.n_items, 0), floor_records(cfg.n_items, 0);
    for (const auto& c : clicks) {
      ++records[c.item];
      if (c.kind == Planted::Noise || c.kind == Planted::Invalid) ++floor_records[c.item];
    }
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      if (records[i] > 0 && floor_records[i] < nearest_rank_index(0.1, records[i])) {
        infeasible("item " + std::to_string(i) + " has too few floor records for its P10");
      }
    }
  }

  std::vector<Generated> rows;
  rows.reserve(cfg.n_events);
  for (const auto& c : clicks) {
    Generated g;
    g.event = {token('u', c.user), token('i', c.item), c.ts, true, c.dwell};
    const bool valid = c.kind == Planted::T1 || c.kind == Planted::T2 || c.kind == Planted::T3;
    g.side = {0.0, c.user < n_heavy ? 7 : 1, c.item < n_group_a ? "A" : "B", 1.0, valid ? 1.0 : 0.0,
              std::string(planted_name(c.kind))};
    rows.push_back(std::move(g));
  }
  std::uniform_int_distribution<std::size_t> any_user(0, n_users - 1);
  std::uniform_int_distribution<std::size_t> any_item(0, cfg.n_items - 1);
  for (std::size_t k = n_clicks; k < cfg.n_events; ++k) {
    Generated g;
    const auto u = any_user(rng);
    const auto i = any_item(rng);
    g.event = {token('u', u), token('i', i), any_ts(rng), false, 0.0};
    g.side = {0.0, u < n_heavy ? 7 : 1, i < n_group_a ? "A" : "B", 0.0, 0.0, "NotClicked"};
    rows.push_back(std::move(g));
  }
  return finish(std::move(rows));
}

}  // namespace

SimOutput generate(const SimConfig& cfg) {
  validate(cfg);
  return cfg.mode == SimMode::planted_mix ? generate_planted(cfg) : generate_affinity(cfg);
}

std::string format_sidecar(const SimOutput& out) {
  std::string s = "user_id,item_id,timestamp,affinity,user_level,item_class,click_prob,vr_propensity,planted_label\n";
  for (std::size_t i = 0; i < out.events.size(); ++i) {
    const auto& ev = out.events[i];
    const auto& sc = out.sidecar[i];
    s += ev.user_id + ',' + ev.item_id + ',' + std::to_string(ev.timestamp) + ',' + format_real(sc.affinity) + ',' +
         std::to_string(sc.user_level) + ',' + sc.item_class + ',' + format_real(sc.click_prob) + ',' +
         format_real(sc.vr_propensity) + ',' + sc.planted_label + '\n';
  }
  return s;
}

std::vector<InteractionEvent> plant_migration(std::span<const InteractionEvent> baseline,
                                              const std::map<std::string, int>& user_levels,
                                              const MigrationPlant& plant) {
  std::map<int, std::vector<double>> dwell_by_level;
  auto level_of = [&](const std::string& user) {
    auto it = user_levels.find(user);
    return it == user_levels.end() ? 0 : it->second;
  };
  auto targeted = [&](int level) {
    return std::find(plant.target_levels.begin(), plant.target_levels.end(), level) != plant.target_levels.end();
  };
  for (const auto& ev : baseline) {
    if (!ev.clicked) continue;
    int level = level_of(ev.user_id);
    if (targeted(level)) dwell_by_level[level].push_back(ev.dwell_time_s);
  }
  std::map<int, double> cut;
  for (auto& [level, v] : dwell_by_level) {
    std::sort(v.begin(), v.end());
    cut[level] = v[nearest_rank_index(plant.quantile, v.size()) - 1];
  }

  std::vector<InteractionEvent> out(baseline.begin(), baseline.end());
  for (auto& ev : out) {
    if (!ev.clicked) continue;
    auto it = cut.find(level_of(ev.user_id));
    if (it == cut.end()) continue;
    const double q = it->second;
    ev.dwell_time_s = ev.dwell_time_s <= q ? ev.dwell_time_s + plant.shift_s
                                           : std::max(ev.dwell_time_s, q + plant.shift_s);
  }
  return out;
}

}  // namespace dwr
