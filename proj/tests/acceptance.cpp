// Runs the end-to-end acceptance checks and prints one PASS/FAIL line each.
// Exit status is nonzero if any check fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwr/binary_io.hpp"
#include "dwr/dwell_stats.hpp"
#include "dwr/evaluator.hpp"
#include "dwr/labeler.hpp"
#include "dwr/ndt.hpp"
#include "dwr/pipeline.hpp"
#include "dwr/profiles.hpp"
#include "dwr/rank_sketch.hpp"
#include "dwr/simgen.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace dwr;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

constexpr std::int64_t kT0 = 1700000000;

// 1. Curve scale constants and sample points.
void ndt_constants(Outcome& o) {
  const auto t0 = Clock::now();
  const auto s = derive_scale(15.0, 20.0, 1.575);
  o.check(std::abs(s.a - 2.319) <= 1e-3, "a");
  o.check(std::abs(s.b - 0.744) <= 1e-3, "b");
  const auto p = default_ndt_params();
  const double want[3][2] = {{0.0, 0.0}, {15.0, 0.4155}, {35.0, 0.9513}};
  for (const auto& [t, v] : want) {
    o.check(std::abs(ndt(t, p) - v) <= 1e-3, "ndt(" + std::to_string(t) + ")");
  }
  const double secs = seconds_since(t0);
  o.check(secs < 1.0, "runtime");
  o.detail << "a=" << s.a << " b=" << s.b << " ndt(35)=" << ndt(35.0, p) << " " << secs << "s";
}

// 2. Relative improvement over the baseline AUC.
void relaimpr_arithmetic(Outcome& o) {
  const double inputs[3] = {0.7849, 0.7932, 0.7968};
  const double want_pct[3] = {1.39, 4.34, 5.62};
  for (int k = 0; k < 3; ++k) {
    const double pct = 100.0 * relaimpr(inputs[k], 0.7810);
    o.check(std::abs(pct - want_pct[k]) <= 0.01 + 1e-12, "relaimpr " + std::to_string(inputs[k]));
    o.detail << pct << "% ";
  }
}

// 3. Threshold recovery from a seeded log-normal sample.
void threshold_recovery(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::lognormal_distribution<double> d(4.003, 1.295);
  StatsAccumulator acc;
  for (int i = 0; i < 100000; ++i) acc.add(d(rng));
  const auto s = acc.finalize();
  const double secs = seconds_since(t0);
  o.check(s.x_l >= 14.5 && s.x_l <= 15.5, "x_l");
  o.check(s.x_h >= 193.0 && s.x_h <= 207.0, "x_h");
  o.check(secs < 5.0, "runtime");
  o.detail << "x_l=" << s.x_l << " x_h=" << s.x_h << " " << secs << "s";
}

// 4. Labeler goldens, planted rule mix and T1 monotonicity.
void labeler(Outcome& o) {
  DwellStats stats;
  stats.x_l = 15.0;
  stats.x_h = 200.0;
  stats.n = 100;
  auto user = [](int clicks) {
    UserActivityProfile u{"u1", {}};
    for (int i = 0; i < clicks; ++i) u.record_click(kT0 - 3600 * (i + 1));
    return u;
  };
  auto item = [](double p10) {
    ItemDwellProfile p;
    p.item_id = "i1";
    p.observe(static_cast<float>(p10));
    for (int i = 0; i < 9; ++i) p.observe(static_cast<float>(p10 + 100.0));
    return p;
  };
  auto click = [](double t) { return InteractionEvent{"u1", "i1", kT0, true, t}; };
  const auto light = user(3), heavy = user(10);
  const auto item6 = item(6.0), item9 = item(9.0);
  using L = ValidReadLabel;
  o.check(label_event(click(20.0), stats, &item9, &heavy) == L{LabelKind::ValidRead, ValidReadSource::T1, 20.0}, "golden T1");
  o.check(label_event(click(4.0), stats, &item6, &light) == L{LabelKind::NoiseClick, std::nullopt, 4.0}, "golden noise");
  o.check(label_event(click(8.0), stats, &item9, &light) == L{LabelKind::ValidRead, ValidReadSource::T2, 8.0}, "golden T2");
  o.check(label_event(click(8.0), stats, &item6, &heavy) == L{LabelKind::ValidRead, ValidReadSource::T3, 8.0}, "golden T3");
  o.check(label_event(click(8.0), stats, &item9, &heavy) == L{LabelKind::InvalidClick, std::nullopt, 8.0}, "golden invalid");
  o.check(label_event({"u1", "i1", kT0, false, 0.0}, stats, &item6, &light) == L{LabelKind::NotClicked, std::nullopt, 0.0},
          "golden not clicked");

  auto cfg = parse_sim_config("mode = planted_mix\nn_events = 100000\nseed = 8\n");
  const auto corpus = generate(cfg);
  ProfileStore store;
  for (const auto& e : corpus.events) store.observe(e);
  const auto fitted = fit_log_normal(corpus.events);
  CompositionCounter counter;
  for (const auto& e : corpus.events) counter.add(label_event(e, fitted, store));
  const auto report = counter.report();
  const char* names[3] = {"T1", "T2", "T3"};
  for (int k = 0; k < 3; ++k) {
    const auto it = report.fractions.find(names[k]);
    const double got = it == report.fractions.end() ? 0.0 : it->second;
    o.check(std::abs(got - cfg.planted_mix[k]) <= 0.01, std::string("mix ") + names[k]);
    o.detail << names[k] << "=" << got << " ";
  }

  std::uint64_t prev = ~std::uint64_t{0};
  for (double x_l : {6.0, 10.0, 20.0, 40.0, 80.0}) {
    DwellStats s = fitted;
    s.x_l = x_l;
    CompositionCounter c;
    for (const auto& e : corpus.events) c.add(label_event(e, s, store));
    const auto t1 = c.report().counts["T1"];
    o.check(t1 <= prev, "T1 monotone at x_l=" + std::to_string(x_l));
    prev = t1;
  }
}

// 5. Sketch deciles against an exact sort.
double rank_error(const std::vector<float>& sorted, double p, float estimate) {
  const auto n = sorted.size();
  const auto target = nearest_rank_index(p, n);
  const auto lo = static_cast<std::uint64_t>(std::lower_bound(sorted.begin(), sorted.end(), estimate) - sorted.begin()) + 1;
  const auto hi = static_cast<std::uint64_t>(std::upper_bound(sorted.begin(), sorted.end(), estimate) - sorted.begin());
  if (target < lo) return static_cast<double>(lo - target) / static_cast<double>(n);
  if (target > hi) return static_cast<double>(target - hi) / static_cast<double>(n);
  return 0.0;
}

void quantile_sketch(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  std::lognormal_distribution<float> d(4.0f, 1.3f);
  std::vector<float> v(1000000);
  for (auto& x : v) x = d(rng);
  const auto k = RankSketch::k_for_epsilon(QuantileEstimator::kDefaultEpsilon);
  RankSketch whole(k), a(k), b(k);
  for (std::size_t i = 0; i < v.size(); ++i) {
    whole.insert(v[i]);
    (i < v.size() / 2 ? a : b).insert(v[i]);
  }
  a.merge(b);
  std::sort(v.begin(), v.end());
  double worst_single = 0.0, worst_merged = 0.0;
  for (int dec = 1; dec <= 9; ++dec) {
    const double p = dec / 10.0;
    const double single = rank_error(v, p, whole.quantile(p));
    const double merged = rank_error(v, p, a.quantile(p));
    worst_single = std::max(worst_single, single);
    worst_merged = std::max(worst_merged, std::max(merged, std::abs(merged - single)));
  }
  const double secs = seconds_since(t0);
  o.check(worst_single <= 0.01, "single-stream rank error");
  o.check(worst_merged <= 0.02, "merged rank error");
  o.check(secs < 30.0, "runtime");
  o.detail << "max rank error " << worst_single << " merged " << worst_merged << " " << secs << "s";
}

// 6. Analytic gradients against central differences.
void gradient_check(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (auto objective : {Objective::single_ctr, Objective::ctr_logdt, Objective::vr_logdt, Objective::vr_ndt}) {
    for (auto mode : {NegativeWeighting::unit, NegativeWeighting::literal}) {
      auto net = MtlNetwork::glorot(test::tiny_config(objective != Objective::single_ctr), 77);
      const auto r = test::gradcheck(net, test::gradcheck_instances(objective, mode), 1e-4);
      worst = std::max(worst, r.max_rel_error);
      o.check(r.max_rel_error <= 1e-4,
              std::string(to_string(objective)) + "/" + std::string(to_string(mode)) + " " + r.worst);
    }
  }
  const double secs = seconds_since(t0);
  o.check(secs < 60.0, "runtime");
  o.detail << "max relative error " << worst << " " << secs << "s";
}

// 7. Rank-based AUC against the O(n^2) pair count.
void auc_oracle(Outcome& o) {
  std::mt19937_64 rng(31337);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 1000)(rng);
    const int levels = trial % 3 == 0 ? 3 : trial % 3 == 1 ? 50 : 1000000;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, levels)(rng) * 0.01;
      y[i] = std::bernoulli_distribution(0.35)(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    std::uint64_t twice = 0, pos = 0, neg = 0;
    for (int i = 0; i < n; ++i) (y[i] ? pos : neg) += 1;
    for (int i = 0; i < n; ++i) {
      if (!y[i]) continue;
      for (int j = 0; j < n; ++j) {
        if (y[j]) continue;
        twice += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
      }
    }
    const double brute = static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    if (auc(s, y) != brute) ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " mismatches");
  o.detail << "200 instances, " << mismatches << " mismatches";
}

// 8. Two full CLI runs with one seed must produce identical artifacts.
int run_cli(const std::filesystem::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" DWR_CLI_PATH "' " + args + " >/dev/null 2>>stderr.txt";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

void determinism(Outcome& o) {
  const auto t0 = Clock::now();
  const std::vector<std::string> steps = {
      "simulate --sim-config sim.cfg --seed 2024 --out log.csv",
      "fit-stats --log log.csv --out stats.json",
      "build-profiles --log log.csv --seed 2024 --out profiles.bin",
      "label --log log.csv --stats stats.json --profiles profiles.bin --out labeled.csv",
      "train --labeled labeled.csv --seed 2024 --epochs 2 --out model.bin",
      "eval --labeled labeled.csv --model model.bin --out eval.json",
  };
  test::TempDir a, b;
  std::size_t n_events = 0;
  for (const auto* dir : {&a, &b}) {
    test::write_text(*dir / "sim.cfg", "n_users = 600\nn_items = 200\n");
    for (const auto& step : steps) {
      const int status = run_cli(dir->path(), step);
      o.check(status == 0, step + " exited " + std::to_string(status) + ": " + read_file(*dir / "stderr.txt"));
      if (status != 0) return;
    }
    const auto log = read_file(*dir / "log.csv");
    n_events = static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n'));
  }
  const double secs = seconds_since(t0) / 2.0;
  o.check(read_file(a / "model.bin") == read_file(b / "model.bin"), "checkpoint bytes differ");
  o.check(read_file(a / "eval.json") == read_file(b / "eval.json"), "eval JSON differs");
  o.check(n_events >= 100000, "corpus has " + std::to_string(n_events) + " events");
  o.check(secs < 300.0, "runtime");
  o.detail << n_events << " events, " << secs << "s per run";
}

// 9. Dwell time carries signal that click labels miss: a class of short-read
// items with a strong click bias. The valid-read objective should rank valid
// reads on held-out days better than the click-only baseline.
void planted_signal(Outcome& o) {
  const std::string sim_cfg =
      "n_users = 600\n"
      "n_items = 200\n"
      "dt_affinity_coupling = 0.5\n"
      "class = news:0.3:3.0:0.7:0.0\n"
      "class = article:0.3:4.2:0.8:0.0\n"
      "class = longform:0.1:5.0:0.8:-0.3\n"
      "class = clickbait:0.3:1.2:0.5:2.0\n";
  constexpr std::int64_t kSplit = kT0 + 10 * 86400;
  double sum_gap = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    test::TempDir dir;
    test::write_text(dir / "sim.cfg", sim_cfg);
    pipeline::simulate({dir / "sim.cfg", seed, dir / "log.csv", std::nullopt});
    pipeline::fit_stats({dir / "log.csv", false, dir / "stats.json"});
    pipeline::build_profiles({dir / "log.csv", false, seed, dir / "profiles.bin"});
    pipeline::LabelArgs label_args;
    label_args.log = dir / "log.csv";
    label_args.stats = dir / "stats.json";
    label_args.profiles = dir / "profiles.bin";
    label_args.out = dir / "labeled.csv";
    pipeline::label(label_args);

    double aucs[2];
    const Objective objectives[2] = {Objective::vr_ndt, Objective::single_ctr};
    for (int k = 0; k < 2; ++k) {
      pipeline::TrainArgs t;
      t.labeled = dir / "labeled.csv";
      t.train.objective = objectives[k];
      t.train.seed = seed;
      t.train.epochs = 5;
      t.train.learning_rate = 0.01;
      t.before = kSplit;
      t.out = dir / "model.bin";
      pipeline::train(t);
      pipeline::EvalArgs e;
      e.labeled = dir / "labeled.csv";
      e.model = dir / "model.bin";
      e.from = kSplit;
      aucs[k] = pipeline::eval(e).at("report").at("auc").get<double>();
    }
    sum_gap += aucs[0] - aucs[1];
    o.detail << "seed " << seed << ": " << aucs[0] << " vs " << aucs[1] << "; ";
  }
  const double mean_gap = sum_gap / 5.0;
  o.check(mean_gap >= 0.005, "mean AUC gap " + std::to_string(mean_gap));
  o.detail << "mean gap " << mean_gap;
}

// 10. Migration report on identical, uniformly shifted and planted logs.
void migration(Outcome& o) {
  SimConfig cfg;
  cfg.n_users = 800;
  cfg.seed = 10;
  const auto base = generate(cfg).events;

  for (const auto& c : migration_report(base, base)) {
    if (c.delta) o.check(*c.delta == 0.0, "identical delta");
  }

  auto shifted = base;
  for (auto& e : shifted) {
    if (e.clicked) e.dwell_time_s += 10.0;
  }
  for (const auto& c : migration_report(base, shifted)) {
    if (c.delta) o.check(std::abs(*c.delta - 10.0) <= 1e-9, "uniform shift");
  }

  const auto weekly = weekly_clicks(base);
  std::vector<std::uint64_t> counts;
  for (const auto& [u, c] : weekly) counts.push_back(c);
  const auto bounds = equal_frequency_boundaries(counts);
  std::map<std::string, int> levels;
  for (const auto& [u, c] : weekly) levels[u] = activeness_level(c, bounds);
  MigrationPlant plant;  // levels 1-3, deciles up to P30, +10 s
  const auto treat = plant_migration(base, levels, plant);
  int targeted = 0;
  double worst = 0.0;
  for (const auto& c : migration_report(base, treat)) {
    const bool in_target = std::find(plant.target_levels.begin(), plant.target_levels.end(), c.level) !=
                               plant.target_levels.end() &&
                           c.decile <= static_cast<int>(std::lround(plant.quantile * 10));
    if (!in_target) continue;
    o.check(c.delta.has_value(), "empty targeted cell");
    if (!c.delta) continue;
    ++targeted;
    const double rel = std::abs(*c.delta - plant.shift_s) / plant.shift_s;
    worst = std::max(worst, rel);
    o.check(rel <= 0.05, "planted cell " + std::to_string(c.level) + "/" + std::to_string(c.decile));
  }
  o.check(targeted == 9, "targeted cells");
  o.detail << targeted << " targeted cells, worst relative error " << worst;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"ndt-constants", ndt_constants},
      {"relaimpr-arithmetic", relaimpr_arithmetic},
      {"threshold-recovery", threshold_recovery},
      {"labeler", labeler},
      {"quantile-sketch", quantile_sketch},
      {"gradient-check", gradient_check},
      {"auc-oracle", auc_oracle},
      {"determinism", determinism},
      {"planted-signal", planted_signal},
      {"migration", migration},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
