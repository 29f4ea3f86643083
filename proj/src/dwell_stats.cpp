#include "dwr/dwell_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dwr/error.hpp"

namespace dwr {

namespace mp = boost::multiprecision;

namespace {

constexpr int kSumScale = 128;
constexpr int kSqScale = 2 * kSumScale;

// x == mantissa * 2^exponent with a 53-bit integer mantissa.
std::pair<std::int64_t, int> decompose(double x) {
  int e = 0;
  double f = std::frexp(x, &e);
  auto mantissa = static_cast<std::int64_t>(std::ldexp(f, 53));
  return {mantissa, e - 53};
}

template <class Int>
double scaled_to_double(const Int& value, int scale) {
  return std::ldexp(value.template convert_to<double>(), -scale);
}

}  // namespace

void StatsAccumulator::observe(const InteractionEvent& event) {
  if (event.clicked && event.dwell_time_s > 0.0) add(event.dwell_time_s);
}

void StatsAccumulator::add(double dwell_time_s) {
  if (!(dwell_time_s > 0.0) || !std::isfinite(dwell_time_s)) {
    throw ValidationError("bad-dwell-time", "log-normal fit needs positive finite dwell times");
  }
  double x = std::log(dwell_time_s);
  ++n_;
  if (x == 0.0) return;
  auto [mantissa, exponent] = decompose(x);
  mp::int256_t term = mantissa;
  term <<= (exponent + kSumScale);
  sum_ += term;

  mp::int512_t sq = mantissa;
  sq *= mantissa;
  sq <<= (2 * exponent + kSqScale);
  sum_sq_ += sq;
}

StatsAccumulator& StatsAccumulator::merge(const StatsAccumulator& other) {
  n_ += other.n_;
  sum_ += other.sum_;
  sum_sq_ += other.sum_sq_;
  return *this;
}

double StatsAccumulator::sum_ln() const { return scaled_to_double(sum_, kSumScale); }

double StatsAccumulator::sum_ln_sq() const { return scaled_to_double(sum_sq_, kSqScale); }

DwellStats StatsAccumulator::finalize() const {
  if (n_ < 2) {
    throw ValidationError("insufficient-data",
                          "need at least 2 clicked events with positive dwell time, got " +
                              std::to_string(n_));
  }
  DwellStats s;
  s.n = n_;
  const double n = static_cast<double>(n_);
  s.mu = sum_ln() / n;

  // n * sum_sq - sum^2 is computed exactly; both terms carry scale 2^256.
  mp::cpp_int centred = mp::cpp_int(sum_sq_) * n_ - mp::cpp_int(sum_) * mp::cpp_int(sum_);
  double var = scaled_to_double(centred, kSqScale) / (n * n);
  s.sigma = std::sqrt(std::max(0.0, var));
  s.x_l = std::exp(s.mu - s.sigma);
  s.x_h = std::exp(s.mu + s.sigma);
  return s;
}

DwellStats fit_log_normal(std::span<const InteractionEvent> events) {
  StatsAccumulator acc;
  for (const auto& ev : events) acc.observe(ev);
  return acc.finalize();
}

std::vector<HistogramBin> histogram_ln(std::span<const InteractionEvent> events,
                                       std::size_t n_bins,
                                       std::optional<std::pair<double, double>> range) {
  if (n_bins == 0) throw ValidationError("bad-bins", "histogram needs at least one bin");

  std::vector<double> logs;
  for (const auto& ev : events) {
    if (ev.clicked && ev.dwell_time_s > 0.0) logs.push_back(std::log(ev.dwell_time_s));
  }
  if (logs.empty()) return {};

  double lo = 0.0;
  double hi = 0.0;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(hi >= lo)) throw ValidationError("bad-range", "histogram range upper < lower");
  } else {
    auto [mn, mx] = std::minmax_element(logs.begin(), logs.end());
    lo = *mn;
    hi = *mx;
  }
  double width = (hi - lo) / static_cast<double>(n_bins);
  if (width <= 0.0) {
    width = 1.0;
    lo -= 0.5 * static_cast<double>(n_bins);
  }

  std::vector<HistogramBin> bins(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].center = lo + (static_cast<double>(i) + 0.5) * width;
  }
  for (double x : logs) {
    double pos = std::floor((x - lo) / width);
    std::size_t idx = 0;
    if (pos >= static_cast<double>(n_bins)) {
      idx = n_bins - 1;
    } else if (pos > 0.0) {
      idx = static_cast<std::size_t>(pos);
    }
    ++bins[idx].count;
  }
  return bins;
}

nlohmann::json to_json(const DwellStats& stats) {
  return {{"mu", stats.mu}, {"sigma", stats.sigma}, {"n", stats.n},
          {"x_l", stats.x_l}, {"x_h", stats.x_h}};
}

DwellStats dwell_stats_from_json(const nlohmann::json& j) {
  try {
    DwellStats s;
    s.mu = j.at("mu").get<double>();
    s.sigma = j.at("sigma").get<double>();
    s.n = j.at("n").get<std::uint64_t>();
    s.x_l = j.at("x_l").get<double>();
    s.x_h = j.at("x_h").get<double>();
    if (s.sigma < 0.0 || s.x_l > s.x_h) {
      throw ValidationError("bad-stats", "stats violate sigma >= 0 or x_l <= x_h");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad-stats", std::string("malformed stats JSON: ") + e.what());
  }
}

}  // namespace dwr
