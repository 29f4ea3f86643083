#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "dwr/ingest.hpp"

namespace dwr {

// Gaussian fit of ln T over clicked events, with the valid-read thresholds
// x_l = exp(mu - sigma) and x_h = exp(mu + sigma).
struct DwellStats {
  double mu = 0.0;
  double sigma = 0.0;  // population convention (divisor n)
  std::uint64_t n = 0;
  double x_l = 0.0;
  double x_h = 0.0;
};

// Moment accumulator over ln T. Sums are held as exact fixed-point integers
// (every finite ln of a positive double is an integer multiple of 2^-128), so
// merge is exactly associative and commutative and a constant sample yields
// sigma == 0 exactly.
class StatsAccumulator {
 public:
  // Consumes clicked events with dwell_time_s > 0; everything else is ignored.
  void observe(const InteractionEvent& event);
  // Adds one positive dwell time.
  void add(double dwell_time_s);

  StatsAccumulator& merge(const StatsAccumulator& other);

  std::uint64_t count() const { return n_; }
  double sum_ln() const;
  double sum_ln_sq() const;

  // Throws ValidationError("insufficient-data") when fewer than 2 samples.
  DwellStats finalize() const;

  bool operator==(const StatsAccumulator& other) const {
    return n_ == other.n_ && sum_ == other.sum_ && sum_sq_ == other.sum_sq_;
  }

 private:
  std::uint64_t n_ = 0;
  boost::multiprecision::int256_t sum_ = 0;     // sum of ln T, scaled by 2^128
  boost::multiprecision::int512_t sum_sq_ = 0;  // sum of (ln T)^2, scaled by 2^256
};

DwellStats fit_log_normal(std::span<const InteractionEvent> events);

struct HistogramBin {
  double center = 0.0;
  std::uint64_t count = 0;
};

// Histogram of ln T over clicked events with T > 0. Without an explicit range
// the bins span [min ln T, max ln T]; a zero-width range gets unit-width bins
// centred on the value. Out-of-range values land in the edge bins.
std::vector<HistogramBin> histogram_ln(std::span<const InteractionEvent> events,
                                       std::size_t n_bins,
                                       std::optional<std::pair<double, double>> range = {});

nlohmann::json to_json(const DwellStats& stats);
DwellStats dwell_stats_from_json(const nlohmann::json& j);

}  // namespace dwr
