#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dwr/binary_io.hpp"

namespace dwr {

// Mergeable compactor-based rank summary (KLL-style). Level h holds items of
// weight 2^h; a full level is sorted and every other item is promoted. The
// promoted half alternates per level, so the sketch is deterministic given
// its insertion and merge order.
//
// Serialized form (little-endian):
//   u32 k, u64 n, u32 n_levels,
//   per level: u8 parity, u32 count, count * f32 values
class RankSketch {
 public:
  explicit RankSketch(std::uint32_t k = 400);

  // k such that the normalized rank error stays well under eps.
  static std::uint32_t k_for_epsilon(double eps);

  void insert(float value);
  void merge(const RankSketch& other);

  std::uint64_t count() const { return n_; }
  std::uint32_t k() const { return k_; }
  std::size_t retained() const;

  // Estimated number of inserted values <= value.
  std::uint64_t rank(float value) const;
  // Nearest-rank quantile: smallest retained value whose cumulative weight
  // reaches ceil(p * n). Requires count() > 0.
  float quantile(double p) const;

  void serialize(ByteWriter& out) const;
  static RankSketch deserialize(ByteReader& in);

  bool operator==(const RankSketch&) const = default;

 private:
  std::size_t capacity(std::size_t level) const;
  void compress();
  void compact_level(std::size_t level);

  std::uint32_t k_;
  std::uint64_t n_ = 0;
  std::vector<std::vector<float>> levels_;
  std::vector<std::uint8_t> parity_;
};

// Exact sorted multiset up to a record-count threshold, then a RankSketch.
class QuantileEstimator {
 public:
  static constexpr std::size_t kDefaultSwitchThreshold = 4096;
  static constexpr double kDefaultEpsilon = 0.01;

  explicit QuantileEstimator(double eps = kDefaultEpsilon,
                             std::size_t switch_threshold = kDefaultSwitchThreshold);

  void add(float value);
  void merge(const QuantileEstimator& other);

  std::uint64_t count() const;
  bool is_exact() const { return !sketch_mode_; }
  // Sorted ascending; only meaningful in exact mode.
  std::span<const float> exact_values() const { return exact_; }
  const RankSketch& sketch() const { return sketch_; }
  std::size_t switch_threshold() const { return switch_threshold_; }

  // Nearest-rank quantile: value at 1-based sorted index ceil(p * n).
  // Throws ValidationError("no-data") when empty.
  float quantile(double p) const;

  void serialize(ByteWriter& out) const;
  static QuantileEstimator deserialize(ByteReader& in);

  bool operator==(const QuantileEstimator&) const = default;

 private:
  void to_sketch();

  std::size_t switch_threshold_;
  bool sketch_mode_ = false;
  std::vector<float> exact_;
  RankSketch sketch_;
};

// 1-based nearest-rank index ceil(p * n), clamped to [1, n].
std::uint64_t nearest_rank_index(double p, std::uint64_t n);

}  // namespace dwr
