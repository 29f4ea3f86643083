#include "dwr/rank_sketch.hpp"

#include <algorithm>
#include <cmath>

#include "dwr/error.hpp"

namespace dwr {

namespace {
constexpr double kCapacityDecay = 2.0 / 3.0;
}

std::uint64_t nearest_rank_index(double p, std::uint64_t n) {
  if (n == 0) return 0;
  // p * n can land one ulp above an integer (0.55 * 100); snap before the ceiling.
  const double x = p * static_cast<double>(n);
  const double nearest = std::round(x);
  double r = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  if (r < 1.0) return 1;
  if (r > static_cast<double>(n)) return n;
  return static_cast<std::uint64_t>(r);
}

RankSketch::RankSketch(std::uint32_t k) : k_(std::max<std::uint32_t>(k, 8)) {
  levels_.emplace_back();
  parity_.push_back(0);
}

std::uint32_t RankSketch::k_for_epsilon(double eps) {
  if (!(eps > 0.0) || eps >= 1.0) {
    throw ValidationError("bad-epsilon", "sketch epsilon must be in (0, 1)");
  }
  return static_cast<std::uint32_t>(std::ceil(4.0 / eps));
}

std::size_t RankSketch::capacity(std::size_t level) const {
  auto depth = static_cast<double>(levels_.size() - 1 - level);
  auto cap = static_cast<std::size_t>(std::ceil(k_ * std::pow(kCapacityDecay, depth)));
  return std::max<std::size_t>(cap, 2);
}

std::size_t RankSketch::retained() const {
  std::size_t total = 0;
  for (const auto& l : levels_) total += l.size();
  return total;
}

void RankSketch::insert(float value) {
  levels_[0].push_back(value);
  ++n_;
  compress();
}

void RankSketch::compact_level(std::size_t level) {
  if (level + 1 == levels_.size()) {
    levels_.emplace_back();
    parity_.push_back(0);
  }
  auto& items = levels_[level];
  std::sort(items.begin(), items.end());

  // An odd item out stays behind at its current weight.
  std::vector<float> keep;
  if (items.size() % 2 == 1) {
    keep.push_back(items.back());
    items.pop_back();
  }
  auto& up = levels_[level + 1];
  for (std::size_t i = parity_[level]; i < items.size(); i += 2) up.push_back(items[i]);
  parity_[level] ^= 1u;
  items = std::move(keep);
}

void RankSketch::compress() {
  while (true) {
    std::size_t total_cap = 0;
    for (std::size_t h = 0; h < levels_.size(); ++h) total_cap += capacity(h);
    if (retained() <= total_cap) return;
    for (std::size_t h = 0; h < levels_.size(); ++h) {
      if (levels_[h].size() >= capacity(h)) {
        compact_level(h);
        break;
      }
    }
  }
}

void RankSketch::merge(const RankSketch& other) {
  if (other.k_ != k_) throw ValidationError("sketch-mismatch", "cannot merge sketches of different k");
  while (levels_.size() < other.levels_.size()) {
    levels_.emplace_back();
    parity_.push_back(0);
  }
  for (std::size_t h = 0; h < other.levels_.size(); ++h) {
    levels_[h].insert(levels_[h].end(), other.levels_[h].begin(), other.levels_[h].end());
  }
  n_ += other.n_;
  compress();
}

std::uint64_t RankSketch::rank(float value) const {
  std::uint64_t r = 0;
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    for (float v : levels_[h]) {
      if (v <= value) r += std::uint64_t{1} << h;
    }
  }
  return r;
}

float RankSketch::quantile(double p) const {
  if (n_ == 0) throw ValidationError("no-data", "quantile of an empty sketch");
  std::vector<std::pair<float, std::uint64_t>> weighted;
  weighted.reserve(retained());
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    for (float v : levels_[h]) weighted.emplace_back(v, std::uint64_t{1} << h);
  }
  std::sort(weighted.begin(), weighted.end());
  const auto target = nearest_rank_index(p, n_);
  std::uint64_t cum = 0;
  for (const auto& [v, w] : weighted) {
    cum += w;
    if (cum >= target) return v;
  }
  return weighted.back().first;
}

void RankSketch::serialize(ByteWriter& out) const {
  out.u32(k_);
  out.u64(n_);
  out.u32(static_cast<std::uint32_t>(levels_.size()));
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    out.u8(parity_[h]);
    out.u32(static_cast<std::uint32_t>(levels_[h].size()));
    for (float v : levels_[h]) out.f32(v);
  }
}

RankSketch RankSketch::deserialize(ByteReader& in) {
  RankSketch s(in.u32());
  s.n_ = in.u64();
  auto n_levels = in.u32();
  if (n_levels == 0 || n_levels > 64) throw ValidationError("bad-sketch", "invalid sketch level count");
  s.levels_.assign(n_levels, {});
  s.parity_.assign(n_levels, 0);
  std::uint64_t weight = 0;
  for (std::uint32_t h = 0; h < n_levels; ++h) {
    s.parity_[h] = in.u8() & 1u;
    auto count = in.u32();
    if (count > in.remaining() / 4) throw ValidationError("truncated-binary", "sketch level truncated");
    s.levels_[h].resize(count);
    for (auto& v : s.levels_[h]) v = in.f32();
    weight += static_cast<std::uint64_t>(count) << h;
  }
  if (weight != s.n_) throw ValidationError("bad-sketch", "sketch weights do not sum to n");
  return s;
}

QuantileEstimator::QuantileEstimator(double eps, std::size_t switch_threshold)
    : switch_threshold_(switch_threshold), sketch_(RankSketch::k_for_epsilon(eps)) {}

std::uint64_t QuantileEstimator::count() const {
  return sketch_mode_ ? sketch_.count() : exact_.size();
}

void QuantileEstimator::to_sketch() {
  for (float v : exact_) sketch_.insert(v);
  exact_.clear();
  exact_.shrink_to_fit();
  sketch_mode_ = true;
}

void QuantileEstimator::add(float value) {
  if (sketch_mode_) {
    sketch_.insert(value);
    return;
  }
  exact_.insert(std::upper_bound(exact_.begin(), exact_.end(), value), value);
  if (exact_.size() > switch_threshold_) to_sketch();
}

void QuantileEstimator::merge(const QuantileEstimator& other) {
  if (!sketch_mode_ && !other.sketch_mode_) {
    std::vector<float> merged;
    merged.reserve(exact_.size() + other.exact_.size());
    std::merge(exact_.begin(), exact_.end(), other.exact_.begin(), other.exact_.end(),
               std::back_inserter(merged));
    exact_ = std::move(merged);
    if (exact_.size() > switch_threshold_) to_sketch();
    return;
  }
  if (!sketch_mode_) to_sketch();
  if (other.sketch_mode_) {
    sketch_.merge(other.sketch_);
  } else {
    for (float v : other.exact_) sketch_.insert(v);
  }
}

float QuantileEstimator::quantile(double p) const {
  if (count() == 0) throw ValidationError("no-data", "quantile of an empty profile");
  if (sketch_mode_) return sketch_.quantile(p);
  return exact_[nearest_rank_index(p, exact_.size()) - 1];
}

void QuantileEstimator::serialize(ByteWriter& out) const {
  out.u8(sketch_mode_ ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(switch_threshold_));
  if (sketch_mode_) {
    sketch_.serialize(out);
  } else {
    out.u32(static_cast<std::uint32_t>(exact_.size()));
    for (float v : exact_) out.f32(v);
  }
}

QuantileEstimator QuantileEstimator::deserialize(ByteReader& in) {
  QuantileEstimator est;
  auto mode = in.u8();
  est.switch_threshold_ = in.u32();
  if (mode == 1) {
    est.sketch_mode_ = true;
    est.sketch_ = RankSketch::deserialize(in);
  } else if (mode == 0) {
    auto count = in.u32();
    if (count > in.remaining() / 4) throw ValidationError("truncated-binary", "exact records truncated");
    est.exact_.resize(count);
    for (auto& v : est.exact_) v = in.f32();
    if (!std::is_sorted(est.exact_.begin(), est.exact_.end())) {
      throw ValidationError("bad-profile", "exact records are not sorted");
    }
  } else {
    throw ValidationError("bad-profile", "unknown estimator mode");
  }
  return est;
}

}  // namespace dwr
