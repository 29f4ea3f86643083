#include "dwr/profiles.hpp"

#include <algorithm>

#include "dwr/error.hpp"

namespace dwr {

namespace {
constexpr std::string_view kMagic = "VRPF";
constexpr double kP10 = 0.10;
}  // namespace

void ItemDwellProfile::observe(double dwell_time_s) {
  if (dwell_time_s < 0.0) throw ValidationError("negative-dwell-time", "negative dwell time record");
  estimator.add(static_cast<float>(dwell_time_s));
  ++n_records;
}

double ItemDwellProfile::p10() const { return estimator.quantile(kP10); }

std::optional<double> ItemDwellProfile::p10_excluding(double own) const {
  if (!estimator.is_exact()) return p10();
  auto values = estimator.exact_values();
  if (values.empty()) return std::nullopt;
  const auto self = static_cast<float>(own);
  auto it = std::lower_bound(values.begin(), values.end(), self);
  if (it == values.end() || *it != self) return p10();
  const std::uint64_t n = values.size() - 1;
  if (n == 0) return std::nullopt;
  const auto skipped = static_cast<std::uint64_t>(it - values.begin());
  auto idx = nearest_rank_index(kP10, n) - 1;
  if (idx >= skipped) ++idx;
  return values[idx];
}

void UserActivityProfile::record_click(std::int64_t ts) {
  click_timestamps.insert(std::upper_bound(click_timestamps.begin(), click_timestamps.end(), ts), ts);
}

std::size_t UserActivityProfile::clicks_in_window(std::int64_t at, std::int64_t window_s) const {
  auto hi = std::upper_bound(click_timestamps.begin(), click_timestamps.end(), at);
  auto lo = std::upper_bound(click_timestamps.begin(), hi, at - window_s);
  return static_cast<std::size_t>(hi - lo);
}

bool UserActivityProfile::is_light_user(std::int64_t at, std::size_t threshold,
                                        std::int64_t window_s) const {
  return clicks_in_window(at, window_s) < threshold;
}

ItemDwellProfile& ProfileStore::item(const std::string& item_id) {
  auto it = items_.find(item_id);
  if (it == items_.end()) {
    ItemDwellProfile p{item_id, QuantileEstimator(options_.sketch_epsilon, options_.switch_threshold), 0};
    it = items_.emplace(item_id, std::move(p)).first;
  }
  return it->second;
}

UserActivityProfile& ProfileStore::user(const std::string& user_id) {
  auto it = users_.find(user_id);
  if (it == users_.end()) it = users_.emplace(user_id, UserActivityProfile{user_id, {}}).first;
  return it->second;
}

void ProfileStore::observe(const InteractionEvent& event) {
  if (!event.clicked) return;
  item(event.item_id).observe(event.dwell_time_s);
  user(event.user_id).record_click(event.timestamp);
}

void ProfileStore::merge(const ProfileStore& other) {
  for (const auto& [id, p] : other.items_) {
    auto& mine = item(id);
    mine.estimator.merge(p.estimator);
    mine.n_records += p.n_records;
  }
  for (const auto& [id, p] : other.users_) {
    auto& mine = user(id);
    std::vector<std::int64_t> merged;
    merged.reserve(mine.click_timestamps.size() + p.click_timestamps.size());
    std::merge(mine.click_timestamps.begin(), mine.click_timestamps.end(),
               p.click_timestamps.begin(), p.click_timestamps.end(), std::back_inserter(merged));
    mine.click_timestamps = std::move(merged);
  }
}

const ItemDwellProfile* ProfileStore::find_item(std::string_view item_id) const {
  auto it = items_.find(item_id);
  return it == items_.end() ? nullptr : &it->second;
}

const UserActivityProfile* ProfileStore::find_user(std::string_view user_id) const {
  auto it = users_.find(user_id);
  return it == users_.end() ? nullptr : &it->second;
}

std::string ProfileStore::serialize() const {
  ByteWriter out;
  out.bytes(kMagic);
  out.u32(kVersion);
  out.u64(seed);

  out.u64(items_.size());
  for (const auto& [id, p] : items_) {
    ByteWriter rec;
    rec.str(id);
    rec.u64(p.n_records);
    p.estimator.serialize(rec);
    out.str(rec.data());
  }

  out.u64(users_.size());
  for (const auto& [id, p] : users_) {
    ByteWriter rec;
    rec.str(id);
    rec.u32(static_cast<std::uint32_t>(p.click_timestamps.size()));
    for (auto ts : p.click_timestamps) rec.i64(ts);
    out.str(rec.data());
  }
  return out.take();
}

ProfileStore ProfileStore::deserialize(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.remaining() < 4 || in.bytes(4) != kMagic) {
    throw ValidationError("bad-profile", "not a profile store (magic mismatch)");
  }
  auto version = in.u32();
  if (version != kVersion) {
    throw ValidationError("bad-profile", "unsupported profile store version " + std::to_string(version));
  }
  ProfileStore store;
  store.seed = in.u64();

  auto n_items = in.u64();
  for (std::uint64_t i = 0; i < n_items; ++i) {
    auto rec_bytes = in.str();
    ByteReader rec(rec_bytes);
    ItemDwellProfile p;
    p.item_id = rec.str();
    p.n_records = rec.u64();
    p.estimator = QuantileEstimator::deserialize(rec);
    if (!rec.at_end()) throw ValidationError("bad-profile", "trailing bytes in item record");
    if (p.estimator.count() != p.n_records) {
      throw ValidationError("bad-profile", "item record count mismatch for " + p.item_id);
    }
    auto id = p.item_id;
    store.items_.emplace(std::move(id), std::move(p));
  }

  auto n_users = in.u64();
  for (std::uint64_t i = 0; i < n_users; ++i) {
    auto rec_bytes = in.str();
    ByteReader rec(rec_bytes);
    UserActivityProfile p;
    p.user_id = rec.str();
    auto count = rec.u32();
    if (count > rec.remaining() / 8) throw ValidationError("truncated-binary", "user record truncated");
    p.click_timestamps.resize(count);
    for (auto& ts : p.click_timestamps) ts = rec.i64();
    if (!rec.at_end()) throw ValidationError("bad-profile", "trailing bytes in user record");
    if (!std::is_sorted(p.click_timestamps.begin(), p.click_timestamps.end())) {
      throw ValidationError("bad-profile", "user timestamps are not sorted");
    }
    auto id = p.user_id;
    store.users_.emplace(std::move(id), std::move(p));
  }
  if (!in.at_end()) throw ValidationError("bad-profile", "trailing bytes after profile store");
  return store;
}

void ProfileStore::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

ProfileStore ProfileStore::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace dwr
