#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dwr/ingest.hpp"
#include "dwr/rank_sketch.hpp"

namespace dwr {

inline constexpr std::int64_t kWeekSeconds = 7 * 86400;

// Historical dwell-time records of one item, for the item-relative P10 rule.
// Records are kept at f32 precision, the same precision the profile store
// persists, so in-memory and reloaded profiles answer identically.
struct ItemDwellProfile {
  std::string item_id;
  QuantileEstimator estimator;
  std::uint64_t n_records = 0;

  // Throws ValidationError("negative-dwell-time") for T < 0.
  void observe(double dwell_time_s);

  // Nearest-rank P10. Throws ValidationError("no-data") when empty.
  double p10() const;

  // P10 of the record set with one record equal to `own` removed (exact mode
  // only; a sketched profile ignores the exclusion). Empty result if nothing
  // is left.
  std::optional<double> p10_excluding(double own) const;

  bool operator==(const ItemDwellProfile&) const = default;
};

// Click timestamps of one user, kept sorted. All timestamps are retained so a
// frozen profile can answer window queries for any event time; the window is
// applied at query time.
struct UserActivityProfile {
  std::string user_id;
  std::vector<std::int64_t> click_timestamps;

  void record_click(std::int64_t ts);

  // Clicks with timestamp in (at - window_s, at].
  std::size_t clicks_in_window(std::int64_t at, std::int64_t window_s = kWeekSeconds) const;

  // True iff clicks_in_window(at) < threshold.
  bool is_light_user(std::int64_t at, std::size_t threshold = 7,
                     std::int64_t window_s = kWeekSeconds) const;

  bool operator==(const UserActivityProfile&) const = default;
};

struct ProfileOptions {
  double sketch_epsilon = QuantileEstimator::kDefaultEpsilon;
  std::size_t switch_threshold = QuantileEstimator::kDefaultSwitchThreshold;
};

// Item and user profiles built in the statistics pass, then frozen.
//
// Binary form ("VRPF"), all integers little-endian:
//   magic "VRPF", u32 version, u64 seed,
//   u64 item count, then per item (ascending item_id):
//     u32 record byte length, then: str item_id, u64 n_records, estimator
//   u64 user count, then per user (ascending user_id):
//     u32 record byte length, then: str user_id, u32 count, count * i64 ts
// where str = u32 length + bytes and estimator = u8 mode (0 exact, 1 sketch),
// u32 switch threshold, then either u32 count + sorted f32 values or the
// RankSketch serialized form.
class ProfileStore {
 public:
  static constexpr std::uint32_t kVersion = 1;

  explicit ProfileStore(ProfileOptions options = {}) : options_(options) {}

  // Every clicked event updates its item (any T >= 0) and its user.
  void observe(const InteractionEvent& event);
  void merge(const ProfileStore& other);

  const ItemDwellProfile* find_item(std::string_view item_id) const;
  const UserActivityProfile* find_user(std::string_view user_id) const;

  const std::map<std::string, ItemDwellProfile, std::less<>>& items() const { return items_; }
  const std::map<std::string, UserActivityProfile, std::less<>>& users() const { return users_; }

  std::uint64_t seed = 0;

  std::string serialize() const;
  static ProfileStore deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static ProfileStore load(const std::filesystem::path& path);

  bool operator==(const ProfileStore& other) const {
    return seed == other.seed && items_ == other.items_ && users_ == other.users_;
  }

 private:
  ItemDwellProfile& item(const std::string& item_id);
  UserActivityProfile& user(const std::string& user_id);

  ProfileOptions options_;
  std::map<std::string, ItemDwellProfile, std::less<>> items_;
  std::map<std::string, UserActivityProfile, std::less<>> users_;
};

}  // namespace dwr
