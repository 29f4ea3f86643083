#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwr/labeler.hpp"
#include "dwr/mtl_model.hpp"
#include "dwr/ndt.hpp"

namespace dwr {

// Training objectives of the four compared models:
//   single_ctr  y = clicked, weighted tower off
//   ctr_logdt   y = clicked, weighted tower on ln(1 + T)
//   vr_logdt    y = valid read, weighted tower on ln(1 + T)
//   vr_ndt      y = valid read, weighted tower on ndt(T)
enum class Objective { single_ctr, ctr_logdt, vr_logdt, vr_ndt };

Objective parse_objective(std::string_view s);
std::string_view to_string(Objective objective);

struct TrainConfig {
  Objective objective = Objective::vr_ndt;
  NegativeWeighting neg_mode = NegativeWeighting::unit;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  int epochs = 3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

// Sorted token list; index 0 is reserved for out-of-vocabulary tokens.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::uint32_t index(std::string_view token) const;
  std::uint32_t cardinality() const { return static_cast<std::uint32_t>(tokens_.size()) + 1; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

// Maps events to the two categorical slots (user_id, item_id).
struct FeatureEncoder {
  Vocabulary users;
  Vocabulary items;

  static FeatureEncoder fit(std::span<const LabeledEvent> events);

  FeatureVector encode(const InteractionEvent& event) const;
  std::vector<SlotSpec> slots() const;

  nlohmann::json to_json() const;
  static FeatureEncoder from_json(const nlohmann::json& j);
};

TrainingInstance make_instance(const LabeledEvent& le, FeatureVector features, const NdtParams& ndt_params,
                               Objective objective, NegativeWeighting neg_mode);

std::vector<TrainingInstance> build_instances(std::span<const LabeledEvent> events,
                                              const FeatureEncoder& encoder, const NdtParams& ndt_params,
                                              const TrainConfig& cfg);

// Mean per-instance losses; epoch 0 is the untrained network.
struct EpochLoss {
  int epoch = 0;
  double l_v = 0.0;
  double l_w = 0.0;
  double total = 0.0;
};

struct TrainResult {
  MtlNetwork net;
  std::vector<EpochLoss> trace;
};

// Mini-batch Adam on L = L_v + L_w (gradient averaged over the batch).
// Epoch e visits instances in a permutation drawn from (seed, e). The returned
// parameters are rounded to f32 so a saved checkpoint reloads bit-exactly.
// Throws RuntimeFailure("diverged") on a non-finite loss.
TrainResult train(const TrainConfig& cfg, MtlConfig arch, std::span<const TrainingInstance> instances);

std::string format_loss_trace(const std::vector<EpochLoss>& trace);

}  // namespace dwr
