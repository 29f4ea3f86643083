#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace dwr {

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> dims);

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

// weight is [out, in], row-major.
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  DenseLayer() = default;
  DenseLayer(std::uint32_t in, std::uint32_t out);

  std::uint32_t in_dim() const { return weight.shape.at(1); }
  std::uint32_t out_dim() const { return weight.shape.at(0); }
  bool operator==(const DenseLayer&) const = default;
};

struct SlotSpec {
  std::string name;
  std::uint32_t cardinality = 0;

  bool operator==(const SlotSpec&) const = default;
};

// Shared bottom: embeddings of every categorical slot concatenated with the
// dense features, then one rectified dense layer. Each tower is three dense
// layers (bottom -> hidden1 -> hidden2 -> 1) with rectified hidden layers and
// a logistic output.
struct MtlConfig {
  std::vector<SlotSpec> slots;
  std::uint32_t dense_dim = 0;
  std::uint32_t embed_dim = 16;
  std::uint32_t bottom_dim = 64;
  std::uint32_t tower_hidden1 = 64;
  std::uint32_t tower_hidden2 = 32;
  // When false only tower_v is trained and score() is P alone.
  bool weighted_tower = true;

  std::uint32_t input_dim() const {
    return static_cast<std::uint32_t>(slots.size()) * embed_dim + dense_dim;
  }
  bool operator==(const MtlConfig&) const = default;
};

nlohmann::json to_json(const MtlConfig& cfg);
MtlConfig mtl_config_from_json(const nlohmann::json& j);

struct MtlParameters {
  std::vector<Tensor> embeddings;  // one [cardinality, embed_dim] table per slot
  DenseLayer bottom;
  std::array<DenseLayer, 3> tower_v;
  std::array<DenseLayer, 3> tower_w;

  // All zeros, shaped for cfg.
  static MtlParameters zeros(const MtlConfig& cfg);

  // Canonical tensor order, also the checkpoint order.
  std::vector<std::pair<std::string, Tensor*>> named(const MtlConfig& cfg);
  std::vector<std::pair<std::string, const Tensor*>> named(const MtlConfig& cfg) const;

  bool operator==(const MtlParameters&) const = default;
};

class MtlNetwork {
 public:
  // Zero-initialized parameters.
  explicit MtlNetwork(MtlConfig cfg);

  // Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)) per dense layer and
  // s = sqrt(6 / (1 + embed_dim)) for embedding rows; biases zero.
  static MtlNetwork glorot(MtlConfig cfg, std::uint64_t seed);

  const MtlConfig& config() const { return cfg_; }
  MtlParameters& params() { return params_; }
  const MtlParameters& params() const { return params_; }

  // Rounds every parameter to the nearest f32, the checkpoint precision.
  void round_to_f32();

  bool operator==(const MtlNetwork&) const = default;

 private:
  MtlConfig cfg_;
  MtlParameters params_;
};

// One token index per configured slot (slot id = position), plus dense values.
struct FeatureVector {
  std::vector<std::uint32_t> tokens;
  std::vector<double> dense;

  auto operator<=>(const FeatureVector&) const = default;
};

struct TrainingInstance {
  FeatureVector features;
  int y = 0;       // 1 iff positive
  double w = 0.0;  // weight in the weighted-tower loss

  bool operator==(const TrainingInstance&) const = default;
};

struct Prediction {
  double p = 0.5;        // valid-read tower
  double p_prime = 0.5;  // weighted tower
};

inline constexpr double kProbClamp = 1e-7;

// Throws ValidationError("feature-out-of-range") on a bad index or arity.
Prediction forward(const MtlNetwork& net, const FeatureVector& features);

// P + P' (or P alone when the weighted tower is disabled).
double score(const MtlNetwork& net, const FeatureVector& features);

struct LossBreakdown {
  double l_v = 0.0;
  double l_w = 0.0;
  double total = 0.0;
};

// Binary cross-entropy sums over the batch:
//   L_v = -sum_pos log P - sum_neg log(1 - P)
//   L_w = -sum_pos w log P' - sum_neg w log(1 - P')
//   L   = L_v + L_w
// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the logs.
// Instances are visited in a canonical order (sorted by features, y, w), so any
// permutation of the batch yields bit-identical results.
LossBreakdown batch_loss(const MtlNetwork& net, std::span<const TrainingInstance> batch);

struct BackwardResult {
  MtlParameters grad;  // dL/dparam, same shapes as the network
  LossBreakdown loss;
};

// Analytic gradient of L. The output-layer gradients use the unclamped
// probabilities (P - y).
BackwardResult backward(const MtlNetwork& net, std::span<const TrainingInstance> batch);

// Checkpoint ("VRMT"), little-endian:
//   magic "VRMT", u32 version, u32 json length, json bytes
//   ({"config": ..., "metadata": ...}), u32 tensor count, then per tensor:
//   u32 name length, name, u32 rank, rank * u32 dims, row-major f32 values.
struct Checkpoint {
  MtlNetwork net;
  nlohmann::json metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const MtlNetwork& net, const nlohmann::json& metadata);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const MtlNetwork& net,
                     const nlohmann::json& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dwr
