#include "dwr/mtl_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dwr/binary_io.hpp"
#include "dwr/error.hpp"
#include "dwr/ndt.hpp"

namespace dwr {

Tensor::Tensor(std::vector<std::uint32_t> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  values.assign(n, 0.0);
}

DenseLayer::DenseLayer(std::uint32_t in, std::uint32_t out) : weight({out, in}), bias({out}) {}

nlohmann::json to_json(const MtlConfig& cfg) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : cfg.slots) slots.push_back({{"name", s.name}, {"cardinality", s.cardinality}});
  return {{"slots", slots},
          {"dense_dim", cfg.dense_dim},
          {"embed_dim", cfg.embed_dim},
          {"bottom_dim", cfg.bottom_dim},
          {"tower_hidden1", cfg.tower_hidden1},
          {"tower_hidden2", cfg.tower_hidden2},
          {"weighted_tower", cfg.weighted_tower}};
}

MtlConfig mtl_config_from_json(const nlohmann::json& j) {
  MtlConfig cfg;
  for (const auto& s : j.at("slots")) {
    cfg.slots.push_back({s.at("name").get<std::string>(), s.at("cardinality").get<std::uint32_t>()});
  }
  cfg.dense_dim = j.at("dense_dim").get<std::uint32_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::uint32_t>();
  cfg.bottom_dim = j.at("bottom_dim").get<std::uint32_t>();
  cfg.tower_hidden1 = j.at("tower_hidden1").get<std::uint32_t>();
  cfg.tower_hidden2 = j.at("tower_hidden2").get<std::uint32_t>();
  cfg.weighted_tower = j.at("weighted_tower").get<bool>();
  return cfg;
}

namespace {

std::array<DenseLayer, 3> make_tower(const MtlConfig& cfg) {
  return {DenseLayer(cfg.bottom_dim, cfg.tower_hidden1),
          DenseLayer(cfg.tower_hidden1, cfg.tower_hidden2), DenseLayer(cfg.tower_hidden2, 1)};
}

void validate_config(const MtlConfig& cfg) {
  if (cfg.embed_dim == 0 || cfg.bottom_dim == 0 || cfg.tower_hidden1 == 0 || cfg.tower_hidden2 == 0) {
    throw ValidationError("bad-architecture", "layer widths must be positive");
  }
  if (cfg.input_dim() == 0) throw ValidationError("bad-architecture", "network has no inputs");
  for (const auto& s : cfg.slots) {
    if (s.cardinality == 0) throw ValidationError("bad-architecture", "slot " + s.name + " is empty");
  }
}

}  // namespace

MtlParameters MtlParameters::zeros(const MtlConfig& cfg) {
  MtlParameters p;
  for (const auto& s : cfg.slots) p.embeddings.emplace_back(std::vector<std::uint32_t>{s.cardinality, cfg.embed_dim});
  p.bottom = DenseLayer(cfg.input_dim(), cfg.bottom_dim);
  p.tower_v = make_tower(cfg);
  p.tower_w = make_tower(cfg);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> MtlParameters::named(const MtlConfig& cfg) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out.emplace_back("embedding." + cfg.slots.at(i).name, &embeddings[i]);
  }
  out.emplace_back("bottom.weight", &bottom.weight);
  out.emplace_back("bottom.bias", &bottom.bias);
  for (int t = 0; t < 2; ++t) {
    auto& tower = t == 0 ? tower_v : tower_w;
    const std::string prefix = t == 0 ? "tower_v." : "tower_w.";
    for (std::size_t l = 0; l < tower.size(); ++l) {
      out.emplace_back(prefix + std::to_string(l) + ".weight", &tower[l].weight);
      out.emplace_back(prefix + std::to_string(l) + ".bias", &tower[l].bias);
    }
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MtlParameters::named(const MtlConfig& cfg) const {
  auto mut = const_cast<MtlParameters*>(this)->named(cfg);
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mut.size());
  for (auto& [name, t] : mut) out.emplace_back(std::move(name), t);
  return out;
}

MtlNetwork::MtlNetwork(MtlConfig cfg) : cfg_(std::move(cfg)) {
  validate_config(cfg_);
  params_ = MtlParameters::zeros(cfg_);
}

MtlNetwork MtlNetwork::glorot(MtlConfig cfg, std::uint64_t seed) {
  MtlNetwork net(std::move(cfg));
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Tensor& t, double s) {
    std::uniform_real_distribution<double> dist(-s, s);
    for (auto& v : t.values) v = dist(rng);
  };
  auto& p = net.params_;
  const double emb_scale = std::sqrt(6.0 / (1.0 + net.cfg_.embed_dim));
  for (auto& e : p.embeddings) fill(e, emb_scale);
  auto fill_layer = [&](DenseLayer& l) {
    fill(l.weight, std::sqrt(6.0 / (static_cast<double>(l.in_dim()) + l.out_dim())));
  };
  fill_layer(p.bottom);
  for (auto& l : p.tower_v) fill_layer(l);
  for (auto& l : p.tower_w) fill_layer(l);
  return net;
}

void MtlNetwork::round_to_f32() {
  for (auto& [name, t] : params_.named(cfg_)) {
    for (auto& v : t->values) v = static_cast<double>(static_cast<float>(v));
  }
}

namespace {

void dense_forward(const DenseLayer& layer, std::span<const double> in, std::span<double> out) {
  const auto n_in = layer.in_dim();
  const double* w = layer.weight.values.data();
  for (std::uint32_t o = 0; o < layer.out_dim(); ++o) {
    double s = layer.bias.values[o];
    const double* row = w + static_cast<std::size_t>(o) * n_in;
    for (std::uint32_t i = 0; i < n_in; ++i) s += row[i] * in[i];
    out[o] = s;
  }
}

// dW += dout x in^T, db += dout, din = W^T dout (din may be empty).
void dense_backward(const DenseLayer& layer, std::span<const double> in, std::span<const double> dout,
                    DenseLayer& grad, std::span<double> din) {
  const auto n_in = layer.in_dim();
  if (!din.empty()) std::fill(din.begin(), din.end(), 0.0);
  for (std::uint32_t o = 0; o < layer.out_dim(); ++o) {
    const double g = dout[o];
    grad.bias.values[o] += g;
    if (g == 0.0) continue;
    double* grow = grad.weight.values.data() + static_cast<std::size_t>(o) * n_in;
    const double* wrow = layer.weight.values.data() + static_cast<std::size_t>(o) * n_in;
    for (std::uint32_t i = 0; i < n_in; ++i) grow[i] += g * in[i];
    if (!din.empty()) {
      for (std::uint32_t i = 0; i < n_in; ++i) din[i] += wrow[i] * g;
    }
  }
}

void relu(std::span<double> v) {
  for (auto& x : v) x = x < 0.0 ? 0.0 : x;  // NaN passes through so divergence is detected
}

struct TowerState {
  std::vector<double> h1, h2;  // post-activation
  double z = 0.0;
  double p = 0.5;
};

struct Workspace {
  std::vector<double> input, bottom;  // bottom is post-activation
  TowerState v, w;

  explicit Workspace(const MtlConfig& cfg)
      : input(cfg.input_dim()), bottom(cfg.bottom_dim) {
    for (auto* t : {&v, &w}) {
      t->h1.resize(cfg.tower_hidden1);
      t->h2.resize(cfg.tower_hidden2);
    }
  }
};

void check_features(const MtlConfig& cfg, const FeatureVector& f) {
  if (f.tokens.size() != cfg.slots.size() || f.dense.size() != cfg.dense_dim) {
    throw ValidationError("feature-out-of-range", "feature vector arity does not match the network");
  }
  for (std::size_t s = 0; s < f.tokens.size(); ++s) {
    if (f.tokens[s] >= cfg.slots[s].cardinality) {
      throw ValidationError("feature-out-of-range",
                            "token " + std::to_string(f.tokens[s]) + " outside slot " + cfg.slots[s].name);
    }
  }
}

void tower_forward(const std::array<DenseLayer, 3>& tower, std::span<const double> bottom, TowerState& st) {
  dense_forward(tower[0], bottom, st.h1);
  relu(st.h1);
  dense_forward(tower[1], st.h1, st.h2);
  relu(st.h2);
  double z = 0.0;
  dense_forward(tower[2], st.h2, std::span<double>(&z, 1));
  st.z = z;
  st.p = logistic(z);
}

void run_forward(const MtlNetwork& net, const FeatureVector& f, Workspace& ws, bool both_towers) {
  const auto& cfg = net.config();
  const auto& p = net.params();
  check_features(cfg, f);
  std::size_t off = 0;
  for (std::size_t s = 0; s < cfg.slots.size(); ++s) {
    const double* row = p.embeddings[s].values.data() + static_cast<std::size_t>(f.tokens[s]) * cfg.embed_dim;
    std::copy(row, row + cfg.embed_dim, ws.input.begin() + static_cast<std::ptrdiff_t>(off));
    off += cfg.embed_dim;
  }
  std::copy(f.dense.begin(), f.dense.end(), ws.input.begin() + static_cast<std::ptrdiff_t>(off));
  dense_forward(p.bottom, ws.input, ws.bottom);
  relu(ws.bottom);
  tower_forward(p.tower_v, ws.bottom, ws.v);
  if (both_towers) tower_forward(p.tower_w, ws.bottom, ws.w);
}

// Backprop dL/dz through one tower; accumulates the tower's contribution to
// dL/d(bottom output) into dbottom.
void tower_backward(const std::array<DenseLayer, 3>& tower, std::span<const double> bottom,
                    const TowerState& st, double dz, std::array<DenseLayer, 3>& grad,
                    std::vector<double>& d2, std::vector<double>& d1, std::vector<double>& dbottom_part,
                    std::span<double> dbottom) {
  dense_backward(tower[2], st.h2, std::span<const double>(&dz, 1), grad[2], d2);
  for (std::size_t i = 0; i < d2.size(); ++i) {
    if (st.h2[i] <= 0.0) d2[i] = 0.0;
  }
  dense_backward(tower[1], st.h1, d2, grad[1], d1);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    if (st.h1[i] <= 0.0) d1[i] = 0.0;
  }
  dense_backward(tower[0], bottom, d1, grad[0], dbottom_part);
  for (std::size_t i = 0; i < dbottom.size(); ++i) dbottom[i] += dbottom_part[i];
}

double clamped(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double bce(double p, int y) { return y == 1 ? -std::log(clamped(p)) : -std::log(1.0 - clamped(p)); }

std::vector<std::size_t> canonical_order(std::span<const TrainingInstance> batch) {
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = batch[a];
    const auto& y = batch[b];
    if (auto c = x.features <=> y.features; c != 0) return c < 0;
    if (x.y != y.y) return x.y < y.y;
    return x.w < y.w;
  });
  return order;
}

}  // namespace

Prediction forward(const MtlNetwork& net, const FeatureVector& features) {
  Workspace ws(net.config());
  run_forward(net, features, ws, true);
  return {ws.v.p, ws.w.p};
}

double score(const MtlNetwork& net, const FeatureVector& features) {
  auto pred = forward(net, features);
  return net.config().weighted_tower ? pred.p + pred.p_prime : pred.p;
}

LossBreakdown batch_loss(const MtlNetwork& net, std::span<const TrainingInstance> batch) {
  const bool weighted = net.config().weighted_tower;
  Workspace ws(net.config());
  LossBreakdown loss;
  for (auto idx : canonical_order(batch)) {
    const auto& inst = batch[idx];
    run_forward(net, inst.features, ws, weighted);
    loss.l_v += bce(ws.v.p, inst.y);
    if (weighted) loss.l_w += inst.w * bce(ws.w.p, inst.y);
  }
  loss.total = loss.l_v + loss.l_w;
  return loss;
}

BackwardResult backward(const MtlNetwork& net, std::span<const TrainingInstance> batch) {
  const auto& cfg = net.config();
  const auto& p = net.params();
  const bool weighted = cfg.weighted_tower;
  BackwardResult out{MtlParameters::zeros(cfg), {}};
  auto& g = out.grad;

  Workspace ws(cfg);
  std::vector<double> d2(cfg.tower_hidden2), d1(cfg.tower_hidden1), dpart(cfg.bottom_dim);
  std::vector<double> dbottom(cfg.bottom_dim), dinput(cfg.input_dim());

  for (auto idx : canonical_order(batch)) {
    const auto& inst = batch[idx];
    run_forward(net, inst.features, ws, weighted);
    out.loss.l_v += bce(ws.v.p, inst.y);
    if (weighted) out.loss.l_w += inst.w * bce(ws.w.p, inst.y);

    std::fill(dbottom.begin(), dbottom.end(), 0.0);
    tower_backward(p.tower_v, ws.bottom, ws.v, ws.v.p - inst.y, g.tower_v, d2, d1, dpart, dbottom);
    if (weighted) {
      tower_backward(p.tower_w, ws.bottom, ws.w, inst.w * (ws.w.p - inst.y), g.tower_w, d2, d1, dpart,
                     dbottom);
    }
    for (std::size_t i = 0; i < dbottom.size(); ++i) {
      if (ws.bottom[i] <= 0.0) dbottom[i] = 0.0;
    }
    dense_backward(p.bottom, ws.input, dbottom, g.bottom, dinput);

    std::size_t off = 0;
    for (std::size_t s = 0; s < cfg.slots.size(); ++s) {
      double* row = g.embeddings[s].values.data() + static_cast<std::size_t>(inst.features.tokens[s]) * cfg.embed_dim;
      for (std::uint32_t k = 0; k < cfg.embed_dim; ++k) row[k] += dinput[off + k];
      off += cfg.embed_dim;
    }
  }
  out.loss.total = out.loss.l_v + out.loss.l_w;
  return out;
}

namespace {
constexpr std::string_view kCheckpointMagic = "VRMT";
}

std::string serialize_checkpoint(const MtlNetwork& net, const nlohmann::json& metadata) {
  ByteWriter out;
  out.bytes(kCheckpointMagic);
  out.u32(kCheckpointVersion);
  nlohmann::json header = {{"config", to_json(net.config())}, {"metadata", metadata}};
  out.str(header.dump());
  auto named = net.params().named(net.config());
  out.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    out.str(name);
    out.u32(static_cast<std::uint32_t>(t->shape.size()));
    for (auto d : t->shape) out.u32(d);
    for (double v : t->values) out.f32(static_cast<float>(v));
  }
  return out.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.remaining() < 4 || in.bytes(4) != kCheckpointMagic) {
    throw ValidationError("bad-checkpoint", "not a checkpoint (magic mismatch)");
  }
  auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("bad-checkpoint", "unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  MtlConfig cfg;
  try {
    header = nlohmann::json::parse(in.str());
    cfg = mtl_config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad-checkpoint", std::string("checkpoint header: ") + e.what());
  }
  MtlNetwork net(std::move(cfg));
  auto named = net.params().named(net.config());
  if (in.u32() != named.size()) throw ValidationError("bad-checkpoint", "tensor count mismatch");
  for (auto& [name, t] : named) {
    if (in.str() != name) throw ValidationError("bad-checkpoint", "unexpected tensor, wanted " + name);
    auto rank = in.u32();
    std::vector<std::uint32_t> shape(rank);
    for (auto& d : shape) d = in.u32();
    if (shape != t->shape) throw ValidationError("bad-checkpoint", "shape mismatch for " + name);
    for (auto& v : t->values) v = static_cast<double>(in.f32());
  }
  if (!in.at_end()) throw ValidationError("bad-checkpoint", "trailing bytes in checkpoint");
  return {std::move(net), header.value("metadata", nlohmann::json::object())};
}

void save_checkpoint(const std::filesystem::path& path, const MtlNetwork& net,
                     const nlohmann::json& metadata) {
  write_file_atomic(path, serialize_checkpoint(net, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace dwr
