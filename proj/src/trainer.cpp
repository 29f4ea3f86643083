#include "dwr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dwr/error.hpp"

namespace dwr {

Objective parse_objective(std::string_view s) {
  if (s == "single_ctr") return Objective::single_ctr;
  if (s == "ctr_logdt") return Objective::ctr_logdt;
  if (s == "vr_logdt") return Objective::vr_logdt;
  if (s == "vr_ndt") return Objective::vr_ndt;
  throw ValidationError("bad-objective", "unknown objective '" + std::string(s) + "'");
}

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::single_ctr: return "single_ctr";
    case Objective::ctr_logdt: return "ctr_logdt";
    case Objective::vr_logdt: return "vr_logdt";
    case Objective::vr_ndt: return "vr_ndt";
  }
  return "?";
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::sort(tokens_.begin(), tokens_.end());
  tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
}

std::uint32_t Vocabulary::index(std::string_view token) const {
  auto it = std::lower_bound(tokens_.begin(), tokens_.end(), token);
  if (it == tokens_.end() || *it != token) return 0;
  return static_cast<std::uint32_t>(it - tokens_.begin()) + 1;
}

FeatureEncoder FeatureEncoder::fit(std::span<const LabeledEvent> events) {
  std::vector<std::string> users, items;
  users.reserve(events.size());
  items.reserve(events.size());
  for (const auto& le : events) {
    users.push_back(le.event.user_id);
    items.push_back(le.event.item_id);
  }
  return {Vocabulary(std::move(users)), Vocabulary(std::move(items))};
}

FeatureVector FeatureEncoder::encode(const InteractionEvent& event) const {
  return {{users.index(event.user_id), items.index(event.item_id)}, {}};
}

std::vector<SlotSpec> FeatureEncoder::slots() const {
  return {{"user_id", users.cardinality()}, {"item_id", items.cardinality()}};
}

nlohmann::json FeatureEncoder::to_json() const {
  return {{"user_id", users.tokens()}, {"item_id", items.tokens()}};
}

FeatureEncoder FeatureEncoder::from_json(const nlohmann::json& j) {
  try {
    return {Vocabulary(j.at("user_id").get<std::vector<std::string>>()),
            Vocabulary(j.at("item_id").get<std::vector<std::string>>())};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad-checkpoint", std::string("vocabulary: ") + e.what());
  }
}

TrainingInstance make_instance(const LabeledEvent& le, FeatureVector features, const NdtParams& ndt_params,
                               Objective objective, NegativeWeighting neg_mode) {
  TrainingInstance inst;
  inst.features = std::move(features);
  const double dwell = le.event.dwell_time_s;
  const bool literal = neg_mode == NegativeWeighting::literal;
  switch (objective) {
    case Objective::single_ctr:
      inst.y = le.event.clicked ? 1 : 0;
      inst.w = 0.0;
      break;
    case Objective::ctr_logdt:
      inst.y = le.event.clicked ? 1 : 0;
      inst.w = (inst.y == 1 || literal) ? std::log1p(dwell) : 1.0;
      break;
    case Objective::vr_logdt:
      inst.y = le.label.kind == LabelKind::ValidRead ? 1 : 0;
      inst.w = (inst.y == 1 || literal) ? std::log1p(dwell) : 1.0;
      break;
    case Objective::vr_ndt:
      inst.y = le.label.kind == LabelKind::ValidRead ? 1 : 0;
      inst.w = instance_weight(le.label, ndt_params, neg_mode);
      break;
  }
  return inst;
}

std::vector<TrainingInstance> build_instances(std::span<const LabeledEvent> events,
                                              const FeatureEncoder& encoder, const NdtParams& ndt_params,
                                              const TrainConfig& cfg) {
  std::vector<TrainingInstance> out;
  out.reserve(events.size());
  for (const auto& le : events) {
    out.push_back(make_instance(le, encoder.encode(le.event), ndt_params, cfg.objective, cfg.neg_mode));
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct AdamState {
  MtlParameters m;
  MtlParameters v;
  std::uint64_t step = 0;
};

void adam_step(MtlNetwork& net, MtlParameters& grad, AdamState& st, const TrainConfig& cfg, double scale) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const auto& arch = net.config();
  auto params = net.params().named(arch);
  auto grads = grad.named(arch);
  auto ms = st.m.named(arch);
  auto vs = st.v.named(arch);
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (!arch.weighted_tower && params[t].first.starts_with("tower_w.")) continue;
    auto& p = params[t].second->values;
    const auto& g = grads[t].second->values;
    auto& m = ms[t].second->values;
    auto& v = vs[t].second->values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_epsilon);
    }
  }
}

void check_finite(const LossBreakdown& loss, int epoch) {
  if (!std::isfinite(loss.total)) {
    throw RuntimeFailure("diverged", "non-finite loss in epoch " + std::to_string(epoch) +
                                         " (L_v=" + std::to_string(loss.l_v) +
                                         ", L_w=" + std::to_string(loss.l_w) + ")");
  }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, MtlConfig arch, std::span<const TrainingInstance> instances) {
  if (instances.empty()) throw ValidationError("no-instances", "training set is empty");
  if (cfg.batch_size == 0 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) {
    throw ValidationError("bad-train-config", "batch size, epochs or learning rate out of range");
  }
  arch.weighted_tower = cfg.objective != Objective::single_ctr;

  TrainResult result{MtlNetwork::glorot(arch, cfg.seed), {}};
  auto& net = result.net;
  const auto n = static_cast<double>(instances.size());

  auto initial = batch_loss(net, instances);
  check_finite(initial, 0);
  result.trace.push_back({0, initial.l_v / n, initial.l_w / n, initial.total / n});

  AdamState adam{MtlParameters::zeros(net.config()), MtlParameters::zeros(net.config()), 0};
  std::vector<std::size_t> order(instances.size());
  std::vector<TrainingInstance> batch;
  batch.reserve(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(epoch))));
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (auto i = start; i < end; ++i) batch.push_back(instances[order[i]]);
      auto res = backward(net, batch);
      check_finite(res.loss, epoch);
      epoch_loss.l_v += res.loss.l_v;
      epoch_loss.l_w += res.loss.l_w;
      adam_step(net, res.grad, adam, cfg, 1.0 / static_cast<double>(batch.size()));
    }
    epoch_loss.total = epoch_loss.l_v + epoch_loss.l_w;
    result.trace.push_back({epoch, epoch_loss.l_v / n, epoch_loss.l_w / n, epoch_loss.total / n});
  }
  net.round_to_f32();
  return result;
}

std::string format_loss_trace(const std::vector<EpochLoss>& trace) {
  std::string out = "epoch,L_v,L_w,L\n";
  for (const auto& e : trace) {
    out += std::to_string(e.epoch) + ',' + format_real(e.l_v) + ',' + format_real(e.l_w) + ',' +
           format_real(e.total) + '\n';
  }
  return out;
}

}  // namespace dwr
