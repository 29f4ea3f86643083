#include "dwr/ndt.hpp"

#include <algorithm>
#include <cmath>

#include "dwr/error.hpp"

namespace dwr {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

NdtScale derive_scale(double offset, double tau, double t_max) {
  if (!(tau > 0.0) || !(t_max > 0.0) || !(offset >= 0.0) || !std::isfinite(offset) ||
      !std::isfinite(tau) || !std::isfinite(t_max)) {
    throw ValidationError("bad-ndt-params", "derive_scale needs tau > 0, t_max > 0, offset >= 0");
  }
  NdtScale s;
  s.a = t_max / logistic(offset / tau);
  s.b = s.a * logistic(-offset / tau);
  return s;
}

NdtParams make_ndt_params(double offset, double tau, double t_max, double precision) {
  if (!(precision > 0.0)) throw ValidationError("bad-ndt-params", "precision must be positive");
  auto [a, b] = derive_scale(offset, tau, t_max);
  return NdtParams{offset, tau, a, b, t_max, precision};
}

NdtParams default_ndt_params() {
  return make_ndt_params(kDefaultNdtOffset, kDefaultNdtTau, kDefaultNdtTmax, kDefaultNdtPrecision);
}

namespace {

// t_max - ndt(x_h) in closed form: t_max * logistic(-(x_h - offset)/tau) / logistic(offset/tau).
double tail_gap(double offset, double x_h, double tau, double t_max) {
  return t_max * logistic(-(x_h - offset) / tau) / logistic(offset / tau);
}

}  // namespace

double solve_tau(double offset, double x_h, double precision, double t_max) {
  if (!(precision > 0.0) || !(t_max > 0.0) || precision >= t_max) {
    throw ValidationError("infeasible-precision", "precision must lie in (0, t_max)");
  }
  if (!(x_h > offset) || !(offset >= 0.0)) {
    throw ValidationError("bad-ndt-params", "solve_tau needs x_h > offset >= 0");
  }
  // The gap grows monotonically with tau: 0 as tau -> 0, t_max as tau -> inf.
  double lo = 1e-9;
  double hi = 1.0;
  while (tail_gap(offset, x_h, hi, t_max) <= precision) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw RuntimeFailure("solve-tau-failed", "tau bracket did not close");
  }
  while (hi - lo > 1e-4) {
    double mid = 0.5 * (lo + hi);
    if (tail_gap(offset, x_h, mid, t_max) <= precision) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

NdtParams solved_ndt_params(const DwellStats& stats, double precision, double t_max) {
  double tau = solve_tau(stats.x_l, stats.x_h, precision, t_max);
  return make_ndt_params(stats.x_l, tau, t_max, precision);
}

double ndt(double dwell_time_s, const NdtParams& p) {
  // Same as a * logistic(z) - b since a - b = t_max; this form keeps the tail exact near t_max.
  const double v = p.t_max - p.a * logistic(-(dwell_time_s - p.offset) / p.tau);
  return std::clamp(v, 0.0, p.t_max);
}

NegativeWeighting parse_negative_weighting(std::string_view s) {
  if (s == "unit") return NegativeWeighting::unit;
  if (s == "literal") return NegativeWeighting::literal;
  throw ValidationError("bad-neg-mode", "neg-mode must be unit or literal");
}

std::string_view to_string(NegativeWeighting mode) {
  return mode == NegativeWeighting::unit ? "unit" : "literal";
}

double instance_weight(const ValidReadLabel& label, const NdtParams& p, NegativeWeighting mode) {
  if (label.kind == LabelKind::ValidRead || mode == NegativeWeighting::literal) {
    return ndt(label.dwell_time_s, p);
  }
  return 1.0;
}

nlohmann::json to_json(const NdtParams& p) {
  return {{"offset", p.offset}, {"tau", p.tau}, {"a", p.a},
          {"b", p.b}, {"t_max", p.t_max}, {"precision", p.precision}};
}

NdtParams ndt_params_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("selected")) {
      return ndt_params_from_json(j.at(j.at("selected").get<std::string>()));
    }
    NdtParams p;
    p.offset = j.at("offset").get<double>();
    p.tau = j.at("tau").get<double>();
    p.a = j.at("a").get<double>();
    p.b = j.at("b").get<double>();
    p.t_max = j.at("t_max").get<double>();
    p.precision = j.value("precision", kDefaultNdtPrecision);
    if (!(p.tau > 0.0) || !(p.a > 0.0) || !(p.b >= 0.0) || !(p.t_max > 0.0)) {
      throw ValidationError("bad-ndt-params", "ndt params out of range");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad-ndt-params", std::string("malformed ndt params JSON: ") + e.what());
  }
}

}  // namespace dwr
