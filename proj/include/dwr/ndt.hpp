#pragma once

#include <nlohmann/json.hpp>

#include "dwr/dwell_stats.hpp"
#include "dwr/labeler.hpp"

namespace dwr {

// Normalized dwell time: a / (1 + exp(-(T - offset) / tau)) - b.
//
// offset places the steepest slope (normally at x_l), tau sets the sharpness,
// and (a, b) scale the curve so that ndt(0) == 0 and ndt(T) -> t_max. The
// precision field is the tail tolerance used when tau is solved from x_h.
struct NdtParams {
  double offset = 15.0;
  double tau = 20.0;
  double a = 0.0;
  double b = 0.0;
  double t_max = 1.575;
  double precision = 1e-5;
};

inline constexpr double kDefaultNdtOffset = 15.0;
inline constexpr double kDefaultNdtTau = 20.0;
inline constexpr double kDefaultNdtTmax = 1.575;
inline constexpr double kDefaultNdtPrecision = 1e-5;

double logistic(double z);

struct NdtScale {
  double a = 0.0;
  double b = 0.0;
};

// a = t_max / logistic(offset / tau), b = a * logistic(-offset / tau).
NdtScale derive_scale(double offset, double tau, double t_max);

// Validates and fills a, b from derive_scale.
NdtParams make_ndt_params(double offset, double tau, double t_max = kDefaultNdtTmax,
                          double precision = kDefaultNdtPrecision);

// offset 15, tau 20, t_max 1.575 (a ~ 2.319, b ~ 0.744).
NdtParams default_ndt_params();

// Largest tau (to 1e-3) whose curve is within `precision` of t_max at x_h.
double solve_tau(double offset, double x_h, double precision, double t_max = kDefaultNdtTmax);

// offset = x_l, tau solved at x_h.
NdtParams solved_ndt_params(const DwellStats& stats, double precision = kDefaultNdtPrecision,
                            double t_max = kDefaultNdtTmax);

double ndt(double dwell_time_s, const NdtParams& p);

enum class NegativeWeighting { unit, literal };

NegativeWeighting parse_negative_weighting(std::string_view s);
std::string_view to_string(NegativeWeighting mode);

// Valid reads are weighted by ndt(T). Other labels get 1.0 in unit mode and
// ndt(T) in literal mode (so unclicked impressions weigh 0).
double instance_weight(const ValidReadLabel& label, const NdtParams& p, NegativeWeighting mode);

nlohmann::json to_json(const NdtParams& p);
// Accepts a flat params object or {"selected": name, name: {...}, ...}.
NdtParams ndt_params_from_json(const nlohmann::json& j);

}  // namespace dwr
