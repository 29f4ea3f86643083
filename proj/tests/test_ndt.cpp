#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "dwr/error.hpp"
#include "dwr/ndt.hpp"

using namespace dwr;

namespace {

// Direct restatement of the curve, used as the arithmetic oracle.
double curve(double t, double offset, double tau, double a, double b) {
  return a / (1.0 + std::exp(-(t - offset) / tau)) - b;
}

// Reference constants, rounded to three decimals.
constexpr double kA = 2.319;
constexpr double kB = 0.744;

}  // namespace

TEST(Ndt, RoundedConstantsArithmetic) {
  EXPECT_NEAR(curve(15.0, 15, 20, kA, kB), 0.4155, 1e-3);
  EXPECT_NEAR(curve(0.0, 15, 20, kA, kB), 0.0, 1e-3);
  EXPECT_NEAR(curve(35.0, 15, 20, kA, kB), 0.9513, 1e-3);
  EXPECT_NEAR(kA - kB, 1.575, 1e-12);
}

TEST(Ndt, DefaultParamsMatchRoundedConstants) {
  auto p = default_ndt_params();
  EXPECT_NEAR(p.a, kA, 1e-3);
  EXPECT_NEAR(p.b, kB, 1e-3);
  EXPECT_NEAR(ndt(15.0, p), 0.4155, 1e-3);
  EXPECT_NEAR(ndt(0.0, p), 0.0, 1e-12);
  EXPECT_NEAR(ndt(35.0, p), 0.9513, 1e-3);
  EXPECT_NEAR(ndt(1e9, p), p.t_max, 1e-12);
}

TEST(DeriveScale, Examples) {
  auto s = derive_scale(15, 20, 1.575);
  EXPECT_NEAR(s.a, 2.319, 1e-3);
  EXPECT_NEAR(s.b, 0.744, 1e-3);
  auto z = derive_scale(0, 7, 1.0);
  EXPECT_NEAR(z.a, 2.0, 1e-15);
  EXPECT_NEAR(z.b, 1.0, 1e-15);
  auto e = derive_scale(15, 15, 1.575);
  EXPECT_NEAR(e.a, 1.575 * (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(e.a, 2.1544, 1e-3);
  EXPECT_NEAR(e.b, 0.5794, 1e-3);
}

TEST(DeriveScale, RejectsNonPositive) {
  EXPECT_THROW(derive_scale(15, 0, 1.575), ValidationError);
  EXPECT_THROW(derive_scale(15, 20, -1), ValidationError);
  EXPECT_THROW(derive_scale(15, -3, 1.575), ValidationError);
}

TEST(DeriveScale, ParameterInvariants) {
  for (double offset : {0.0, 3.0, 15.0, 40.0}) {
    for (double tau : {0.5, 5.0, 20.0, 100.0}) {
      auto p = make_ndt_params(offset, tau, 1.575);
      EXPECT_NEAR((p.a - p.b) / 1.575, 1.0, 1e-9);
      EXPECT_NEAR(p.b / (p.a * logistic(-offset / tau)), 1.0, 1e-9);
      EXPECT_NEAR(ndt(0.0, p), 0.0, 1e-9);
    }
  }
}

TEST(SolveTau, Examples) {
  EXPECT_NEAR(solve_tau(15, 200, 1e-5, 1.575), 15.0, 0.1);
  EXPECT_NEAR(solve_tau(15, 200, 2.3e-4, 1.575), 20.0, 0.5);
  try {
    solve_tau(15, 200, 2.0, 1.575);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.reason(), "infeasible-precision");
  }
}

TEST(SolveTau, IsLargestFeasibleTau) {
  for (double precision : {1e-6, 1e-5, 1e-4, 1e-3}) {
    const double tau = solve_tau(15, 200, precision, 1.575);
    auto gap = [&](double t) { return 1.575 - ndt(200.0, make_ndt_params(15, t, 1.575)); };
    EXPECT_LE(gap(tau), precision * (1 + 1e-9));
    EXPECT_GT(gap(tau + 2e-3), precision);
  }
}

TEST(SolveTau, DefaultTauTailGap) {
  // tau = 20 leaves a gap of about 2.2e-4 at T = 200, above 1e-5.
  const double gap = 1.575 - ndt(200.0, default_ndt_params());
  EXPECT_NEAR(gap, 2.2e-4, 0.1e-4);
}

TEST(Ndt, StrictlyIncreasingAndBounded) {
  for (const auto& p : {default_ndt_params(), make_ndt_params(15, 15), make_ndt_params(7.2, 8.0)}) {
    double prev = ndt(0.0, p);
    for (double t = 0.25; t < 400.0; t += 0.25) {
      double v = ndt(t, p);
      // Past the point where the true increment drops below double resolution, only >= is representable.
      const double increment = p.a * (logistic((t - p.offset) / p.tau) - logistic((t - 0.25 - p.offset) / p.tau));
      if (increment > 4 * std::numeric_limits<double>::epsilon() * p.t_max) {
        EXPECT_GT(v, prev) << "t=" << t;
        EXPECT_LT(v, p.t_max);
      } else {
        EXPECT_GE(v, prev) << "t=" << t;
        EXPECT_LE(v, p.t_max);
      }
      EXPECT_GE(v, 0.0);
      prev = v;
    }
  }
}

TEST(Ndt, SteepestAtOffset) {
  const auto p = default_ndt_params();
  const double h = 0.01;
  double best_t = 0.0, best = -1.0;
  for (double t = h; t < 100.0; t += h) {
    double d = (ndt(t + h, p) - ndt(t - h, p)) / (2 * h);
    if (d > best) {
      best = d;
      best_t = t;
    }
  }
  EXPECT_NEAR(best_t, p.offset, 2 * h);
}

TEST(Ndt, ConcaveAboveOffset) {
  const auto p = default_ndt_params();
  for (double t = p.offset + 1.0; t < 300.0; t += 1.0) {
    EXPECT_LT(ndt(t + 1, p) - 2 * ndt(t, p) + ndt(t - 1, p), 0.0) << "t=" << t;
  }
}

TEST(Ndt, TailFlatnessWithSolvedTau) {
  DwellStats stats{4.003, 1.295, 100000, std::exp(4.003 - 1.295), std::exp(4.003 + 1.295)};
  const auto p = solved_ndt_params(stats, 1e-5);
  EXPECT_EQ(p.offset, stats.x_l);
  for (double t = stats.x_h; t < 20 * stats.x_h; t *= 1.1) {
    EXPECT_LE(p.t_max - ndt(t, p), 1e-5 * (1 + 1e-9));
  }
  EXPECT_NEAR(ndt(0.0, p), 0.0, 1e-9);
  EXPECT_LE(p.t_max - ndt(10 * stats.x_h, p), 1e-5);
}

TEST(InstanceWeight, Modes) {
  const auto p = default_ndt_params();
  ValidReadLabel vr{LabelKind::ValidRead, ValidReadSource::T1, 15.0};
  ValidReadLabel nc{LabelKind::NotClicked, std::nullopt, 0.0};
  ValidReadLabel noise{LabelKind::NoiseClick, std::nullopt, 3.0};
  EXPECT_NEAR(instance_weight(vr, p, NegativeWeighting::unit), 0.4155, 1e-3);
  EXPECT_EQ(instance_weight(vr, p, NegativeWeighting::literal), instance_weight(vr, p, NegativeWeighting::unit));
  EXPECT_EQ(instance_weight(nc, p, NegativeWeighting::unit), 1.0);
  EXPECT_NEAR(instance_weight(nc, p, NegativeWeighting::literal), 0.0, 1e-12);
  EXPECT_EQ(instance_weight(noise, p, NegativeWeighting::unit), 1.0);
  EXPECT_NEAR(instance_weight(noise, p, NegativeWeighting::literal), ndt(3.0, p), 0.0);
}

TEST(NdtJson, RoundTripAndSelected) {
  const auto p = make_ndt_params(7.5, 9.25, 1.2, 1e-4);
  auto back = ndt_params_from_json(to_json(p));
  EXPECT_EQ(back.offset, p.offset);
  EXPECT_EQ(back.tau, p.tau);
  EXPECT_EQ(back.a, p.a);
  EXPECT_EQ(back.b, p.b);
  nlohmann::json both = {{"selected", "solved"}, {"paper_default", to_json(default_ndt_params())}, {"solved", to_json(p)}};
  EXPECT_EQ(ndt_params_from_json(both).tau, 9.25);
  EXPECT_THROW(ndt_params_from_json(nlohmann::json{{"tau", 1}}), ValidationError);
}
