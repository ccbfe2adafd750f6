#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "stdpavg/discrete.hpp"

using namespace stdpavg;

namespace {

DiscreteParams silent() {
  DiscreteParams p;
  p.lambda = 0.0;
  p.beta = 0.0;
  p.gamma = 0.0;
  p.delta = 0.0;
  p.B1 = {0};
  p.B2 = {0};
  p.A_p = p.A_d = 0;
  for (auto& row : p.n)
    for (auto& f : row) f = FunctionSpec::constant(0.0);
  return p;
}

DiscreteParams reference_params() {
  DiscreteParams p;
  p.lambda = 1.0;
  p.beta = 1.0;
  p.gamma = 1.0;
  p.delta = 0.5;
  p.B1 = {1};
  p.B2 = {1};
  p.A_p = p.A_d = 1;
  for (auto& row : p.n)
    for (auto& f : row) f = FunctionSpec::constant(0.0);
  p.n[kPot][2] = FunctionSpec::saturating(1.0);
  p.n[kDep][1] = FunctionSpec::saturating(1.0);
  p.C_n = 1.0;
  return p;
}

DiscreteOptions options(double eps, double horizon) {
  DiscreteOptions o;
  o.epsilon = eps;
  o.horizon = horizon;
  return o;
}

}  // namespace

TEST(DiscreteValidate, ReferenceParametersPass) { EXPECT_TRUE(validate_discrete(reference_params()).ok()); }

TEST(DiscreteValidate, UnboundedRateFails) {
  auto p = reference_params();
  p.n[kPot][0] = FunctionSpec::affine(0.0, 2.0);
  const auto v = validate_discrete(p).violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].function, "n_p0");
}

TEST(DiscreteValidate, NegativeIncrementFails) {
  auto p = reference_params();
  p.B2 = {-1};
  EXPECT_FALSE(validate_discrete(p).ok());
  EXPECT_THROW(require_valid(p), ValidationError);
}

TEST(Discrete, PureDeathWeight) {
  auto p = silent();
  p.delta = 1.0;
  const double T = 1.0;
  const std::int64_t w0 = 20;
  std::vector<double> w;
  for (int r = 0; r < 2000; ++r) {
    const auto tr = simulate_discrete(p, discrete_initial(p, 0, w0), options(0.1, T), 1, r);
    for (const auto& e : tr.events) EXPECT_EQ(e.kind, EventKind::w_leak);
    w.push_back(static_cast<double>(tr.final_state.w));
  }
  const auto s = mean_se(w);
  EXPECT_NEAR(s.mean, w0 * std::exp(-T), 3 * s.se);
}

TEST(Discrete, TraceWithoutIncrementsOnlyDecays) {
  auto p = silent();
  p.gamma = 1.0;
  p.lambda = 1.0;
  const double eps = 0.5, T = 0.4;
  std::vector<double> z;
  for (int r = 0; r < 2000; ++r) {
    auto u0 = discrete_initial(p, 0, 1);
    u0.z = {20};
    const auto tr = simulate_discrete(p, u0, options(eps, T), 2, r);
    std::int64_t prev = 20;
    for (const auto& e : tr.events) {
      EXPECT_LE(e.z[0], prev);
      prev = e.z[0];
    }
    z.push_back(static_cast<double>(tr.final_state.z[0]));
  }
  const auto s = mean_se(z);
  EXPECT_NEAR(s.mean, 20 * std::exp(-T / eps), 3 * s.se);
}

TEST(Discrete, StateStaysNonNegative) {
  const auto p = reference_params();
  auto o = options(0.05, 2.0);
  for (double t = 0.1; t <= 2.0; t += 0.1) o.sample_times.push_back(t);
  for (int r = 0; r < 50; ++r) {
    const auto tr = simulate_discrete(p, discrete_initial(p, 0, 2), o, 3, r);
    for (const auto& q : tr.samples) {
      EXPECT_GE(q.x, 0);
      EXPECT_GE(q.z[0], 0);
      EXPECT_GE(q.w, 0);
      EXPECT_GE(q.omega_p, 0.0);
    }
  }
}

TEST(Discrete, SameSeedIsBitIdentical) {
  const auto p = reference_params();
  const auto a = simulate_discrete(p, discrete_initial(p, 0, 2), options(0.05, 1.0), 4, 1);
  const auto b = simulate_discrete(p, discrete_initial(p, 0, 2), options(0.05, 1.0), 4, 1);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].t, b.events[i].t);
    EXPECT_EQ(a.events[i].w, b.events[i].w);
    EXPECT_EQ(a.events[i].omega_p, b.events[i].omega_p);
  }
}

// Next-event holding times against Exp(total rate) by Kolmogorov-Smirnov, and
// event kinds against the rate table by chi-square, at three states.
TEST(Discrete, NextEventMatchesRates) {
  const auto p = reference_params();
  std::vector<DiscreteState> states(3, discrete_initial(p));
  states[0].x = 0;
  states[0].w = 0;
  states[1].x = 3;
  states[1].z = {2};
  states[1].w = 1;
  states[1].omega_p = 0.4;
  states[2].x = 7;
  states[2].z = {5};
  states[2].w = 4;
  states[2].omega_p = 1.2;
  states[2].omega_d = 0.6;
  Rng rng(5);
  const int n = 10000;
  for (const auto& s : states) {
    const auto r = discrete_rates(s, p, 0.2);
    const double R = r.total();
    std::vector<double> dt;
    std::array<double, 7> count{};
    for (int i = 0; i < n; ++i) {
      const auto e = sample_next_event(s, p, 0.2, rng);
      dt.push_back(e.dt);
      count[static_cast<int>(e.kind)] += 1;
    }
    std::sort(dt.begin(), dt.end());
    double D = 0.0;
    for (int i = 0; i < n; ++i) {
      const double F = 1.0 - std::exp(-R * dt[i]);
      D = std::max({D, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
    }
    EXPECT_LT(D, 1.628 / std::sqrt(double(n)));
    const std::array<double, 7> rates{r.pre, r.post, r.x_leak, r.z_leak, r.w_leak, r.w_pot, r.w_dep};
    double chi2 = 0.0;
    int df = -1;
    for (int k = 0; k < 7; ++k) {
      const double e = n * rates[k] / R;
      if (e == 0.0) {
        EXPECT_EQ(count[k], 0.0);
        continue;
      }
      chi2 += (count[k] - e) * (count[k] - e) / e;
      ++df;
    }
    if (df > 0) {
      EXPECT_LT(chi2, boost::math::quantile(boost::math::chi_squared(df), 0.99));
    }
  }
}

TEST(DiscreteEquilibrium, PotentialBalance) {
  auto p = reference_params();
  p.lambda = 0.5;
  p.beta = 2.0;
  EquilibriumSettings set;
  set.seed = 6;
  const auto e = estimate_discrete_pi(3, p, set);
  const double target = p.lambda * 3 / (1 + p.beta);
  EXPECT_NEAR(e.ex.mean, target, 3 * e.ex.se);
  const double ez = (p.lambda * p.B1[0] + p.beta * p.B2[0] * target) / p.gamma;
  EXPECT_NEAR(e.ez[0].mean, ez, 3 * e.ez[0].se);
}

TEST(DiscreteEquilibrium, ZeroWeightLeavesPotentialEmpty) {
  const auto p = reference_params();
  EquilibriumSettings set;
  set.horizon = 200;
  const auto e = estimate_discrete_pi(0, p, set);
  EXPECT_EQ(e.ex.mean, 0.0);
  EXPECT_EQ(e.psi[kPot].mean, 0.0);
  EXPECT_NEAR(e.ez[0].mean, p.lambda * p.B1[0] / p.gamma, 3 * e.ez[0].se);
}

TEST(DiscreteCoupling, WeightIsDominated) {
  const auto p = reference_params();
  auto o = options(0.05, 2.0);
  for (int k = 1; k <= 100; ++k) o.sample_times.push_back(2.0 * k / 100.0);
  for (int r = 0; r < 200; ++r) {
    const auto pair = simulate_discrete_coupled(p, discrete_initial(p, 0, 2), o, 7, r);
    ASSERT_EQ(pair.violations, 0u) << "replica " << r;
    ASSERT_EQ(pair.dominating_samples.size(), 100u);
    for (std::size_t k = 0; k < pair.original_samples.size(); ++k)
      EXPECT_LE(pair.original_samples[k].w, pair.dominating_samples[k].w);
  }
}

TEST(DiscreteCoupling, MarginalMatchesUncoupledInLaw) {
  const auto p = reference_params();
  std::vector<double> a, b;
  for (int r = 0; r < 1000; ++r) {
    a.push_back(double(simulate_discrete_coupled(p, discrete_initial(p, 0, 2), options(0.1, 1.0), 8, r).original.final_state.w));
    b.push_back(double(simulate_discrete(p, discrete_initial(p, 0, 2), options(0.1, 1.0), 9, r).final_state.w));
  }
  const auto ea = mean_se(a), eb = mean_se(b);
  EXPECT_LE(std::abs(ea.mean - eb.mean), 3 * std::hypot(ea.se, eb.se));
}

TEST(DiscreteGuard, DepressionNeverCrossesZero) {
  auto p = reference_params();
  p.A_d = 2;
  p.n[kDep][0] = FunctionSpec::constant(5.0);
  p.C_n = 5.0;
  int depressions = 0;
  for (int r = 0; r < 100; ++r) {
    const auto tr = simulate_discrete(p, discrete_initial(p, 0, 5), options(0.05, 2.0), 10, r);
    for (const auto& e : tr.events)
      if (e.kind == EventKind::w_depression) {
        ++depressions;
        EXPECT_GE(e.w_before, p.A_d);
        EXPECT_GE(e.w, 0);
      }
  }
  EXPECT_GT(depressions, 100);
}

TEST(DiscreteLimit, ConstantRateRelaxation) {
  auto p = silent();
  p.n[kPot][0] = FunctionSpec::constant(0.5);
  p.C_n = 1.0;
  p.A_p = 1;
  p.A_d = 1;
  p.alpha = 2.0;
  EquilibriumSettings set;
  set.replicas = 2;
  set.horizon = 10;
  DiscretePsiCache cache(p, set);
  const double om0 = 1.5, T = 1.0;
  std::vector<double> times{0.25, 0.5, 1.0}, w;
  for (int r = 0; r < 2000; ++r) {
    const auto path = simulate_discrete_limit(p, {0.0, om0, 0.0, 3}, T, cache, 11, r, times);
    ASSERT_EQ(path.samples.size(), times.size());
    for (std::size_t k = 0; k < times.size(); ++k)
      ASSERT_NEAR(path.samples[k].omega_p, 0.25 + (om0 - 0.25) * std::exp(-2.0 * times[k]), 1e-12);
    for (const auto& e : path.events) EXPECT_EQ(e.kind, EventKind::w_potentiation);
    w.push_back(double(path.final_state.w));
  }
  const auto s = mean_se(w);
  const double expected = 3 + 0.25 * T + (om0 - 0.25) * (1 - std::exp(-2.0 * T)) / 2.0;
  EXPECT_NEAR(s.mean, expected, 3 * s.se);
}

TEST(DiscreteLimit, GuardHoldsInTheLimit) {
  auto p = reference_params();
  p.A_d = 2;
  p.n[kDep][0] = FunctionSpec::constant(5.0);
  p.C_n = 5.0;
  EquilibriumSettings set;
  set.replicas = 4;
  set.horizon = 100;
  DiscretePsiCache cache(p, set);
  for (int r = 0; r < 100; ++r) {
    const auto path = simulate_discrete_limit(p, {0.0, 0.0, 0.0, 5}, 2.0, cache, 12, r);
    for (const auto& e : path.events) {
      if (e.kind == EventKind::w_depression) {
        EXPECT_GE(e.w_before, 2);
      }
      EXPECT_GE(e.w_after, 0);
    }
  }
}

TEST(DiscreteLimit, CacheIsOrderIndependent) {
  const auto p = reference_params();
  EquilibriumSettings set;
  set.replicas = 4;
  set.horizon = 50;
  DiscretePsiCache a(p, set), b(p, set);
  const auto a3 = a.get(3), a1 = a.get(1);
  const auto b1 = b.get(1), b3 = b.get(3);
  EXPECT_EQ(a3, b3);
  EXPECT_EQ(a1, b1);
  EXPECT_EQ(a.size(), 2u);
}

TEST(DiscreteLimit, CacheCapIsEnforced) {
  const auto p = reference_params();
  EquilibriumSettings set;
  set.replicas = 2;
  set.horizon = 10;
  DiscretePsiCache c(p, set, 2);
  c.get(0);
  c.get(1);
  EXPECT_NO_THROW(c.get(1));
  EXPECT_THROW(c.get(2), PsiCacheExhausted);
}

// Potentiation only, so the eps = 1 bias is not cancelled by depression and
// stands well above the Monte-Carlo noise of 4000 paths.
TEST(DiscreteSweep, ErrorShrinksWithEpsilon) {
  auto p = reference_params();
  p.n[kDep][1] = FunctionSpec::constant(0.0);
  DiscreteSweepSettings set;
  set.epsilons = {1.0, 0.01};
  set.replicas = 4000;
  set.limit_replicas = 8000;
  set.grid_points = 6;
  set.pi.replicas = 16;
  set.pi.horizon = 400;
  const auto rep = discrete_convergence_sweep(p, discrete_initial(p, 0, 2), set);
  ASSERT_EQ(rep.summary.size(), 2u);
  EXPECT_LT(rep.summary[1].sup_error, 0.5 * rep.summary[0].sup_error);
  EXPECT_EQ(rep.limit_source, "discrete-limit-monte-carlo");
}
