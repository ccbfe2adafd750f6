#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "stdpavg/model.hpp"

using namespace stdpavg;

namespace {

const Check* find_check(const ValidationReport& r, const std::string& assumption, const std::string& fn) {
  for (const auto& c : r.checks)
    if (c.assumption == assumption && c.function == fn) return &c;
  return nullptr;
}

ModelSpec example_simple() { return simple_model({1.0, 0.5, 0.1, 0.3, 1.0, 1.0}); }

}  // namespace

TEST(Validate, SimpleModelPasses) {
  const auto o = validate_spec(example_simple());
  EXPECT_TRUE(o.report.ok()) << o.report.summary();
  ASSERT_TRUE(o.model.has_value());
  EXPECT_EQ(o.model->spec().name, "simple");
}

TEST(Validate, ZeroGammaIsRejected) {
  auto s = example_simple();
  s.gamma = {0.0};
  const auto o = validate_spec(s);
  EXPECT_FALSE(o.model.has_value());
  const auto v = o.report.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].assumption, "gamma must be positive");
  EXPECT_EQ(v[0].function, "gamma_1");
}

TEST(Validate, QuadraticRateViolatesGrowthWithProbe) {
  auto s = example_simple();
  std::vector<std::pair<double, double>> k{{-10.0, 0.0}, {0.0, 0.0}};
  for (int i = 1; i <= 30; ++i) k.emplace_back(i, double(i) * i);
  s.beta = FunctionSpec::piecewise_linear(k);
  s.bounds.c_beta = 0.0;
  s.bounds.C_beta = 1.0;
  const auto o = validate_spec(s);
  const auto v = o.report.violations();
  ASSERT_EQ(v.size(), 1u) << o.report.summary();
  EXPECT_EQ(v[0].assumption, "beta <= C_beta(1+|x|)");
  EXPECT_EQ(v[0].function, "beta");
  EXPECT_FALSE(v[0].probe.empty());
  EXPECT_THROW(require_valid(s), ValidationError);
}

TEST(Validate, NegativePlasticityIncrementIsRejected) {
  auto s = example_simple();
  s.k1 = {FunctionSpec::constant(-0.1)};
  const auto v = validate_spec(s).report.violations();
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].assumption, "non-negative");
  EXPECT_EQ(v[0].function, "k1_1");
}

TEST(Validate, DiscontinuousRateIsRejected) {
  auto s = example_simple();
  s.beta = FunctionSpec::affine_clipped(1.0, 0.5, 0.0);
  s.bounds.C_beta = 1.0;
  const auto v = validate_spec(s).report.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].assumption, "continuous (restriction on discontinuities)");
}

TEST(Validate, UnboundedDepressionRateIsRejected) {
  auto s = simple_model({1.0, 0.5, 0.1, 0.3, 1.0, 1.0}, WeightRule::drift);
  s.M_d = FunctionSpec::affine(0.0, 3.0);
  const auto v = validate_spec(s).report.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].assumption, "M_a(omega,w) <= C_M(1+omega)");
  EXPECT_EQ(v[0].function, "M_d");
}

TEST(Validate, DecreasingDriftIsRejected) {
  auto s = simple_model({1.0, 0.5, 0.1, 0.3, 1.0, 1.0}, WeightRule::drift);
  s.M_d = FunctionSpec::piecewise_linear({{0.0, 1.0}, {1.0, 0.5}, {2.0, 1.0}});
  s.bounds.C_M = 1.0;
  const auto v = validate_spec(s).report.violations();
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].assumption, "non-decreasing in omega");
}

TEST(Validate, IsPureAndDeterministic) {
  auto s = example_simple();
  s.beta = FunctionSpec::affine(0.0, 2.0);
  const auto before = s.beta;
  const auto a = validate_spec(s).report.summary();
  const auto b = validate_spec(s).report.summary();
  EXPECT_EQ(a, b);
  EXPECT_EQ(s.beta.kind, before.kind);
  EXPECT_EQ(s.beta.b, before.b);
}

TEST(Validate, DominatingSystemIsValid) {
  const auto d = dominating_spec(example_simple());
  const auto o = validate_spec(d);
  EXPECT_TRUE(o.report.ok()) << o.report.summary();
  ASSERT_TRUE(d.dominating.has_value());
  EXPECT_DOUBLE_EQ(d.dominating->C_beta, 0.5);
  EXPECT_DOUBLE_EQ(d.dominating->C_k, 1.0);
}

TEST(Validate, VectorTraceChecksEveryRay) {
  auto s = example_simple();
  s.gamma = {1.0, 2.0};
  s.k0 = {0.0, 0.0};
  s.k1 = {FunctionSpec::constant(0.3), FunctionSpec::constant(0.2)};
  s.k2 = {FunctionSpec::constant(1.0), FunctionSpec::constant(0.5)};
  s.n[kPot][2] = FunctionSpec::affine(0.0, 1.0).on({1.0, 1.0});
  s.n[kPot][0] = FunctionSpec::affine(0.0, 1.0).on({0.0, 2.0});
  auto o = validate_spec(s);
  ASSERT_FALSE(o.report.ok());
  const auto v = o.report.violations();
  ASSERT_EQ(v.size(), 1u) << o.report.summary();
  EXPECT_EQ(v[0].function, "n_p0");
  s.bounds.C_n = 2.0;
  EXPECT_TRUE(validate_spec(s).report.ok());
}

TEST(Validate, DominatingInitialDominates) {
  SystemState u;
  u.x = -1.0;
  u.z = {0.5};
  u.omega_p = 0.2;
  u.omega_d = 0.7;
  u.w = -3.0;
  const auto d = dominating_initial(u);
  EXPECT_EQ(d.x, 0.0);
  EXPECT_EQ(d.z[0], 0.5);
  EXPECT_EQ(d.omega_p, 0.7);
  EXPECT_EQ(d.omega_d, 0.7);
  EXPECT_EQ(d.w, 3.0);
}

// For random piecewise-linear rates with integer breakpoints and tails that
// stay below the linear envelope, the analytic and dense-grid verdicts agree.
TEST(Validate, AnalyticAndGridVerdictsAgree) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<int> knot(-8, 40);
  int violated = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double C = 0.5 + 2.0 * U(gen);
    std::set<int> xs;
    while (xs.size() < 4) xs.insert(knot(gen));
    std::vector<std::pair<double, double>> k;
    for (int x : xs) k.emplace_back(x, C * (1.0 + std::abs(x)) * (0.4 + 0.7 * U(gen)));
    k.emplace_back(k.back().first + 1.0, k.back().second + 0.9 * C * U(gen));
    k.insert(k.begin(), {k.front().first - 1.0, 0.5 * k.front().second});
    auto s = example_simple();
    s.beta = FunctionSpec::piecewise_linear(k);
    s.bounds.C_beta = C;
    s.bounds.c_beta = 20.0;
    const auto r = validate_spec(s).report;
    const Check* c = find_check(r, "beta <= C_beta(1+|x|)", "beta");
    ASSERT_NE(c, nullptr);
    ASSERT_TRUE(c->analytic.has_value());
    EXPECT_EQ(*c->analytic, c->grid) << "trial " << trial;
    violated += !c->passed;
  }
  EXPECT_GT(violated, 5);
  EXPECT_LT(violated, 95);
}

TEST(Validate, AffineRatesAnalyticAndGridAgree) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double C = 0.5 + 2.0 * U(gen);
    double slope;
    do slope = 2.0 * C * U(gen);
    while (std::abs(slope - C) < 0.01);
    const double icept = C * 1.5 * U(gen);
    auto s = example_simple();
    s.beta = FunctionSpec::affine_clipped(icept, slope);
    s.bounds.C_beta = C;
    s.bounds.c_beta = icept / slope;
    const auto r = validate_spec(s).report;
    const Check* c = find_check(r, "beta <= C_beta(1+|x|)", "beta");
    ASSERT_NE(c, nullptr);
    ASSERT_TRUE(c->analytic.has_value());
    EXPECT_EQ(*c->analytic, c->grid) << "trial " << trial << " slope " << slope << " icept " << icept;
  }
}
