#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "model.hpp"
#include "parallel.hpp"
#include "simulator.hpp"

namespace stdpavg {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline Estimate mean_se(const std::vector<double>& v) {
  Estimate e;
  const double n = static_cast<double>(v.size());
  if (v.empty()) return e;
  for (double x : v) e.mean += x;
  e.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

struct EquilibriumSettings {
  double burnin = 0.0;   // 0: 20 relaxation times, 20/min(1, gamma_min, alpha)
  double horizon = 0.0;  // 0: 50 x burnin
  std::size_t replicas = 32;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double pre_jump_cap = kInf;  // truncated dominating fast process
  std::vector<Integrand> extra;
};

// Functionals of Pi_w, per channel a in {p, d}:
//   n0 = E[n_{a,0}(Z)], n1 = lambda E[n_{a,1}(Z)], n2 = E[beta(X) n_{a,2}(Z)],
//   psi = n0 + n1 + n2.
struct EquilibriumEstimate {
  double w = 0.0;
  std::array<Estimate, 2> n0{}, n1{}, n2{}, psi{};
  Estimate ex, ex2;
  std::vector<Estimate> ez, exz;
  std::vector<Estimate> extra;
  double burnin = 0.0;
  double horizon = 0.0;
  std::size_t replicas = 0;
};

inline double default_burnin(const ModelSpec& m) {
  double r = std::min(1.0, m.alpha);
  for (double g : m.gamma) r = std::min(r, g);
  return 20.0 / r;
}

inline SimOptions fast_options(double horizon, double pre_jump_cap = kInf) {
  SimOptions o;
  o.epsilon = 1.0;
  o.horizon = horizon;
  o.freeze_w = true;
  o.track_slow = false;
  o.pre_jump_cap = pre_jump_cap;
  return o;
}

// The fast pair (X, Z) with W frozen at w, at the unscaled clock.
inline Trajectory simulate_fast(double w, const ValidatedModel& model, double horizon, std::uint64_t seed,
                                std::uint64_t replica = 0, double pre_jump_cap = kInf) {
  if (!model->KW.contains(w)) throw std::invalid_argument("w outside K_W");
  return simulate(model, initial_state(model.spec(), 0.0, w), fast_options(horizon, pre_jump_cap), seed, replica);
}

// Across-replica means of post-burn-in time averages.
inline EquilibriumEstimate estimate_pi(double w, const ValidatedModel& model, const EquilibriumSettings& set) {
  const ModelSpec& m = model.spec();
  if (!m.KW.contains(w)) throw std::invalid_argument("w outside K_W");
  const double burnin = set.burnin > 0.0 ? set.burnin : default_burnin(m);
  const double horizon = set.horizon > 0.0 ? set.horizon : 50.0 * burnin;
  const std::size_t ell = m.ell();

  std::vector<Integrand> G;
  for (int a = 0; a < 2; ++a) {
    G.push_back(Integrand::of_z(m.n[a][0]));
    G.push_back(Integrand::of_z(m.n[a][1]).scaled(m.lambda));
    G.push_back(Integrand::of_x(m.beta).times(Integrand::of_z(m.n[a][2])));
  }
  const Integrand X = Integrand::of_x(FunctionSpec::affine(0.0, 1.0));
  G.push_back(X);
  G.push_back(X.times(X));
  for (std::size_t i = 0; i < ell; ++i) G.push_back(Integrand::of_z(coordinate(i, ell)));
  for (std::size_t i = 0; i < ell; ++i) G.push_back(X.times(Integrand::of_z(coordinate(i, ell))));
  const std::size_t n_base = G.size();
  G.insert(G.end(), set.extra.begin(), set.extra.end());

  const double t0 = burnin, t1 = burnin + horizon;
  auto run = [&](std::size_t r) {
    std::vector<double> acc(G.size(), 0.0);
    SimOptions o = fast_options(t1, set.pre_jump_cap);
    o.record_events = false;
    o.observer = [&](const SystemState& s, double dt) {
      const double lo = std::max(s.t, t0), hi = std::min(s.t + dt, t1);
      if (hi <= lo) return;
      SystemState from = s;
      if (lo > s.t) {
        FlowOptions f;
        f.slow = false;
        flow_in_place(from, lo - s.t, m, 1.0, f);
      }
      for (std::size_t k = 0; k < G.size(); ++k) acc[k] += segment_integral(G[k], from, hi - lo, m, 1.0);
    };
    simulate(model, initial_state(m, 0.0, w), o, set.seed, r);
    for (double& v : acc) v /= horizon;
    return acc;
  };
  const auto per = parallel_map(set.replicas, set.threads, run);

  auto column = [&](std::size_t k) {
    std::vector<double> v(per.size());
    for (std::size_t r = 0; r < per.size(); ++r) v[r] = per[r][k];
    return mean_se(v);
  };
  EquilibriumEstimate e;
  e.w = w;
  e.burnin = burnin;
  e.horizon = horizon;
  e.replicas = set.replicas;
  for (int a = 0; a < 2; ++a) {
    e.n0[a] = column(3 * a);
    e.n1[a] = column(3 * a + 1);
    e.n2[a] = column(3 * a + 2);
    std::vector<double> s(per.size());
    for (std::size_t r = 0; r < per.size(); ++r) s[r] = per[r][3 * a] + per[r][3 * a + 1] + per[r][3 * a + 2];
    e.psi[a] = mean_se(s);
  }
  e.ex = column(6);
  e.ex2 = column(7);
  for (std::size_t i = 0; i < ell; ++i) e.ez.push_back(column(8 + i));
  for (std::size_t i = 0; i < ell; ++i) e.exz.push_back(column(8 + ell + i));
  for (std::size_t k = n_base; k < G.size(); ++k) e.extra.push_back(column(k));
  return e;
}

// ---------------------------------------------------------------------------
// Closed forms

struct DominatingMoments {
  double ex = 0.0, ex2 = 0.0, ez = 0.0, exz = 0.0;
};

// Stationary moments of the dominating fast pair, from the generator applied
// to x, x^2, z and x*z.
inline DominatingMoments dominating_moments(double w, double lambda, double C_k, double C_beta, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  DominatingMoments m;
  m.ex = lambda * w;
  m.ex2 = (lambda * lambda + lambda / 2.0) * w * w;
  m.ez = C_k * (1.0 + lambda + C_beta * (1.0 + lambda * w)) / gamma;
  m.exz = (lambda * w * m.ez + C_k * (lambda * w + (1.0 + lambda + C_beta) * m.ex + C_beta * m.ex2)) / (gamma + 1.0);
  return m;
}

// C_n int (1 + ell z)(1 + lambda + C_beta(1 + x)) dPi_w for the dominating pair.
inline double dominating_psi(double w, const DominatingConstants& c) {
  const DominatingMoments m = dominating_moments(w, c.lambda, c.C_k, c.C_beta, c.gamma);
  return c.C_n * ((1.0 + c.lambda + c.C_beta) * (1.0 + c.ell * m.ez) + c.C_beta * (m.ex + c.ell * m.exz));
}

struct LinearLimitCoefficients {
  double L2 = 0.0, L1 = 0.0, L0 = 0.0;

  double delta() const { return L1 * L1 - 4.0 * L2 * L0; }
  double s1() const { return (L1 - std::sqrt(delta())) / (2.0 * L2); }
  double s2() const { return (L1 + std::sqrt(delta())) / (2.0 * L2); }
  double z0(double w0) const { return (2.0 * w0 * L2 + L1) / std::sqrt(-delta()); }
  double operator()(double w) const { return (L2 * w + L1) * w + L0; }
};

inline LinearLimitCoefficients simple_model_coefficients(double lambda, double beta0, double nu, double B1, double B2,
                                                         double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (lambda < 0 || beta0 < 0 || nu < 0 || B1 < 0 || B2 < 0)
    throw std::invalid_argument("simple-model parameters must be non-negative");
  LinearLimitCoefficients c;
  c.L2 = lambda * beta0 * beta0 * B2 * (lambda / gamma + 1.0 / (2.0 * (gamma + 1.0)));
  c.L1 = lambda * beta0 * (B1 / (gamma + 1.0) + (lambda * B1 + 2.0 * nu * B2) / gamma);
  c.L0 = nu / gamma * (lambda * B1 + nu * B2);
  return c;
}

inline LinearLimitCoefficients simple_model_coefficients(const SimpleParams& p) {
  return simple_model_coefficients(p.lambda, p.beta0, p.nu, p.B1, p.B2, p.gamma);
}

}  // namespace stdpavg
