#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "equilibrium.hpp"
#include "limit_ode.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulator.hpp"

namespace stdpavg {

// Integer-valued plasticity model. X, Z and W count quanta; each quantum of
// X leaves at rate 1 and fires a post-spike at rate beta, each quantum of Z_i
// leaves at rate gamma, each quantum of W at rate delta. The n functions see
// Z as a real vector and must be bounded by C_n.
struct DiscreteParams {
  std::string name = "discrete";
  double lambda = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 0.0;
  double alpha = 1.0;
  std::vector<std::int64_t> B1{1};
  std::vector<std::int64_t> B2{1};
  std::int64_t A_p = 1;
  std::int64_t A_d = 1;
  FunctionSpec n[2][3];
  double C_n = 1.0;

  std::size_t ell() const { return B1.size(); }
};

struct DiscreteState {
  double t = 0.0;
  std::int64_t x = 0;
  std::vector<std::int64_t> z;
  double omega_p = 0.0;
  double omega_d = 0.0;
  std::int64_t w = 0;

  double omega(int a) const { return a == kPot ? omega_p : omega_d; }
  double& omega(int a) { return a == kPot ? omega_p : omega_d; }
};

inline DiscreteState discrete_initial(const DiscreteParams& p, std::int64_t x = 0, std::int64_t w = 0) {
  DiscreteState s;
  s.x = x;
  s.w = w;
  s.z.assign(p.ell(), 0);
  return s;
}

inline ValidationReport validate_discrete(const DiscreteParams& p) {
  ValidationReport rep;
  rep.grid = "z on rays s*e_i and s*1 for integer s in [0, 10000], plus s = 1e12";
  auto add = [&](std::string what, std::string fn, bool ok, std::string probe = {}) {
    Check c;
    c.assumption = std::move(what);
    c.function = std::move(fn);
    c.passed = ok;
    c.method = "direct";
    if (!ok) c.probe = std::move(probe);
    rep.checks.push_back(std::move(c));
  };
  add("lambda must be non-negative", "lambda", p.lambda >= 0.0);
  add("beta must be non-negative", "beta", p.beta >= 0.0);
  add("gamma must be non-negative", "gamma", p.gamma >= 0.0);
  add("delta must be non-negative", "delta", p.delta >= 0.0);
  add("alpha must be positive", "alpha", p.alpha > 0.0);
  add("ell must be positive", "B1", p.ell() > 0);
  add("B1 and B2 must have the same dimension", "B2", p.B1.size() == p.B2.size());
  bool nonneg = p.A_p >= 0 && p.A_d >= 0;
  for (auto b : p.B1) nonneg = nonneg && b >= 0;
  for (auto b : p.B2) nonneg = nonneg && b >= 0;
  add("B1, B2, A_p, A_d must be non-negative integers", "B/A", nonneg);
  add("C_n must be non-negative", "C_n", p.C_n >= 0.0);
  if (p.ell() == 0 || p.B1.size() != p.B2.size()) return rep;

  const std::size_t ell = p.ell();
  std::vector<std::vector<double>> dirs;
  for (std::size_t i = 0; i < ell; ++i) {
    std::vector<double> e(ell, 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  if (ell > 1) dirs.emplace_back(ell, 1.0);
  std::vector<double> scales;
  for (int s = 0; s <= 10000; ++s) scales.push_back(s);
  scales.push_back(1e12);
  static const char* names[2][3] = {{"n_p0", "n_p1", "n_p2"}, {"n_d0", "n_d1", "n_d2"}};
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 3; ++j) {
      const FunctionSpec& f = p.n[a][j];
      bool ok = true;
      std::string where;
      try {
        for (const auto& d : dirs) {
          for (double s : scales) {
            std::vector<double> z(ell);
            for (std::size_t i = 0; i < ell; ++i) z[i] = s * d[i];
            const double v = f(std::span<const double>(z));
            if (!(v >= 0.0 && v <= p.C_n)) {
              ok = false;
              where = "z=" + detail::fmt_point(s) + "*dir, value " + detail::fmt_point(v);
              break;
            }
          }
          if (!ok) break;
        }
      } catch (const std::invalid_argument& e) {
        ok = false;
        where = e.what();
      }
      add("0 <= n(z) <= C_n", names[a][j], ok, where);
    }
  return rep;
}

inline void require_valid(const DiscreteParams& p) {
  const auto rep = validate_discrete(p);
  if (!rep.ok()) throw ValidationError(rep);
}

struct DiscreteEvent {
  double t;
  EventKind kind;
  std::int64_t x;
  std::vector<std::int64_t> z;
  double omega_p, omega_d;
  std::int64_t w;
  std::int64_t w_before;
};

struct DiscreteOptions {
  double epsilon = 1.0;
  double horizon = 1.0;
  std::size_t event_budget = 10'000'000;
  bool freeze_w = false;
  bool record_events = true;
  std::vector<double> sample_times;
};

struct DiscreteTrajectory {
  DiscreteParams params;
  std::uint64_t seed = 0, replica = 0;
  double epsilon = 1.0, horizon = 0.0;
  DiscreteState initial, final_state;
  std::vector<DiscreteEvent> events;
  std::vector<DiscreteState> samples;
  std::size_t event_count = 0;
  bool truncated = false;
};

namespace detail {

inline double n_of(const FunctionSpec& f, const std::vector<std::int64_t>& z) {
  std::vector<double> v(z.begin(), z.end());
  return f(std::span<const double>(v));
}

inline std::int64_t z_total(const std::vector<std::int64_t>& z) {
  return std::accumulate(z.begin(), z.end(), std::int64_t{0});
}

// Omega_a flows towards n_{a,0}(Z)/alpha with Z frozen.
inline double omega_flow(double omega, double inflow, double alpha, double dt) {
  const double target = inflow / alpha;
  return target + (omega - target) * std::exp(-alpha * dt);
}

inline void check_nonnegative(const DiscreteState& s) {
  bool ok = s.x >= 0 && s.w >= 0;
  for (auto v : s.z) ok = ok && v >= 0;
  if (!ok) throw std::logic_error("discrete state went negative at t=" + std::to_string(s.t));
}

inline void flow_discrete(DiscreteState& s, const DiscreteParams& p, double dt) {
  for (int a = 0; a < 2; ++a) s.omega(a) = omega_flow(s.omega(a), n_of(p.n[a][0], s.z), p.alpha, dt);
  s.t += dt;
}

inline void pre_spike(DiscreteState& s, const DiscreteParams& p, double eps) {
  for (int a = 0; a < 2; ++a) s.omega(a) += eps * n_of(p.n[a][1], s.z);
  s.x += s.w;
  for (std::size_t i = 0; i < s.z.size(); ++i) s.z[i] += p.B1[i];
}

inline void post_spike(DiscreteState& s, const DiscreteParams& p, double eps) {
  for (int a = 0; a < 2; ++a) s.omega(a) += eps * n_of(p.n[a][2], s.z);
  s.x -= 1;
  for (std::size_t i = 0; i < s.z.size(); ++i) s.z[i] += p.B2[i];
}

// Picks the component whose quantum index `k` (0-based over all of Z) falls in.
inline std::size_t z_component(const std::vector<std::int64_t>& z, std::int64_t k) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (k < z[i]) return i;
    k -= z[i];
  }
  return z.size() - 1;
}

inline std::int64_t uniform_index(Rng& rng, std::int64_t n) {
  const auto k = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(n));
  return std::min(k, n - 1);
}

}  // namespace detail

// Rates of the fast transitions at a frozen state, on the eps clock.
struct DiscreteRates {
  double x_leak, pre, post, z_leak, w_leak, w_pot, w_dep;
  double total() const { return x_leak + pre + post + z_leak + w_leak + w_pot + w_dep; }
};

inline DiscreteRates discrete_rates(const DiscreteState& s, const DiscreteParams& p, double eps, bool freeze_w = false) {
  DiscreteRates r{};
  r.x_leak = static_cast<double>(s.x) / eps;
  r.pre = p.lambda / eps;
  r.post = p.beta * static_cast<double>(s.x) / eps;
  r.z_leak = p.gamma * static_cast<double>(detail::z_total(s.z)) / eps;
  if (!freeze_w) {
    r.w_leak = p.delta * static_cast<double>(s.w);
    r.w_pot = s.omega_p;
    r.w_dep = s.w >= p.A_d ? s.omega_d : 0.0;
  }
  return r;
}

struct NextEvent {
  double dt;
  EventKind kind;
};

// One Gillespie step with every rate frozen at the current state.
inline NextEvent sample_next_event(const DiscreteState& s, const DiscreteParams& p, double eps, Rng& rng,
                                   bool freeze_w = false) {
  const DiscreteRates r = discrete_rates(s, p, eps, freeze_w);
  const double R = r.total();
  NextEvent e{rng.exponential(R), EventKind::pre_spike};
  double u = rng.uniform() * R;
  const std::array<std::pair<double, EventKind>, 7> table{{{r.x_leak, EventKind::x_leak},
                                                           {r.pre, EventKind::pre_spike},
                                                           {r.post, EventKind::post_spike},
                                                           {r.z_leak, EventKind::z_leak},
                                                           {r.w_leak, EventKind::w_leak},
                                                           {r.w_pot, EventKind::w_potentiation},
                                                           {r.w_dep, EventKind::w_depression}}};
  for (const auto& [rate, kind] : table) {
    if (u < rate) {
      e.kind = kind;
      return e;
    }
    u -= rate;
  }
  return e;
}

// Observer for exact time integrals: the state is constant on [s.t, s.t+dt)
// except Omega, which flows.
using DiscreteObserver = std::function<void(const DiscreteState&, double)>;

// Exact hybrid simulation. Fast transitions and the W leak have rates that
// are constant between events and are drawn by Gillespie; the W jumps driven
// by Omega are thinned against max(Omega_a, n_{a,0}(Z)/alpha), which bounds
// Omega_a until the next event.
inline DiscreteTrajectory simulate_discrete(const DiscreteParams& p, const DiscreteState& u0, const DiscreteOptions& opt,
                                            std::uint64_t seed, std::uint64_t replica = 0,
                                            const DiscreteObserver& observer = {}) {
  if (!(opt.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (u0.z.size() != p.ell()) throw std::invalid_argument("initial z has wrong dimension");
  DiscreteTrajectory tr;
  tr.params = p;
  tr.seed = seed;
  tr.replica = replica;
  tr.epsilon = opt.epsilon;
  tr.horizon = opt.horizon;
  tr.initial = u0;
  Rng fast(seed, replica, Stream::discrete_fast);
  Rng slow(seed, replica, Stream::discrete_weight);
  DiscreteState s = u0;
  detail::check_nonnegative(s);
  std::size_t next_sample = 0;
  const double eps = opt.epsilon;

  auto advance = [&](double dt) {
    const double end = s.t + dt;
    while (next_sample < opt.sample_times.size() && opt.sample_times[next_sample] <= end) {
      DiscreteState q = s;
      detail::flow_discrete(q, p, opt.sample_times[next_sample] - s.t);
      q.t = opt.sample_times[next_sample];
      tr.samples.push_back(std::move(q));
      ++next_sample;
    }
    if (observer) observer(s, dt);
    detail::flow_discrete(s, p, dt);
    s.t = end;
  };
  auto record = [&](EventKind k, std::int64_t w_before) {
    ++tr.event_count;
    if (opt.record_events) tr.events.push_back({s.t, k, s.x, s.z, s.omega_p, s.omega_d, s.w, w_before});
  };

  while (true) {
    DiscreteRates r = discrete_rates(s, p, eps, true);
    const double w_leak = opt.freeze_w ? 0.0 : p.delta * static_cast<double>(s.w);
    const double R = r.x_leak + r.pre + r.post + r.z_leak + w_leak;
    double env_p = 0.0, env_d = 0.0;
    if (!opt.freeze_w) {
      env_p = std::max(s.omega_p, detail::n_of(p.n[kPot][0], s.z) / p.alpha);
      env_d = s.w >= p.A_d ? std::max(s.omega_d, detail::n_of(p.n[kDep][0], s.z) / p.alpha) : 0.0;
    }
    const double E = env_p + env_d;
    const double t1 = fast.exponential(R);
    const double t2 = slow.exponential(E);
    const double dt = std::min(t1, t2);
    if (s.t + dt > opt.horizon || !std::isfinite(dt)) {
      advance(opt.horizon - s.t);
      break;
    }
    if (tr.event_count >= opt.event_budget) {
      tr.truncated = true;
      break;
    }
    advance(dt);
    const std::int64_t w_before = s.w;
    if (t1 <= t2) {
      double u = fast.uniform() * R;
      if (u < r.x_leak) {
        s.x -= 1;
        record(EventKind::x_leak, w_before);
      } else if ((u -= r.x_leak) < r.pre) {
        detail::pre_spike(s, p, eps);
        record(EventKind::pre_spike, w_before);
      } else if ((u -= r.pre) < r.post) {
        detail::post_spike(s, p, eps);
        record(EventKind::post_spike, w_before);
      } else if ((u -= r.post) < r.z_leak) {
        const auto k = detail::uniform_index(fast, detail::z_total(s.z));
        s.z[detail::z_component(s.z, k)] -= 1;
        record(EventKind::z_leak, w_before);
      } else {
        s.w -= 1;
        record(EventKind::w_leak, w_before);
      }
    } else {
      const double u = slow.uniform() * E;
      if (s.omega_p > env_p * (1.0 + 1e-12) || (env_d > 0.0 && s.omega_d > env_d * (1.0 + 1e-12)))
        throw EnvelopeViolation("Omega above its envelope");
      if (u <= s.omega_p) {
        s.w += p.A_p;
        record(EventKind::w_potentiation, w_before);
      } else if (s.w >= p.A_d && u > env_p && u <= env_p + s.omega_d) {
        s.w -= p.A_d;
        record(EventKind::w_depression, w_before);
      }
    }
    detail::check_nonnegative(s);
  }
  while (next_sample < opt.sample_times.size() && opt.sample_times[next_sample] <= s.t) {
    DiscreteState q = s;
    q.t = opt.sample_times[next_sample++];
    tr.samples.push_back(q);
  }
  tr.final_state = s;
  return tr;
}

// The fast chain with W frozen at w, at the unscaled clock.
inline DiscreteTrajectory simulate_discrete_fast(std::int64_t w, const DiscreteParams& p, double horizon,
                                                 std::uint64_t seed, std::uint64_t replica = 0,
                                                 std::int64_t x0 = 0, const DiscreteObserver& observer = {},
                                                 bool record_events = true) {
  if (w < 0) throw std::invalid_argument("w must be a non-negative integer");
  DiscreteOptions o;
  o.epsilon = 1.0;
  o.horizon = horizon;
  o.freeze_w = true;
  o.record_events = record_events;
  return simulate_discrete(p, discrete_initial(p, x0, w), o, seed, replica, observer);
}

// Functionals of the discrete Pi_w: psi_a = E[n_{a,0}(Z) + lambda n_{a,1}(Z) + beta X n_{a,2}(Z)].
struct DiscretePiEstimate {
  std::int64_t w = 0;
  std::array<Estimate, 2> psi{};
  Estimate ex;
  std::vector<Estimate> ez;
  double burnin = 0.0, horizon = 0.0;
  std::size_t replicas = 0;
};

inline DiscretePiEstimate estimate_discrete_pi(std::int64_t w, const DiscreteParams& p, const EquilibriumSettings& set) {
  const double relax = std::min({1.0, p.gamma > 0.0 ? p.gamma : 1.0});
  const double burnin = set.burnin > 0.0 ? set.burnin : 20.0 / relax;
  const double horizon = set.horizon > 0.0 ? set.horizon : 50.0 * burnin;
  const std::size_t ell = p.ell();
  const double t0 = burnin, t1 = burnin + horizon;
  auto run = [&](std::size_t r) {
    std::vector<double> acc(3 + ell, 0.0);
    auto obs = [&](const DiscreteState& s, double dt) {
      const double lo = std::max(s.t, t0), hi = std::min(s.t + dt, t1);
      if (hi <= lo) return;
      const double len = hi - lo;
      const double x = static_cast<double>(s.x);
      for (int a = 0; a < 2; ++a)
        acc[a] += len * (detail::n_of(p.n[a][0], s.z) + p.lambda * detail::n_of(p.n[a][1], s.z) +
                         p.beta * x * detail::n_of(p.n[a][2], s.z));
      acc[2] += len * x;
      for (std::size_t i = 0; i < ell; ++i) acc[3 + i] += len * static_cast<double>(s.z[i]);
    };
    simulate_discrete_fast(w, p, t1, set.seed, r, 0, obs, false);
    for (double& v : acc) v /= horizon;
    return acc;
  };
  const auto per = parallel_map(set.replicas, set.threads, run);
  auto column = [&](std::size_t k) {
    std::vector<double> v(per.size());
    for (std::size_t r = 0; r < per.size(); ++r) v[r] = per[r][k];
    return mean_se(v);
  };
  DiscretePiEstimate e;
  e.w = w;
  e.burnin = burnin;
  e.horizon = horizon;
  e.replicas = set.replicas;
  e.psi[0] = column(0);
  e.psi[1] = column(1);
  e.ex = column(2);
  for (std::size_t i = 0; i < ell; ++i) e.ez.push_back(column(3 + i));
  return e;
}

// ---------------------------------------------------------------------------
// Dominating discrete process, coupled through shared clocks

struct DominatingDiscreteState {
  double t = 0.0;
  std::int64_t x = 0;
  std::vector<std::int64_t> z;
  double omega = 0.0;
  std::int64_t w = 0;
};

struct DiscreteCoupledPair {
  DiscreteTrajectory original;
  std::vector<DominatingDiscreteState> dominating_samples;
  std::vector<DiscreteState> original_samples;
  DominatingDiscreteState dominating_final;
  std::size_t checks = 0;
  std::size_t violations = 0;
  bool ordered() const { return violations == 0; }
};

inline bool discrete_ordered(const DiscreteState& s, const DominatingDiscreteState& d) {
  bool ok = s.x <= d.x && s.w <= d.w;
  for (std::size_t i = 0; i < s.z.size(); ++i) ok = ok && s.z[i] <= d.z[i];
  const double tol = 1e-12 * (1.0 + d.omega);
  return ok && s.omega_p <= d.omega + tol && s.omega_d <= d.omega + tol;
}

// Quantum i of X (resp. Z_k) carries the same leak and firing clocks in both
// systems; the original uses the clocks of its first X quanta, so its
// transitions are a subset of the dominating ones. W jumps share candidates
// thinned against a common envelope.
inline DiscreteCoupledPair simulate_discrete_coupled(const DiscreteParams& p, const DiscreteState& u0,
                                                     const DiscreteOptions& opt, std::uint64_t seed,
                                                     std::uint64_t replica = 0) {
  if (u0.z.size() != p.ell()) throw std::invalid_argument("initial z has wrong dimension");
  DiscreteCoupledPair out;
  DiscreteTrajectory& tr = out.original;
  tr.params = p;
  tr.seed = seed;
  tr.replica = replica;
  tr.epsilon = opt.epsilon;
  tr.horizon = opt.horizon;
  tr.initial = u0;
  Rng fast(seed, replica, Stream::discrete_fast);
  Rng slow(seed, replica, Stream::discrete_weight);
  const double eps = opt.epsilon;
  DiscreteState s = u0;
  DominatingDiscreteState d;
  d.x = s.x;
  d.z = s.z;
  d.omega = std::max(s.omega_p, s.omega_d);
  d.w = s.w;
  std::size_t next_sample = 0;

  auto audit = [&] {
    ++out.checks;
    if (!discrete_ordered(s, d)) ++out.violations;
  };
  auto flow_both = [&](double dt) {
    detail::flow_discrete(s, p, dt);
    d.omega = detail::omega_flow(d.omega, p.C_n, p.alpha, dt);
    d.t = s.t;
  };
  auto advance = [&](double dt) {
    const double end = s.t + dt;
    while (next_sample < opt.sample_times.size() && opt.sample_times[next_sample] <= end) {
      const double ts = opt.sample_times[next_sample++];
      DiscreteState q = s;
      detail::flow_discrete(q, p, ts - s.t);
      DominatingDiscreteState e = d;
      e.omega = detail::omega_flow(d.omega, p.C_n, p.alpha, ts - s.t);
      q.t = e.t = ts;
      ++out.checks;
      if (!discrete_ordered(q, e)) ++out.violations;
      out.original_samples.push_back(std::move(q));
      out.dominating_samples.push_back(std::move(e));
    }
    flow_both(dt);
    s.t = d.t = end;
  };

  audit();
  while (true) {
    const double xr = (1.0 + p.beta) * static_cast<double>(d.x) / eps;
    const double pre = p.lambda / eps;
    const double zr = p.gamma * static_cast<double>(detail::z_total(d.z)) / eps;
    const double wl = p.delta * static_cast<double>(s.w);
    const double R = xr + pre + zr + wl;
    const double env_p = std::max(s.omega_p, detail::n_of(p.n[kPot][0], s.z) / p.alpha);
    const double env_d = s.w >= p.A_d ? std::max(s.omega_d, detail::n_of(p.n[kDep][0], s.z) / p.alpha) : 0.0;
    const double env_bar = std::max(d.omega, p.C_n / p.alpha);
    const double E = std::max(env_p + env_d, env_bar);
    const double t1 = fast.exponential(R);
    const double t2 = slow.exponential(E);
    const double dt = std::min(t1, t2);
    if (s.t + dt > opt.horizon || !std::isfinite(dt)) {
      advance(opt.horizon - s.t);
      break;
    }
    if (tr.event_count >= opt.event_budget) {
      tr.truncated = true;
      break;
    }
    advance(dt);
    const std::int64_t w_before = s.w;
    std::optional<EventKind> kind;
    if (t1 <= t2) {
      double u = fast.uniform() * R;
      if (u < xr) {
        // quantum index i of X-bar, leak or firing
        const auto i = detail::uniform_index(fast, d.x);
        const bool fire = fast.uniform() * (1.0 + p.beta) >= 1.0;
        const bool shared = i < s.x;
        if (fire) {
          d.omega += eps * p.C_n;
          d.x -= 1;
          for (std::size_t k = 0; k < d.z.size(); ++k) d.z[k] += p.B2[k];
          if (shared) {
            detail::post_spike(s, p, eps);
            kind = EventKind::post_spike;
          }
        } else {
          d.x -= 1;
          if (shared) {
            s.x -= 1;
            kind = EventKind::x_leak;
          }
        }
      } else if ((u -= xr) < pre) {
        d.omega += eps * p.C_n;
        d.x += d.w;
        for (std::size_t k = 0; k < d.z.size(); ++k) d.z[k] += p.B1[k];
        detail::pre_spike(s, p, eps);
        kind = EventKind::pre_spike;
      } else if ((u -= pre) < zr) {
        const auto q = detail::uniform_index(fast, detail::z_total(d.z));
        const std::size_t k = detail::z_component(d.z, q);
        std::int64_t offset = q;
        for (std::size_t j = 0; j < k; ++j) offset -= d.z[j];
        d.z[k] -= 1;
        if (offset < s.z[k]) {
          s.z[k] -= 1;
          kind = EventKind::z_leak;
        }
      } else {
        s.w -= 1;
        kind = EventKind::w_leak;
      }
    } else {
      const double u = slow.uniform() * E;
      if (u <= d.omega) d.w += p.A_p;
      if (u <= s.omega_p) {
        s.w += p.A_p;
        kind = EventKind::w_potentiation;
      } else if (s.w >= p.A_d && u > env_p && u <= env_p + s.omega_d) {
        s.w -= p.A_d;
        kind = EventKind::w_depression;
      }
    }
    if (kind) {
      ++tr.event_count;
      if (opt.record_events) tr.events.push_back({s.t, *kind, s.x, s.z, s.omega_p, s.omega_d, s.w, w_before});
    }
    detail::check_nonnegative(s);
    audit();
  }
  tr.final_state = s;
  out.dominating_final = d;
  return out;
}

// ---------------------------------------------------------------------------
// Limit process: integer w jumps at rates delta*w (leak), omega_p (+A_p) and
// omega_d 1{w >= A_d} (-A_d); omega_a' = -alpha omega_a + Psi_a(w).

class PsiCacheExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Psi_a(w) estimates keyed by w. Each entry is drawn from a generator seeded by
// (seed, w), so values do not depend on the order in which w are visited.
class DiscretePsiCache {
 public:
  DiscretePsiCache(DiscreteParams p, EquilibriumSettings set, std::size_t cap = 256)
      : p_(std::move(p)), set_(std::move(set)), cap_(cap) {}

  const std::array<double, 2>& get(std::int64_t w) {
    auto it = values_.find(w);
    if (it != values_.end()) return it->second;
    if (values_.size() >= cap_)
      throw PsiCacheExhausted("Psi cache cap of " + std::to_string(cap_) + " distinct w values reached at w=" +
                              std::to_string(w));
    EquilibriumSettings s = set_;
    std::uint64_t key = set_.seed ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(w + 1));
    s.seed = splitmix64(key);
    const auto e = estimate_discrete_pi(w, p_, s);
    return values_.emplace(w, std::array<double, 2>{e.psi[0].mean, e.psi[1].mean}).first->second;
  }
  std::size_t size() const { return values_.size(); }
  const std::map<std::int64_t, std::array<double, 2>>& values() const { return values_; }

 private:
  DiscreteParams p_;
  EquilibriumSettings set_;
  std::size_t cap_;
  std::map<std::int64_t, std::array<double, 2>> values_;
};

struct DiscreteLimitState {
  double t = 0.0;
  double omega_p = 0.0, omega_d = 0.0;
  std::int64_t w = 0;
};

struct DiscreteLimitEvent {
  double t;
  EventKind kind;
  std::int64_t w_before, w_after;
};

struct DiscreteLimitPath {
  DiscreteLimitState initial, final_state;
  std::vector<DiscreteLimitEvent> events;
  std::vector<DiscreteLimitState> samples;
};

inline DiscreteLimitPath simulate_discrete_limit(const DiscreteParams& p, const DiscreteLimitState& init, double horizon,
                                                 DiscretePsiCache& cache, std::uint64_t seed,
                                                 std::uint64_t replica = 0,
                                                 const std::vector<double>& sample_times = {}) {
  DiscreteLimitPath path;
  path.initial = init;
  Rng rng(seed, replica, Stream::discrete_weight);
  DiscreteLimitState s = init;
  std::size_t next_sample = 0;
  auto flow = [&](DiscreteLimitState& q, double dt) {
    const auto& psi = cache.get(q.w);
    q.omega_p = detail::omega_flow(q.omega_p, psi[0], p.alpha, dt);
    q.omega_d = detail::omega_flow(q.omega_d, psi[1], p.alpha, dt);
    q.t += dt;
  };
  while (true) {
    const auto psi = cache.get(s.w);
    const double leak = p.delta * static_cast<double>(s.w);
    const double env_p = std::max(s.omega_p, psi[0] / p.alpha);
    const double env_d = s.w >= p.A_d ? std::max(s.omega_d, psi[1] / p.alpha) : 0.0;
    const double E = leak + env_p + env_d;
    const double dt = rng.exponential(E);
    const double end = std::min(s.t + dt, horizon);
    while (next_sample < sample_times.size() && sample_times[next_sample] <= end) {
      DiscreteLimitState q = s;
      flow(q, sample_times[next_sample] - s.t);
      q.t = sample_times[next_sample++];
      path.samples.push_back(q);
    }
    if (s.t + dt > horizon || !std::isfinite(dt)) {
      flow(s, horizon - s.t);
      s.t = horizon;
      break;
    }
    flow(s, dt);
    const double u = rng.uniform() * E;
    const std::int64_t before = s.w;
    if (u < leak) {
      s.w -= 1;
      path.events.push_back({s.t, EventKind::w_leak, before, s.w});
    } else if (u - leak <= s.omega_p) {
      s.w += p.A_p;
      path.events.push_back({s.t, EventKind::w_potentiation, before, s.w});
    } else if (s.w >= p.A_d && u - leak > env_p && u - leak - env_p <= s.omega_d) {
      s.w -= p.A_d;
      path.events.push_back({s.t, EventKind::w_depression, before, s.w});
    }
  }
  path.final_state = s;
  return path;
}

// Mean path of W_eps against the mean path of the limit process, both on a
// common grid. The limit's mean is itself a Monte-Carlo estimate.
struct DiscreteSweepSettings {
  std::vector<double> epsilons{0.1, 0.03, 0.01};
  double horizon = 1.0;
  std::size_t replicas = 64;
  std::size_t limit_replicas = 256;
  std::size_t grid_points = 21;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  EquilibriumSettings pi;
  std::size_t cache_cap = 256;
};

inline SweepReport discrete_convergence_sweep(const DiscreteParams& p, const DiscreteState& u0,
                                              const DiscreteSweepSettings& set) {
  SweepReport rep;
  rep.limit_source = "discrete-limit-monte-carlo";
  std::vector<double> grid(set.grid_points);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = set.horizon * static_cast<double>(k) / static_cast<double>(grid.size() - 1);

  EquilibriumSettings pi = set.pi;
  pi.seed = set.seed;
  pi.threads = set.threads;
  DiscretePsiCache cache(p, pi, set.cache_cap);
  std::vector<double> limit(grid.size(), 0.0);
  const DiscreteLimitState init{0.0, u0.omega_p, u0.omega_d, u0.w};
  for (std::size_t r = 0; r < set.limit_replicas; ++r) {
    const auto path = simulate_discrete_limit(p, init, set.horizon, cache, set.seed, r, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
      limit[k] += static_cast<double>(path.samples[k].w) / static_cast<double>(set.limit_replicas);
  }

  for (std::size_t ie = 0; ie < set.epsilons.size(); ++ie) {
    DiscreteOptions o;
    o.epsilon = set.epsilons[ie];
    o.horizon = set.horizon;
    o.record_events = false;
    o.sample_times = grid;
    const auto paths = parallel_map(set.replicas, set.threads, [&](std::size_t r) {
      const auto tr = simulate_discrete(p, u0, o, set.seed + 1000003ULL * (ie + 1), r);
      std::vector<double> w;
      for (const auto& q : tr.samples) w.push_back(static_cast<double>(q.w));
      while (w.size() < grid.size()) w.push_back(static_cast<double>(tr.final_state.w));
      return std::make_pair(w, tr.truncated);
    });
    SweepSummary sum{o.epsilon, 0.0, 0.0, 0};
    std::vector<double> path_sup(paths.size(), 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      double mean = 0.0, ss = 0.0;
      for (const auto& pth : paths) mean += pth.first[k];
      mean /= static_cast<double>(paths.size());
      for (const auto& pth : paths) ss += (pth.first[k] - mean) * (pth.first[k] - mean);
      const double sd = paths.size() > 1 ? std::sqrt(ss / static_cast<double>(paths.size() - 1)) : 0.0;
      const double err = std::abs(mean - limit[k]);
      rep.rows.push_back({o.epsilon, grid[k], mean, sd, limit[k], err});
      sum.sup_error = std::max(sum.sup_error, err);
      for (std::size_t r = 0; r < paths.size(); ++r)
        path_sup[r] = std::max(path_sup[r], std::abs(paths[r].first[k] - limit[k]));
    }
    for (std::size_t r = 0; r < paths.size(); ++r) {
      sum.mean_path_sup += path_sup[r] / static_cast<double>(paths.size());
      sum.truncated += paths[r].second ? 1 : 0;
    }
    rep.summary.push_back(sum);
  }
  return rep;
}

}  // namespace stdpavg
