#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow.hpp"
#include "model.hpp"
#include "point_process.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace stdpavg {

enum class EventKind : std::uint8_t {
  pre_spike,
  post_spike,
  x_leak,
  z_leak,
  w_leak,
  w_potentiation,
  w_depression,
};

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::pre_spike: return "pre";
    case EventKind::post_spike: return "post";
    case EventKind::x_leak: return "x_leak";
    case EventKind::z_leak: return "z_leak";
    case EventKind::w_leak: return "w_leak";
    case EventKind::w_potentiation: return "w_plus";
    case EventKind::w_depression: return "w_minus";
  }
  return "?";
}

struct EventRecord {
  double t;
  EventKind kind;
  double x;
  double omega_p;
  double omega_d;
  double w;
};

// Start state and flow length of one deterministic segment.
using SegmentObserver = std::function<void(const SystemState&, double)>;

struct SimOptions {
  double epsilon = 1.0;
  double horizon = 1.0;
  std::size_t event_budget = 10'000'000;
  double pre_jump_cap = kInf;  // truncation level K: X jumps by min(K, W)
  bool freeze_w = false;
  bool track_slow = true;
  bool record_events = true;
  std::vector<double> sample_times;  // sorted, within [0, horizon]
  SegmentObserver observer;
};

struct Trajectory {
  std::shared_ptr<const ModelSpec> model;
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  double epsilon = 1.0;
  double horizon = 0.0;
  double pre_jump_cap = kInf;
  FlowOptions flow;
  SystemState initial;
  SystemState final_state;
  std::vector<EventRecord> events;
  std::vector<double> z;  // ell values per event
  std::vector<SystemState> samples;
  std::size_t pre_count = 0;
  std::size_t post_count = 0;
  std::size_t clamp_count = 0;
  bool truncated = false;  // event budget exhausted

  std::size_t ell() const { return initial.z.size(); }

  SystemState state_after(std::size_t i) const {
    const EventRecord& e = events[i];
    SystemState s;
    s.t = e.t;
    s.x = e.x;
    s.omega_p = e.omega_p;
    s.omega_d = e.omega_d;
    s.w = e.w;
    s.z.assign(z.begin() + static_cast<std::ptrdiff_t>(i * ell()),
               z.begin() + static_cast<std::ptrdiff_t>((i + 1) * ell()));
    return s;
  }

  // Dense output: last recorded state at or before t, flowed forward.
  SystemState at(double t) const {
    auto it = std::upper_bound(events.begin(), events.end(), t,
                               [](double v, const EventRecord& e) { return v < e.t; });
    SystemState s = it == events.begin() ? initial : state_after(static_cast<std::size_t>(it - events.begin()) - 1);
    flow_in_place(s, t - s.t, *model, epsilon, flow);
    return s;
  }
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Jump maps. Every increment reads the pre-jump value of Z.

inline void apply_pre_spike(SystemState& s, const ModelSpec& m, double eps, double cap = kInf,
                            bool freeze_w = false) {
  thread_local std::vector<double> z;
  z = s.z;
  const std::span<const double> zs(z);
  s.x += std::min(cap, s.w);
  for (std::size_t i = 0; i < z.size(); ++i) s.z[i] += m.k1[i](zs);
  const double np = m.n[kPot][1](zs), nd = m.n[kDep][1](zs);
  s.omega_p += eps * np;
  s.omega_d += eps * nd;
  if (m.weight_rule == WeightRule::jump && !freeze_w) s.w = m.KW.clamp(s.w + eps * (np - nd));
}

inline void apply_post_spike(SystemState& s, const ModelSpec& m, double eps, bool freeze_w = false) {
  thread_local std::vector<double> z;
  z = s.z;
  const std::span<const double> zs(z);
  s.x -= m.g(s.x);
  for (std::size_t i = 0; i < z.size(); ++i) s.z[i] += m.k2[i](zs);
  const double np = m.n[kPot][2](zs), nd = m.n[kDep][2](zs);
  s.omega_p += eps * np;
  s.omega_d += eps * nd;
  if (m.weight_rule == WeightRule::jump && !freeze_w) s.w = m.KW.clamp(s.w + eps * (np - nd));
}

namespace detail {

// One process under the event loop: committed state plus bookkeeping.
class Engine {
 public:
  Engine(std::shared_ptr<const ModelSpec> m, const SystemState& u0, const SimOptions& o, std::uint64_t seed,
         std::uint64_t replica)
      : m_(std::move(m)), opt_(o) {
    flow_.freeze_w = o.freeze_w;
    flow_.slow = o.track_slow;
    traj_.model = m_;
    traj_.seed = seed;
    traj_.replica = replica;
    traj_.epsilon = o.epsilon;
    traj_.horizon = o.horizon;
    traj_.pre_jump_cap = o.pre_jump_cap;
    traj_.flow = flow_;
    traj_.initial = u0;
    s_ = u0;
    if (o.record_events) traj_.events.reserve(1024);
  }

  const ModelSpec& model() const { return *m_; }
  const SystemState& state() const { return s_; }
  double eps() const { return opt_.epsilon; }

  // C_beta (1 + |X|): bounds beta(X) until the next jump since |X| decays.
  double envelope() const { return m_->bounds.C_beta * (1.0 + std::abs(s_.x)); }
  double x_at(double t) const { return s_.x * std::exp(-(t - s_.t) / opt_.epsilon); }
  double beta_at(double t) const { return m_->beta(x_at(t)); }

  SystemState peek(double t) const {
    SystemState c = s_;
    flow_in_place(c, t - s_.t, *m_, opt_.epsilon, flow_);
    return c;
  }

  void advance(double t) {
    while (next_sample_ < opt_.sample_times.size() && opt_.sample_times[next_sample_] <= t) {
      traj_.samples.push_back(peek(opt_.sample_times[next_sample_]));
      ++next_sample_;
    }
    const double dt = t - s_.t;
    if (dt <= 0.0) return;
    if (opt_.observer) opt_.observer(s_, dt);
    const FlowInfo info = flow_in_place(s_, dt, *m_, opt_.epsilon, flow_);
    s_.t = t;
    if (info.clamped) ++traj_.clamp_count;
  }

  void pre_spike() {
    apply_pre_spike(s_, *m_, opt_.epsilon, opt_.pre_jump_cap, opt_.freeze_w);
    ++traj_.pre_count;
    record(EventKind::pre_spike);
  }
  void post_spike() {
    apply_post_spike(s_, *m_, opt_.epsilon, opt_.freeze_w);
    ++traj_.post_count;
    record(EventKind::post_spike);
  }

  std::size_t events() const { return traj_.pre_count + traj_.post_count; }
  void mark_truncated() { traj_.truncated = true; }

  Trajectory finish() {
    traj_.final_state = s_;
    return std::move(traj_);
  }

 private:
  void record(EventKind k) {
    if (!opt_.record_events) return;
    traj_.events.push_back({s_.t, k, s_.x, s_.omega_p, s_.omega_d, s_.w});
    traj_.z.insert(traj_.z.end(), s_.z.begin(), s_.z.end());
  }

  std::shared_ptr<const ModelSpec> m_;
  SimOptions opt_;
  FlowOptions flow_;
  SystemState s_;
  Trajectory traj_;
  std::size_t next_sample_ = 0;
};

inline void check_options(const SimOptions& o) {
  if (!(o.epsilon > 0.0 && o.epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
  if (!(o.horizon >= 0.0)) throw std::invalid_argument("horizon must be non-negative");
  if (!std::is_sorted(o.sample_times.begin(), o.sample_times.end()))
    throw std::invalid_argument("sample times must be sorted");
}

}  // namespace detail

// Exact event-driven path: pre-synaptic spikes at rate lambda/eps, post-synaptic
// spikes by thinning candidates at C_beta(1+|X(last event)|)/eps against
// beta(X(t-))/eps with uniform marks, exact flows in between.
inline Trajectory simulate(const ValidatedModel& model, const SystemState& u0, const SimOptions& opt,
                           std::uint64_t seed, std::uint64_t replica = 0) {
  detail::check_options(opt);
  const ModelSpec& m = model.spec();
  if (u0.z.size() != m.ell()) throw std::invalid_argument("initial z has the wrong dimension");
  detail::Engine e(model.shared(), u0, opt, seed, replica);
  Rng pre(seed, replica, Stream::pre_spikes);
  Rng post(seed, replica, Stream::post_spikes);
  const double eps = opt.epsilon;
  double next_pre = u0.t + pre.exponential(m.lambda / eps);
  double env = e.envelope();
  double cand = u0.t + post.exponential(env / eps);
  for (;;) {
    if (e.events() >= opt.event_budget) {
      e.mark_truncated();
      break;
    }
    if (std::min(next_pre, cand) > opt.horizon) {
      e.advance(opt.horizon);
      break;
    }
    if (next_pre <= cand) {
      e.advance(next_pre);
      e.pre_spike();
      next_pre += pre.exponential(m.lambda / eps);
    } else {
      const double b = e.beta_at(cand);
      const double u = post.uniform();
      if (b > env * (1.0 + 1e-12))
        throw EnvelopeViolation("beta exceeds C_beta(1+|x|) at t=" + std::to_string(cand));
      if (u * env > b) {
        cand += post.exponential(env / eps);
        continue;
      }
      e.advance(cand);
      e.post_spike();
    }
    env = e.envelope();
    cand = e.state().t + post.exponential(env / eps);
  }
  return e.finish();
}

inline Trajectory simulate_dominating(const DominatingConstants& c, const SystemState& u0, const SimOptions& opt,
                                      std::uint64_t seed, std::uint64_t replica = 0) {
  return simulate(require_valid(dominating_spec(c)), u0, opt, seed, replica);
}

// Dominating system whose pre-synaptic jump of X is min(K, W).
inline Trajectory simulate_truncated(const DominatingConstants& c, double K, const SystemState& u0,
                                     SimOptions opt, std::uint64_t seed, std::uint64_t replica = 0) {
  if (!(K >= 0.0)) throw std::invalid_argument("truncation level must be non-negative");
  opt.pre_jump_cap = K;
  return simulate_dominating(c, u0, opt, seed, replica);
}

// ---------------------------------------------------------------------------
// Coupling with the dominating process

struct OrderCheck {
  double t;
  bool at_event;
  bool ok;
  std::string detail;
};

struct CoupledPair {
  Trajectory original;
  Trajectory dominating;
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::vector<OrderCheck> failures;  // at most a handful, for the report
  std::vector<std::pair<SystemState, SystemState>> samples;

  bool ordered() const { return violations == 0; }
};

class CouplingViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Componentwise order used by the coupling.
inline std::optional<std::string> order_violation(const SystemState& u, const SystemState& d) {
  std::string msg;
  if (!(u.x <= d.x)) msg += "X ";
  double zmax = 0.0;
  for (double v : u.z) zmax = std::max(zmax, v);
  if (!(zmax <= d.z[0])) msg += "Z ";
  if (!(std::max(u.omega_p, u.omega_d) <= d.omega_p)) msg += "Omega ";
  if (!(std::abs(u.w) <= d.w)) msg += "W ";
  if (msg.empty()) return std::nullopt;
  return msg;
}

struct CouplingOptions {
  std::size_t n_samples = 100;
  bool throw_on_violation = true;
};

// Both processes read the same pre-synaptic epochs and the same candidate
// epochs and marks, drawn at the dominating envelope; each applies its own
// acceptance threshold. Both flow over the union of their event times.
inline CoupledPair simulate_coupled(const ValidatedModel& model, const SystemState& u0, SimOptions opt,
                                    std::uint64_t seed, std::uint64_t replica = 0,
                                    const CouplingOptions& copt = {}) {
  detail::check_options(opt);
  const ModelSpec& m = model.spec();
  const ValidatedModel dom = require_valid(dominating_spec(m));
  opt.sample_times.clear();
  for (std::size_t k = 1; k <= copt.n_samples; ++k)
    opt.sample_times.push_back(opt.horizon * static_cast<double>(k) / static_cast<double>(copt.n_samples));
  opt.observer = nullptr;
  detail::Engine eu(model.shared(), u0, opt, seed, replica);
  detail::Engine ed(dom.shared(), dominating_initial(u0), opt, seed, replica);
  CoupledPair out;

  auto audit = [&](const SystemState& u, const SystemState& d, bool at_event) {
    ++out.checks;
    if (auto v = order_violation(u, d)) {
      ++out.violations;
      if (out.failures.size() < 16) out.failures.push_back({u.t, at_event, false, *v});
      if (copt.throw_on_violation)
        throw CouplingViolation("order violated (" + *v + ") at t=" + std::to_string(u.t));
    }
  };
  audit(eu.state(), ed.state(), true);

  Rng pre(seed, replica, Stream::pre_spikes);
  Rng post(seed, replica, Stream::post_spikes);
  const double eps = opt.epsilon;
  const double pre_rate = m.lambda / eps;
  if (dom->lambda != m.lambda) throw std::logic_error("dominating rate differs");
  double next_pre = u0.t + pre.exponential(pre_rate);
  double env = ed.envelope();
  double cand = u0.t + post.exponential(env / eps);
  auto advance_both = [&](double t) {
    eu.advance(t);
    ed.advance(t);
  };
  for (;;) {
    if (ed.events() >= opt.event_budget) {
      eu.mark_truncated();
      ed.mark_truncated();
      break;
    }
    if (std::min(next_pre, cand) > opt.horizon) {
      advance_both(opt.horizon);
      break;
    }
    if (next_pre <= cand) {
      advance_both(next_pre);
      eu.pre_spike();
      ed.pre_spike();
      next_pre += pre.exponential(pre_rate);
    } else {
      const double bd = ed.beta_at(cand);
      const double bu = eu.beta_at(cand);
      const double u = post.uniform();
      if (bd > env * (1.0 + 1e-12) || bu > env * (1.0 + 1e-12))
        throw EnvelopeViolation("intensity exceeds the shared envelope at t=" + std::to_string(cand));
      const bool acc_d = u * env <= bd;
      const bool acc_u = u * env <= bu;
      if (acc_u && !acc_d)
        throw CouplingViolation("original accepted a candidate rejected by the dominating process at t=" +
                                std::to_string(cand));
      if (!acc_d) {
        cand += post.exponential(env / eps);
        continue;
      }
      advance_both(cand);
      ed.post_spike();
      if (acc_u) eu.post_spike();
    }
    audit(eu.state(), ed.state(), true);
    env = ed.envelope();
    cand = ed.state().t + post.exponential(env / eps);
  }
  out.original = eu.finish();
  out.dominating = ed.finish();
  for (std::size_t k = 0; k < out.original.samples.size(); ++k) {
    audit(out.original.samples[k], out.dominating.samples[k], false);
    out.samples.emplace_back(out.original.samples[k], out.dominating.samples[k]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Occupation functionals

// Product of scalar factors, each a FunctionSpec of X or of Z.
struct Integrand {
  enum class Var { x, z };
  struct Factor {
    Var var;
    FunctionSpec f;
  };
  std::vector<Factor> factors;
  double scale = 1.0;

  static Integrand one() { return {}; }
  static Integrand of_x(FunctionSpec f) { return Integrand{{{Var::x, std::move(f)}}, 1.0}; }
  static Integrand of_z(FunctionSpec f) { return Integrand{{{Var::z, std::move(f)}}, 1.0}; }
  Integrand times(const Integrand& o) const {
    Integrand r = *this;
    r.factors.insert(r.factors.end(), o.factors.begin(), o.factors.end());
    r.scale *= o.scale;
    return r;
  }
  Integrand scaled(double c) const {
    Integrand r = *this;
    r.scale *= c;
    return r;
  }

  double eval(double x, std::span<const double> z) const {
    double v = scale;
    for (const auto& fa : factors) v *= fa.var == Var::x ? fa.f(x) : fa.f(z);
    return v;
  }
};

// Coordinate z_i as a FunctionSpec over the vector input.
inline FunctionSpec coordinate(std::size_t i, std::size_t ell) {
  std::vector<double> w(ell, 0.0);
  w[i] = 1.0;
  return FunctionSpec::affine(0.0, 1.0).on(std::move(w));
}

// int_0^dt G(X(s), Z(s)) ds along the flow from `start`; exact when every
// factor is affine on the range it sees, adaptive quadrature otherwise.
inline double segment_integral(const Integrand& G, const SystemState& start, double dt, const ModelSpec& m,
                               double eps) {
  if (dt <= 0.0) return 0.0;
  if (G.factors.empty()) return G.scale * dt;
  FlowPaths paths(m, start, eps);
  ExpSum prod = ExpSum::constant(G.scale);
  bool exact = true;
  for (const auto& fa : G.factors) {
    auto e = fa.var == Integrand::Var::x ? paths.of_x(fa.f, dt) : paths.of_z(fa.f, dt);
    if (!e) {
      exact = false;
      break;
    }
    prod = prod * *e;
  }
  if (exact) return prod.integral(dt);
  std::vector<double> z;
  return integrate(
             [&](double s) {
               paths.z_at(s, z);
               return G.eval(paths.x_at(s), z);
             },
             0.0, dt, 1e-12)
      .value;
}

// int_a^b G(X(s), Z(s)) ds over a recorded trajectory (default: [0, horizon]).
inline double occupation_functional(const Trajectory& tr, const Integrand& G, double a = 0.0,
                                    double b = std::numeric_limits<double>::quiet_NaN()) {
  if (std::isnan(b)) b = tr.horizon;
  const ModelSpec& m = *tr.model;
  FlowOptions fast = tr.flow;
  fast.slow = false;
  double total = 0.0;
  SystemState s = tr.initial;
  auto piece = [&](const SystemState& st, double t_end) {
    const double lo = std::max(a, st.t), hi = std::min(b, t_end);
    if (hi <= lo) return;
    SystemState from = st;
    if (lo > st.t) flow_in_place(from, lo - st.t, m, tr.epsilon, fast);
    total += segment_integral(G, from, hi - lo, m, tr.epsilon);
  };
  for (std::size_t i = 0; i < tr.events.size(); ++i) {
    piece(s, tr.events[i].t);
    s = tr.state_after(i);
    if (s.t >= b) return total;
  }
  piece(s, tr.final_state.t);
  return total;
}

}  // namespace stdpavg
