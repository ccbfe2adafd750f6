#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "equilibrium.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "simulator.hpp"

namespace stdpavg {

// ---------------------------------------------------------------------------
// Closed-form solutions of w' = L2 w^2 + L1 w + L0

enum class BlowupCase { positive, zero, negative };

inline const char* to_string(BlowupCase c) {
  switch (c) {
    case BlowupCase::positive: return "delta>0";
    case BlowupCase::zero: return "delta=0";
    case BlowupCase::negative: return "delta<0";
  }
  return "?";
}

struct BlowupSolution {
  LinearLimitCoefficients coeffs;
  double w0 = 0.0;
  BlowupCase kind = BlowupCase::zero;
  double S0 = kInf;

  // w(t) for 0 <= t < S0, evaluated in the requested precision.
  template <class Real = double>
  Real value(Real t) const {
    const Real L2 = coeffs.L2, L1 = coeffs.L1, L0 = coeffs.L0, w = w0;
    switch (kind) {
      case BlowupCase::positive: {
        const Real sd = std::sqrt(L1 * L1 - 4 * L2 * L0);
        const Real s1 = (L1 - sd) / (2 * L2), s2 = (L1 + sd) / (2 * L2);
        const Real e = std::exp(sd * t);
        return (s2 * (w + s1) * e - s1 * (w + s2)) / ((w + s2) - (w + s1) * e);
      }
      case BlowupCase::zero: {
        const Real a = 2 * w * L2 + L1;
        return a / (L2 * (2 - a * t)) - L1 / (2 * L2);
      }
      case BlowupCase::negative: {
        const Real sd = std::sqrt(4 * L2 * L0 - L1 * L1);
        const Real z0 = (2 * w * L2 + L1) / sd;
        return sd / (2 * L2) * std::tan(sd * t / 2 + std::atan(z0)) - L1 / (2 * L2);
      }
    }
    return Real(0);
  }
  double operator()(double t) const { return value<double>(t); }

  template <class Real = double>
  Real rhs(Real w) const {
    return (Real(coeffs.L2) * w + Real(coeffs.L1)) * w + Real(coeffs.L0);
  }
};

// Delta within `zero_tol` of 0 (relative to the size of its terms) is treated
// as the degenerate case.
inline BlowupSolution blowup_solution(const LinearLimitCoefficients& c, double w0, double zero_tol = 1e-14) {
  if (!(c.L2 > 0.0)) throw std::invalid_argument("blow-up closed form requires Lambda2 > 0");
  if (!(w0 >= 0.0)) throw std::invalid_argument("w0 must be non-negative");
  BlowupSolution b;
  b.coeffs = c;
  b.w0 = w0;
  const double d = c.delta();
  const double scale = c.L1 * c.L1 + std::abs(4.0 * c.L2 * c.L0);
  if (std::abs(d) <= zero_tol * scale) {
    b.kind = BlowupCase::zero;
    const double a = 2.0 * w0 * c.L2 + c.L1;
    b.S0 = a > 0.0 ? 2.0 / a : kInf;
  } else if (d > 0.0) {
    b.kind = BlowupCase::positive;
    const double num = w0 + c.s2(), den = w0 + c.s1();
    b.S0 = den > 0.0 ? std::log(num / den) / std::sqrt(d) : kInf;
  } else {
    b.kind = BlowupCase::negative;
    b.S0 = 2.0 / std::sqrt(-d) * (std::numbers::pi / 2.0 - std::atan(c.z0(w0)));
  }
  return b;
}

// ---------------------------------------------------------------------------
// RK4 integration of the averaged system
//   omega_a' = -alpha omega_a + Psi_a(w)
//   w'       = M(omega_p, omega_d, w)        (drift rule)
//   w'       = Psi_p(w) - Psi_d(w)           (jump rule)

struct LimitState {
  double omega_p = 0.0;
  double omega_d = 0.0;
  double w = 0.0;
};

using PsiFn = std::function<std::array<double, 2>(double)>;

struct LimitSolution {
  std::vector<double> t, omega_p, omega_d, w;
  std::string source = "closed-form";
  std::vector<double> rhs_se;  // per step, MC mode only
  std::optional<double> blowup_time;
  double ceiling = 1e6;
  std::size_t replica_doublings = 0;

  // Linear interpolation on the stored grid.
  double w_at(double tt) const {
    if (t.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (tt <= t.front()) return w.front();
    if (tt >= t.back()) return w.back();
    auto it = std::upper_bound(t.begin(), t.end(), tt);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double f = (tt - t[i - 1]) / (t[i] - t[i - 1]);
    return w[i - 1] + f * (w[i] - w[i - 1]);
  }
};

namespace detail {

inline std::array<double, 3> limit_rhs(const ModelSpec& m, const std::array<double, 3>& y,
                                       const std::array<double, 2>& psi) {
  std::array<double, 3> d{};
  d[0] = -m.alpha * y[0] + psi[0];
  d[1] = -m.alpha * y[1] + psi[1];
  d[2] = m.weight_rule == WeightRule::jump ? psi[0] - psi[1] : m.M(y[0], y[1], y[2]);
  return d;
}

template <class PsiAt>
std::array<double, 3> rk4_limit_step(const ModelSpec& m, const std::array<double, 3>& y, double h, PsiAt&& psi_at) {
  auto f = [&](const std::array<double, 3>& v) { return limit_rhs(m, v, psi_at(v[2])); };
  auto axpy = [](const std::array<double, 3>& a, double c, const std::array<double, 3>& b) {
    return std::array<double, 3>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]};
  };
  const auto k1 = f(y);
  const auto k2 = f(axpy(y, h / 2, k1));
  const auto k3 = f(axpy(y, h / 2, k2));
  const auto k4 = f(axpy(y, h, k3));
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

inline bool escaped(const std::array<double, 3>& y, double ceiling) {
  for (double v : y)
    if (!std::isfinite(v) || std::abs(v) > ceiling) return true;
  return false;
}

}  // namespace detail

// Fixed-step RK4 with a closed-form Psi.
inline LimitSolution solve_limit_ode(const ModelSpec& m, const LimitState& init, double horizon, const PsiFn& psi,
                                     double step, double ceiling = 1e6) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  LimitSolution sol;
  sol.ceiling = ceiling;
  std::array<double, 3> y{init.omega_p, init.omega_d, init.w};
  double t = 0.0;
  auto push = [&] {
    sol.t.push_back(t);
    sol.omega_p.push_back(y[0]);
    sol.omega_d.push_back(y[1]);
    sol.w.push_back(y[2]);
  };
  push();
  const auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
  for (std::size_t k = 0; k < n; ++k) {
    const double h = std::min(step, horizon - t);
    auto next = detail::rk4_limit_step(m, y, h, psi);
    if (detail::escaped(next, ceiling)) {
      sol.blowup_time = t + h;
      break;
    }
    y = next;
    t = k + 1 == n ? horizon : t + h;
    push();
  }
  return sol;
}

// Closed-form Psi for the named systems, if one exists.
inline std::optional<PsiFn> closed_form_psi(const ModelSpec& m) {
  if (m.simple && m.weight_rule == WeightRule::jump) {
    const auto c = simple_model_coefficients(*m.simple);
    return PsiFn([c](double w) { return std::array<double, 2>{c(w), 0.0}; });
  }
  if (m.dominating) {
    const DominatingConstants d = *m.dominating;
    return PsiFn([d](double w) {
      const double v = dominating_psi(w, d);
      return std::array<double, 2>{v, v};
    });
  }
  if (m.n[kPot][0].is_zero() && m.n[kPot][1].is_zero() && m.n[kPot][2].is_zero() && m.n[kDep][0].is_zero() &&
      m.n[kDep][1].is_zero() && m.n[kDep][2].is_zero())
    return PsiFn([](double) { return std::array<double, 2>{0.0, 0.0}; });
  return std::nullopt;
}

class MCPrecisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MCRhsSettings {
  EquilibriumSettings pi;
  double max_rel_se = 0.05;
  int max_doublings = 4;
};

// RK4 whose Psi is a Monte-Carlo estimate frozen over each step, taken at the
// step's predicted midpoint w.
inline LimitSolution solve_limit_ode_mc(const ValidatedModel& model, const LimitState& init, double horizon,
                                        double step, const MCRhsSettings& mc, double ceiling = 1e6) {
  const ModelSpec& m = model.spec();
  LimitSolution sol;
  sol.source = "monte-carlo";
  sol.ceiling = ceiling;
  std::array<double, 3> y{init.omega_p, init.omega_d, init.w};
  double t = 0.0;
  std::uint64_t call = 0;
  auto estimate = [&](double w, double& se_out) {
    EquilibriumSettings s = mc.pi;
    for (int attempt = 0;; ++attempt) {
      s.seed = mc.pi.seed + 0x9E3779B97F4A7C15ULL * (++call);
      const double wc = m.KW.clamp(w);
      const auto e = estimate_pi(wc, model, s);
      double worst = 0.0;
      bool ok = true;
      for (int a = 0; a < 2; ++a) {
        worst = std::max(worst, e.psi[a].se);
        if (e.psi[a].se > mc.max_rel_se * std::abs(e.psi[a].mean) + 1e-12) ok = false;
      }
      if (ok) {
        se_out = worst;
        return std::array<double, 2>{e.psi[0].mean, e.psi[1].mean};
      }
      if (attempt >= mc.max_doublings)
        throw MCPrecisionError("Monte-Carlo rhs standard error above " + std::to_string(mc.max_rel_se) +
                               " of its magnitude at w=" + std::to_string(w));
      s.replicas *= 2;
      ++sol.replica_doublings;
    }
  };
  auto push = [&] {
    sol.t.push_back(t);
    sol.omega_p.push_back(y[0]);
    sol.omega_d.push_back(y[1]);
    sol.w.push_back(y[2]);
  };
  push();
  double se = 0.0;
  std::array<double, 2> last = estimate(y[2], se);
  const auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
  for (std::size_t k = 0; k < n; ++k) {
    const double h = std::min(step, horizon - t);
    const double wdot = detail::limit_rhs(m, y, last)[2];
    const std::array<double, 2> psi = estimate(y[2] + 0.5 * h * wdot, se);
    auto next = detail::rk4_limit_step(m, y, h, [&](double) { return psi; });
    sol.rhs_se.push_back(se);
    last = psi;
    if (detail::escaped(next, ceiling)) {
      sol.blowup_time = t + h;
      break;
    }
    y = next;
    t = k + 1 == n ? horizon : t + h;
    push();
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Convergence of W_eps to the limit

struct SweepSettings {
  std::vector<double> epsilons{0.1, 0.03, 0.01};
  double horizon = 0.4;
  std::size_t replicas = 64;
  std::size_t grid_points = 41;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double ode_step = 1e-4;
  MCRhsSettings mc;  // used only when no closed form exists
};

struct SweepRow {
  double epsilon, t, mean_w, sd_w, limit_w, abs_error;
};

struct SweepSummary {
  double epsilon;
  double sup_error;       // mean path vs limit
  double mean_path_sup;   // average over replicas of each path's sup error
  std::size_t truncated;  // replicas that hit the event budget
};

struct SweepReport {
  std::string limit_source;
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;

  bool strictly_decreasing() const {
    for (std::size_t i = 1; i < summary.size(); ++i)
      if (!(summary[i].sup_error < summary[i - 1].sup_error)) return false;
    return true;
  }
};

inline SweepReport convergence_sweep(const ValidatedModel& model, const SystemState& u0, const SweepSettings& set) {
  const ModelSpec& m = model.spec();
  SweepReport rep;
  std::vector<double> grid(set.grid_points);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = set.horizon * static_cast<double>(k) / static_cast<double>(grid.size() - 1);

  std::function<double(double)> limit;
  const LimitState init{u0.omega_p, u0.omega_d, u0.w};
  if (m.simple && m.weight_rule == WeightRule::jump) {
    auto b = blowup_solution(simple_model_coefficients(*m.simple), u0.w);
    if (!(set.horizon < b.S0)) throw std::invalid_argument("sweep horizon must lie inside the blow-up window");
    limit = [b](double t) { return b(t); };
    rep.limit_source = "blowup-closed-form";
  } else if (m.weight_rule == WeightRule::drift && m.M_is_zero() && m.delta == 0.0) {
    limit = [w0 = u0.w](double) { return w0; };
    rep.limit_source = "constant";
  } else if (auto psi = closed_form_psi(m)) {
    auto sol = std::make_shared<LimitSolution>(solve_limit_ode(m, init, set.horizon, *psi, set.ode_step));
    limit = [sol](double t) { return sol->w_at(t); };
    rep.limit_source = "ode-closed-form";
  } else {
    auto sol = std::make_shared<LimitSolution>(solve_limit_ode_mc(model, init, set.horizon, set.ode_step, set.mc));
    limit = [sol](double t) { return sol->w_at(t); };
    rep.limit_source = "ode-monte-carlo";
  }

  for (std::size_t ie = 0; ie < set.epsilons.size(); ++ie) {
    const double eps = set.epsilons[ie];
    SimOptions o;
    o.epsilon = eps;
    o.horizon = set.horizon;
    o.record_events = false;
    o.sample_times = grid;
    struct Path {
      std::vector<double> w;
      bool truncated = false;
    };
    const auto paths = parallel_map(set.replicas, set.threads, [&](std::size_t r) {
      const Trajectory tr = simulate(model, u0, o, set.seed + 1000003ULL * ie, r);
      Path p;
      for (const auto& s : tr.samples) p.w.push_back(s.w);
      p.truncated = tr.truncated;
      // A truncated path keeps its last value on the remaining grid.
      while (p.w.size() < grid.size()) p.w.push_back(tr.final_state.w);
      return p;
    });
    SweepSummary sum{eps, 0.0, 0.0, 0};
    std::vector<double> path_sup(paths.size(), 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      double mean = 0.0, ss = 0.0;
      for (const auto& p : paths) mean += p.w[k];
      mean /= static_cast<double>(paths.size());
      for (const auto& p : paths) ss += (p.w[k] - mean) * (p.w[k] - mean);
      const double sd = paths.size() > 1 ? std::sqrt(ss / static_cast<double>(paths.size() - 1)) : 0.0;
      const double lim = limit(grid[k]);
      const double err = std::abs(mean - lim);
      rep.rows.push_back({eps, grid[k], mean, sd, lim, err});
      sum.sup_error = std::max(sum.sup_error, err);
      for (std::size_t r = 0; r < paths.size(); ++r)
        path_sup[r] = std::max(path_sup[r], std::abs(paths[r].w[k] - lim));
    }
    for (std::size_t r = 0; r < paths.size(); ++r) {
      sum.mean_path_sup += path_sup[r] / static_cast<double>(paths.size());
      sum.truncated += paths[r].truncated ? 1 : 0;
    }
    rep.summary.push_back(sum);
  }
  return rep;
}

}  // namespace stdpavg
