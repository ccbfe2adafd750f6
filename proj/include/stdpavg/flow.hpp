#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "function_spec.hpp"
#include "model.hpp"
#include "quadrature.hpp"

namespace stdpavg {

// int_0^dt exp(-alpha*(dt-s) - r*s) ds, stable when alpha and r are close.
inline double filter_kernel(double alpha, double r, double dt) {
  const double d = std::abs(alpha - r);
  const double m = std::min(alpha, r);
  if (d * dt < 1e-300) return dt * std::exp(-m * dt);
  if (d == 0.0) return dt * std::exp(-m * dt);
  return std::exp(-m * dt) * (-std::expm1(-d * dt)) / d;
}

// c0 + sum_k c_k exp(-r_k s): the exact path of any affine image of X or Z
// along the flow, closed under products.
struct ExpSum {
  double c0 = 0.0;
  std::vector<std::pair<double, double>> terms;  // (coefficient, rate)

  static ExpSum constant(double c) { return {c, {}}; }
  static ExpSum decay(double start, double limit, double rate) {
    ExpSum e{limit, {}};
    e.add(start - limit, rate);
    return e;
  }

  void add(double coef, double rate) {
    if (coef == 0.0) return;
    if (rate == 0.0) {
      c0 += coef;
      return;
    }
    for (auto& [c, r] : terms)
      if (r == rate) {
        c += coef;
        return;
      }
    terms.emplace_back(coef, rate);
  }

  double at(double s) const {
    double v = c0;
    for (const auto& [c, r] : terms) v += c * std::exp(-r * s);
    return v;
  }
  double integral(double dt) const {
    double v = c0 * dt;
    for (const auto& [c, r] : terms) v += c * (-std::expm1(-r * dt)) / r;
    return v;
  }
  // int_0^dt exp(-alpha(dt-s)) f(s) ds
  double filtered(double alpha, double dt) const {
    double v = c0 * filter_kernel(alpha, 0.0, dt);
    for (const auto& [c, r] : terms) v += c * filter_kernel(alpha, r, dt);
    return v;
  }
  // Sign-coherent coefficients make the path monotone in s.
  bool monotone() const {
    int sign = 0;
    for (const auto& [c, r] : terms) {
      const int s = c > 0 ? 1 : (c < 0 ? -1 : 0);
      if (s == 0) continue;
      if (sign != 0 && s != sign) return false;
      sign = s;
    }
    return true;
  }
  ExpSum affine(double a, double b) const {
    ExpSum e{a + b * c0, {}};
    for (const auto& [c, r] : terms) e.add(b * c, r);
    return e;
  }
  friend ExpSum operator*(const ExpSum& f, const ExpSum& g) {
    ExpSum e{f.c0 * g.c0, {}};
    for (const auto& [c, r] : g.terms) e.add(f.c0 * c, r);
    for (const auto& [c, r] : f.terms) {
      e.add(c * g.c0, r);
      for (const auto& [c2, r2] : g.terms) e.add(c * c2, r + r2);
    }
    return e;
  }
};

// (intercept, slope) when the scalar rule of f is affine on [lo, hi].
inline std::optional<std::pair<double, double>> affine_on(const FunctionSpec& f, double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  switch (f.kind) {
    case FunctionKind::constant: return std::pair{f.a, 0.0};
    case FunctionKind::affine: return std::pair{f.a, f.b};
    case FunctionKind::affine_clipped: {
      if (hi < f.cutoff) return std::pair{0.0, 0.0};
      const double vlo = f.a + f.b * std::max(lo, f.cutoff), vhi = f.a + f.b * hi;
      if (lo < f.cutoff) {
        if (vlo <= 0.0 && vhi <= 0.0) return std::pair{0.0, 0.0};
        return std::nullopt;
      }
      if (vlo >= 0.0 && vhi >= 0.0) return std::pair{f.a, f.b};
      if (vlo <= 0.0 && vhi <= 0.0) return std::pair{0.0, 0.0};
      return std::nullopt;
    }
    case FunctionKind::saturating:
      if (hi <= 0.0) return std::pair{0.0, 0.0};
      return std::nullopt;
    case FunctionKind::piecewise_linear: {
      const auto& k = f.knots;
      if (k.empty()) return std::pair{0.0, 0.0};
      if (k.size() == 1) return std::pair{k[0].second, 0.0};
      auto segment = [&](double u) -> std::size_t {
        std::size_t i = 0;
        while (i + 2 < k.size() && u > k[i + 1].first) ++i;
        return i;
      };
      const std::size_t i = segment(lo);
      const std::size_t j = segment(hi);
      if (i != j && !(j == i + 1 && lo == k[i + 1].first)) return std::nullopt;
      const auto& [x0, y0] = k[j];
      const auto& [x1, y1] = k[j + 1];
      const double s = (y1 - y0) / (x1 - x0);
      return std::pair{y0 - s * x0, s};
    }
  }
  return std::nullopt;
}

// Along-flow helpers for one segment starting at a given state.
class FlowPaths {
 public:
  FlowPaths(const ModelSpec& m, const SystemState& s, double eps) : eps_(eps), x0_(s.x) {
    z_.reserve(s.z.size());
    for (std::size_t i = 0; i < s.z.size(); ++i) {
      const double lim = m.k0[i] / m.gamma[i];
      z_.push_back(ExpSum::decay(s.z[i], lim, m.gamma[i] / eps));
    }
  }

  ExpSum x() const { return ExpSum::decay(x0_, 0.0, 1.0 / eps_); }
  const std::vector<ExpSum>& z() const { return z_; }

  void z_at(double s, std::vector<double>& out) const {
    out.resize(z_.size());
    for (std::size_t i = 0; i < z_.size(); ++i) out[i] = z_[i].at(s);
  }
  double x_at(double s) const { return x0_ * std::exp(-s / eps_); }

  // Path of the reduced input of a z-function.
  ExpSum reduced(const FunctionSpec& f) const {
    if (f.weights.empty()) return z_.empty() ? ExpSum{} : z_[0];
    ExpSum u;
    for (std::size_t i = 0; i < z_.size(); ++i) {
      u.c0 += f.weights[i] * z_[i].c0;
      for (const auto& [c, r] : z_[i].terms) u.add(f.weights[i] * c, r);
    }
    return u;
  }

  // f(input(s)) as an ExpSum over [0, dt] when f is affine on the range.
  static std::optional<ExpSum> compose(const FunctionSpec& f, const ExpSum& u, double dt) {
    if (f.kind == FunctionKind::constant) return ExpSum::constant(f.a);
    if (!u.monotone()) {
      if (f.kind == FunctionKind::affine) return u.affine(f.a, f.b);
      return std::nullopt;
    }
    auto ab = affine_on(f, u.at(0.0), u.at(dt));
    if (!ab) return std::nullopt;
    return u.affine(ab->first, ab->second);
  }
  std::optional<ExpSum> of_z(const FunctionSpec& f, double dt) const { return compose(f, reduced(f), dt); }
  std::optional<ExpSum> of_x(const FunctionSpec& f, double dt) const {
    ExpSum u = x();
    if (!f.weights.empty()) u = u.affine(0.0, f.weights[0]);
    return compose(f, u, dt);
  }

  double eval_z(const FunctionSpec& f, double s) const {
    thread_local std::vector<double> buf;
    z_at(s, buf);
    return f(std::span<const double>(buf));
  }

 private:
  double eps_;
  double x0_;
  std::vector<ExpSum> z_;
};

enum class FlowMethod { closed_form, quadrature, rk_step, frozen };

struct FlowOptions {
  bool freeze_w = false;   // fast process: W held at its current value
  bool slow = true;        // advance Omega and W at all
  double rk_tol = 1e-9;
};

struct FlowResult {
  SystemState state;
  FlowMethod x_method = FlowMethod::closed_form;
  FlowMethod z_method = FlowMethod::closed_form;
  FlowMethod omega_method = FlowMethod::closed_form;
  FlowMethod w_method = FlowMethod::closed_form;
  double omega_error = 0.0;
  double w_error = 0.0;
  bool clamped = false;
};

struct FlowInfo {
  FlowMethod omega_method = FlowMethod::closed_form;
  FlowMethod w_method = FlowMethod::closed_form;
  double omega_error = 0.0;
  double w_error = 0.0;
  bool clamped = false;
};

namespace detail {

// Omega_a(s) along the flow, exact when n_{a,0} is locally affine.
struct OmegaPath {
  double omega0 = 0.0;
  double alpha = 1.0;
  bool zero_inflow = true;
  std::optional<ExpSum> inflow;
  const FunctionSpec* n0 = nullptr;
  const FlowPaths* paths = nullptr;

  double at(double s, double* err = nullptr) const {
    double v = omega0 * std::exp(-alpha * s);
    if (zero_inflow || s == 0.0) return v;
    if (inflow) return v + inflow->filtered(alpha, s);
    auto q = integrate([&](double u) { return std::exp(-alpha * (s - u)) * paths->eval_z(*n0, u); }, 0.0, s, 1e-10);
    if (err) *err = q.error;
    return v + q.value;
  }
};

inline double rk4_step(const std::function<double(double, double)>& f, double s, double h, double w) {
  const double k1 = f(s, w);
  const double k2 = f(s + 0.5 * h, w + 0.5 * h * k1);
  const double k3 = f(s + 0.5 * h, w + 0.5 * h * k2);
  const double k4 = f(s + h, w + h * k3);
  return w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// RK4 with step doubling: each accepted step has local error <= tol*h/dt.
inline double rk4_adaptive(const std::function<double(double, double)>& f, double dt, double w, double tol,
                           double* err_out) {
  double s = 0.0, h = dt, total_err = 0.0;
  const double h_min = dt * 0x1.0p-40;
  while (s < dt) {
    h = std::min(h, dt - s);
    const double full = rk4_step(f, s, h, w);
    const double half = rk4_step(f, s + 0.5 * h, 0.5 * h, rk4_step(f, s, 0.5 * h, w));
    const double err = std::abs(half - full) / 15.0;
    if (err <= tol * h / dt || h <= h_min) {
      w = half + (half - full) / 15.0;
      s += h;
      total_err += err;
      if (err < 0.1 * tol * h / dt) h *= 2.0;
    } else {
      h *= 0.5;
    }
  }
  if (err_out) *err_out = total_err;
  return w;
}

}  // namespace detail

// Advances the state by dt with no jump in between. X and Z use their closed
// forms; Omega_a is exact for locally affine n_{a,0} and quadrature otherwise;
// W is exact when M is zero or under the jump rule, RK4 otherwise.
inline FlowInfo flow_in_place(SystemState& s, double dt, const ModelSpec& m, double eps,
                              const FlowOptions& opt = {}) {
  FlowInfo info;
  if (dt <= 0.0) return info;
  if (opt.slow) {
    std::optional<FlowPaths> storage;
    if (!m.n[kPot][0].is_zero() || !m.n[kDep][0].is_zero()) storage.emplace(m, s, eps);
    const FlowPaths* pp = storage ? &*storage : nullptr;
    detail::OmegaPath om[2];
    for (int a = 0; a < 2; ++a) {
      const FunctionSpec& n0 = m.n[a][0];
      om[a].omega0 = s.omega(a);
      om[a].alpha = m.alpha;
      om[a].zero_inflow = n0.is_zero();
      om[a].n0 = &n0;
      om[a].paths = pp;
      if (!om[a].zero_inflow) {
        om[a].inflow = pp->of_z(n0, dt);
        if (!om[a].inflow) info.omega_method = FlowMethod::quadrature;
      }
    }
    double new_w = s.w;
    if (opt.freeze_w) {
      info.w_method = FlowMethod::frozen;
    } else if (m.weight_rule == WeightRule::jump) {
      for (int a = 0; a < 2; ++a) {
        if (om[a].zero_inflow) continue;
        const double sign = a == kPot ? 1.0 : -1.0;
        if (om[a].inflow) {
          new_w += sign * om[a].inflow->integral(dt);
        } else {
          auto q = integrate([&](double u) { return pp->eval_z(m.n[a][0], u); }, 0.0, dt, 1e-10);
          new_w += sign * q.value;
          info.w_method = FlowMethod::quadrature;
          info.w_error += q.error;
        }
      }
    } else if (m.M_is_zero()) {
      new_w = s.w * std::exp(-m.delta * dt);
    } else {
      info.w_method = FlowMethod::rk_step;
      auto rhs = [&](double u, double w) { return m.M(om[kPot].at(u), om[kDep].at(u), w); };
      new_w = detail::rk4_adaptive(rhs, dt, s.w, opt.rk_tol, &info.w_error);
    }
    for (int a = 0; a < 2; ++a) {
      double e = 0.0;
      s.omega(a) = std::max(0.0, om[a].at(dt, &e));
      info.omega_error += e;
    }
    if (!m.KW.contains(new_w)) {
      new_w = m.KW.clamp(new_w);
      info.clamped = true;
    }
    s.w = new_w;
  }
  s.x *= std::exp(-dt / eps);
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    const double lim = m.k0[i] / m.gamma[i];
    s.z[i] = (s.z[i] - lim) * std::exp(-m.gamma[i] * dt / eps) + lim;
  }
  s.t += dt;
  return info;
}

inline FlowResult flow_state(const SystemState& s, double dt, const ModelSpec& m, double eps = 1.0,
                             const FlowOptions& opt = {}) {
  FlowResult r;
  r.state = s;
  const FlowInfo info = flow_in_place(r.state, dt, m, eps, opt);
  r.omega_method = info.omega_method;
  r.w_method = info.w_method;
  r.omega_error = info.omega_error;
  r.w_error = info.w_error;
  r.clamped = info.clamped;
  return r;
}

inline FlowResult flow_state(const SystemState& s, double dt, const ValidatedModel& m, double eps = 1.0,
                             const FlowOptions& opt = {}) {
  return flow_state(s, dt, m.spec(), eps, opt);
}

}  // namespace stdpavg
