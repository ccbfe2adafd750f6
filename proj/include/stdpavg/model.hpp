#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "function_spec.hpp"

namespace stdpavg {

// How the slow weight moves. `drift`: dW/dt = M(Omega_p, Omega_d, W).
// `jump`: W receives the undecayed p-minus-d inputs that feed Omega (the
// simple model, where W jumps by eps*Z(t-) at post-synaptic spikes).
enum class WeightRule { drift, jump };

struct Bounds {
  double c_beta = 0.0;
  double C_beta = 0.0;
  double c_g = 0.0;
  double C_k = 0.0;
  double C_n = 0.0;
  double C_M = 0.0;
};

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool contains(double v) const { return v >= lo && v <= hi; }
  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

enum Channel : int { kPot = 0, kDep = 1 };

struct SimpleParams {
  double lambda = 1.0;
  double beta0 = 1.0;
  double nu = 0.0;
  double B1 = 0.0;
  double B2 = 1.0;
  double gamma = 1.0;
};

// Constants that define the dominating linear system.
struct DominatingConstants {
  double lambda = 1.0;
  double gamma = 1.0;  // smallest decay rate of Z
  double alpha = 1.0;
  double C_k = 1.0;
  double C_n = 1.0;
  double C_M = 1.0;
  double C_beta = 1.0;
  double ell = 1.0;  // dimension of the original Z, enters n = C_n(1 + ell*z)
};

struct ModelSpec {
  std::string name = "general";
  double lambda = 1.0;
  std::vector<double> gamma{1.0};
  std::vector<double> k0{0.0};
  std::vector<FunctionSpec> k1{FunctionSpec::constant(0.0)};
  std::vector<FunctionSpec> k2{FunctionSpec::constant(0.0)};
  FunctionSpec beta = FunctionSpec::constant(0.0);
  FunctionSpec g = FunctionSpec::constant(0.0);
  // n[a][j]: a in {p, d}, j in {0, 1, 2}; input is z.
  std::array<std::array<FunctionSpec, 3>, 2> n{};
  double alpha = 1.0;
  // M_a takes (omega_a, w); a scalar spec depends on omega_a only.
  FunctionSpec M_p = FunctionSpec::constant(0.0);
  FunctionSpec M_d = FunctionSpec::constant(0.0);
  double delta = 0.0;
  WeightRule weight_rule = WeightRule::drift;
  Bounds bounds;
  Interval KW;
  // Set by the named constructors; used to pick closed-form limits.
  std::optional<SimpleParams> simple;
  std::optional<DominatingConstants> dominating;

  std::size_t ell() const { return gamma.size(); }

  double M_a(int a, double omega, double w) const {
    const FunctionSpec& f = a == kPot ? M_p : M_d;
    if (f.weights.empty()) return f.rule(omega);
    const double v[2]{omega, w};
    return f(std::span<const double>(v, 2));
  }
  double M(double omega_p, double omega_d, double w) const {
    return M_a(kPot, omega_p, w) - M_a(kDep, omega_d, w) - delta * w;
  }
  bool M_is_zero() const { return M_p.is_zero() && M_d.is_zero(); }
};

struct SystemState {
  double t = 0.0;
  double x = 0.0;
  std::vector<double> z{0.0};
  double omega_p = 0.0;
  double omega_d = 0.0;
  double w = 0.0;

  double omega(int a) const { return a == kPot ? omega_p : omega_d; }
  double& omega(int a) { return a == kPot ? omega_p : omega_d; }
};

// ---------------------------------------------------------------------------
// Validation

struct Check {
  std::string assumption;
  std::string function;  // which symbol was probed
  bool passed = true;
  std::optional<bool> analytic;  // absent when the shape has no analytic rule
  bool grid = true;
  std::string method;
  std::string probe;  // offending probe point, empty when passed
};

struct ValidationReport {
  std::vector<Check> checks;
  std::string grid = "x in [-10, 1000] step 0.01; z on rays s*e_i and s*1, s in [0, 1000] step 0.01; "
                     "omega in [0, 1000] step 0.01 at 11 w-probes in K_W";

  bool ok() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  std::vector<Check> violations() const {
    std::vector<Check> out;
    for (const auto& c : checks)
      if (!c.passed) out.push_back(c);
    return out;
  }
  std::string summary() const {
    std::ostringstream os;
    for (const auto& c : checks) {
      os << (c.passed ? "ok   " : "FAIL ") << c.assumption;
      if (!c.function.empty()) os << " [" << c.function << "]";
      os << " (" << c.method << ")";
      if (!c.passed && !c.probe.empty()) os << " at " << c.probe;
      os << "\n";
    }
    return os.str();
  }
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(ValidationReport r)
      : std::runtime_error("model validation failed:\n" + r.summary()), report_(std::move(r)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// Immutable, shareable handle to a spec that passed validation.
class ValidatedModel {
 public:
  const ModelSpec& spec() const { return *spec_; }
  const ModelSpec* operator->() const { return spec_.get(); }
  std::shared_ptr<const ModelSpec> shared() const { return spec_; }

 private:
  friend struct ValidationOutcome validate_spec(const ModelSpec& spec);
  explicit ValidatedModel(std::shared_ptr<const ModelSpec> s) : spec_(std::move(s)) {}
  std::shared_ptr<const ModelSpec> spec_;
};

struct ValidationOutcome {
  ValidationReport report;
  std::optional<ValidatedModel> model;
};

namespace detail {

inline std::string fmt_point(double v) {
  if (v == kInf) return "+inf";
  if (v == -kInf) return "-inf";
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// A scalar function of one real variable with an optional piecewise-affine form.
struct Curve {
  std::function<double(double)> eval;
  std::optional<PiecewiseAffine> pieces;
};

inline Curve curve_of(const PiecewiseAffine& p) {
  return {[p](double x) { return piece_value(p, x, false); }, p};
}
inline Curve constant_curve(double v) { return curve_of({{-kInf, kInf, 0.0, v}}); }
// C * (1 + L*|s|)
inline Curve linear_growth(double C, double L = 1.0) {
  return curve_of({{-kInf, 0.0, -C * L, C}, {0.0, kInf, C * L, C}});
}

// f(k*s) for the scalar rule of f.
inline Curve along(const FunctionSpec& f, double k) {
  std::optional<PiecewiseAffine> p;
  if (k == 0.0) {
    p = PiecewiseAffine{{-kInf, kInf, 0.0, f.rule(0.0)}};
  } else if (auto base = to_pieces(f)) {
    p = rescale(*base, k);
  }
  return {[f, k](double s) { return f.rule(k * s); }, p};
}

inline std::vector<double> grid_points(double lo, double hi) {
  const double g_lo = std::max(lo, -10.0), g_hi = std::min(hi, 1000.0);
  std::vector<double> pts;
  if (g_lo > g_hi) return pts;
  const auto i0 = static_cast<long>(std::ceil((g_lo + 10.0) / 0.01 - 1e-9));
  const auto i1 = static_cast<long>(std::floor((g_hi + 10.0) / 0.01 + 1e-9));
  pts.reserve(static_cast<std::size_t>(std::max(0L, i1 - i0 + 1)));
  for (long i = i0; i <= i1; ++i) pts.push_back(-10.0 + 0.01 * static_cast<double>(i));
  return pts;
}

// lhs <= rhs on [lo, hi]; analytic where both sides are piecewise affine.
inline Check le_check(std::string assumption, std::string function, const Curve& lhs, const Curve& rhs,
                      double lo, double hi, const std::string& var = "x") {
  Check c;
  c.assumption = std::move(assumption);
  c.function = std::move(function);
  std::string where;
  if (lhs.pieces && rhs.pieces) {
    auto v = first_violation(*lhs.pieces, *rhs.pieces, lo, hi, 1e-12);
    c.analytic = !v.has_value();
    if (v) where = var + "=" + fmt_point(*v) + " (analytic)";
  }
  for (double x : grid_points(lo, hi)) {
    const double l = lhs.eval(x), r = rhs.eval(x);
    if (!(l <= r + 1e-12 * (1.0 + std::abs(x)))) {
      c.grid = false;
      if (where.empty()) where = var + "=" + fmt_point(x) + " (grid)";
      break;
    }
  }
  c.passed = c.grid && c.analytic.value_or(true);
  c.method = c.analytic ? "analytic+grid" : "grid";
  if (!c.passed) c.probe = where;
  return c;
}

inline Check simple_check(std::string assumption, std::string function, bool ok, std::string probe = {}) {
  Check c;
  c.assumption = std::move(assumption);
  c.function = std::move(function);
  c.passed = ok;
  c.analytic = ok;
  c.method = "analytic";
  if (!ok) c.probe = std::move(probe);
  return c;
}

inline PiecewiseAffine max_with_identity(double c) {
  return {{-kInf, c, 0.0, c}, {c, kInf, 1.0, 0.0}};
}

// Probe directions in R_+^ell: every unit vector plus the all-ones vector.
inline std::vector<std::vector<double>> rays(std::size_t ell) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < ell; ++i) {
    std::vector<double> d(ell, 0.0);
    d[i] = 1.0;
    out.push_back(d);
  }
  if (ell > 1) out.emplace_back(ell, 1.0);
  return out;
}

inline bool arity_ok(const FunctionSpec& f, std::size_t n) {
  if (f.kind == FunctionKind::constant) return f.weights.empty() || f.weights.size() == n;
  return f.weights.empty() ? n == 1 : f.weights.size() == n;
}

inline double ray_coefficient(const FunctionSpec& f, const std::vector<double>& d) {
  if (f.weights.empty()) return d.empty() ? 0.0 : d[0];
  double k = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) k += f.weights[i] * d[i];
  return k;
}

// Checks lo_bound <= f(z) <= C*(1+|z|_1) along each probe ray.
inline void z_function_checks(std::vector<Check>& out, const std::string& name, const FunctionSpec& f,
                              std::size_t ell, double C, bool require_nonneg, bool bounded) {
  if (!arity_ok(f, ell)) {
    out.push_back(simple_check("function arity matches dim(z)", name, false,
                               "weights=" + std::to_string(f.weights.size()) + ", ell=" + std::to_string(ell)));
    return;
  }
  for (const auto& d : rays(ell)) {
    const double k = ray_coefficient(f, d);
    double L = 0.0;
    for (double di : d) L += di;
    std::string dir = ell == 1 ? "z" : (L > 1.0 ? "z=s*1, s" : "z=s*e_" + std::to_string(
                                                               std::find(d.begin(), d.end(), 1.0) - d.begin() + 1) + ", s");
    const Curve fc = along(f, k);
    if (require_nonneg)
      out.push_back(le_check("non-negative", name, constant_curve(0.0), fc, 0.0, kInf, dir));
    if (bounded)
      out.push_back(le_check("bounded by C_k", name, fc, constant_curve(C), 0.0, kInf, dir));
    else
      out.push_back(le_check("n(z) <= C_n(1+|z|)", name, fc, linear_growth(C, L), 0.0, kInf, dir));
  }
}

inline std::vector<double> w_probes(const Interval& kw) {
  const double lo = std::max(kw.lo, -10.0), hi = std::min(kw.hi, 1000.0);
  std::vector<double> out;
  if (lo > hi) return out;
  for (int i = 0; i <= 10; ++i) out.push_back(lo + (hi - lo) * i / 10.0);
  return out;
}

inline void M_checks(std::vector<Check>& out, const std::string& name, const FunctionSpec& f, const ModelSpec& s) {
  const bool omega_only = f.weights.empty() || (f.weights.size() == 2 && f.weights[1] == 0.0);
  if (!(f.weights.empty() || f.weights.size() == 2 || f.kind == FunctionKind::constant)) {
    out.push_back(simple_check("function arity is (omega, w)", name, false,
                               "weights=" + std::to_string(f.weights.size())));
    return;
  }
  const double C = s.bounds.C_M;
  if (omega_only) {
    const double k = f.weights.empty() ? 1.0 : f.weights[0];
    const Curve fc = along(f, k);
    out.push_back(le_check("non-negative", name, constant_curve(0.0), fc, 0.0, kInf, "omega"));
    out.push_back(le_check("M_a(omega,w) <= C_M(1+omega)", name, fc, linear_growth(C), 0.0, kInf, "omega"));
    // Monotone: each piece has non-negative slope and no downward jump.
    Check mono;
    mono.assumption = "non-decreasing in omega";
    mono.function = name;
    if (fc.pieces) {
      bool ok = true;
      std::string where;
      for (const auto& q : *fc.pieces) {
        if (q.hi <= 0.0) continue;
        if (q.slope < 0.0) {
          ok = false;
          where = "omega=" + fmt_point(std::max(q.lo, 0.0)) + " (analytic)";
          break;
        }
        if (std::isfinite(q.hi) && q.hi > 0.0 &&
            piece_value(*fc.pieces, q.hi, true) > piece_value(*fc.pieces, q.hi, false) + 1e-12) {
          ok = false;
          where = "omega=" + fmt_point(q.hi) + " (analytic)";
          break;
        }
      }
      mono.analytic = ok;
      if (!ok) mono.probe = where;
    }
    const auto pts = grid_points(0.0, kInf);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (fc.eval(pts[i]) < fc.eval(pts[i - 1]) - 1e-12) {
        mono.grid = false;
        if (mono.probe.empty()) mono.probe = "omega=" + fmt_point(pts[i]) + " (grid)";
        break;
      }
    }
    mono.passed = mono.grid && mono.analytic.value_or(true);
    mono.method = mono.analytic ? "analytic+grid" : "grid";
    if (mono.passed) mono.probe.clear();
    out.push_back(mono);
    return;
  }
  // Genuinely two-argument: grid over omega at each w probe.
  Check nonneg{"non-negative", name}, growth{"M_a(omega,w) <= C_M(1+omega)", name},
      mono{"non-decreasing in omega", name};
  const auto pts = grid_points(0.0, kInf);
  for (double w : w_probes(s.KW)) {
    double prev = -kInf;
    for (double om : pts) {
      const double v = s.M_a(name == "M_p" ? kPot : kDep, om, w);
      const std::string at = "(omega=" + fmt_point(om) + ", w=" + fmt_point(w) + ")";
      if (nonneg.grid && v < -1e-12) nonneg.grid = false, nonneg.probe = at;
      if (growth.grid && v > C * (1.0 + om) + 1e-12 * (1.0 + om)) growth.grid = false, growth.probe = at;
      if (mono.grid && v < prev - 1e-12) mono.grid = false, mono.probe = at;
      prev = v;
    }
  }
  for (Check* c : {&nonneg, &growth, &mono}) {
    c->passed = c->grid;
    c->method = "grid";
    out.push_back(*c);
  }
}

inline bool is_continuous(const FunctionSpec& f) {
  if (f.kind != FunctionKind::affine_clipped || !std::isfinite(f.cutoff)) return true;
  return f.a + f.b * f.cutoff <= 0.0;
}

}  // namespace detail

// Checks every structural and growth assumption on the spec. Pure and
// deterministic; the handle is returned only when every check passes.
inline ValidationOutcome validate_spec(const ModelSpec& s) {
  using namespace detail;
  ValidationReport r;
  auto& out = r.checks;
  const Bounds& b = s.bounds;
  const std::size_t ell = s.ell();

  out.push_back(simple_check("lambda must be non-negative", "lambda", s.lambda >= 0.0 && std::isfinite(s.lambda),
                             "lambda=" + fmt_point(s.lambda)));
  const bool dims = ell >= 1 && s.k0.size() == ell && s.k1.size() == ell && s.k2.size() == ell;
  out.push_back(simple_check("dimension of z is consistent", "gamma/k0/k1/k2", dims,
                             "ell=" + std::to_string(ell)));
  for (std::size_t i = 0; i < ell; ++i)
    out.push_back(simple_check("gamma must be positive", "gamma_" + std::to_string(i + 1), s.gamma[i] > 0.0,
                               "gamma=" + fmt_point(s.gamma[i])));
  const bool bounds_ok = b.c_beta >= 0 && b.C_beta >= 0 && b.c_g >= 0 && b.C_k >= 0 && b.C_n >= 0 && b.C_M >= 0;
  out.push_back(simple_check("bounds must be non-negative", "bounds", bounds_ok));
  out.push_back(simple_check("alpha must be positive", "alpha", s.alpha > 0.0, "alpha=" + fmt_point(s.alpha)));
  out.push_back(simple_check("delta must be non-negative", "delta", s.delta >= 0.0, "delta=" + fmt_point(s.delta)));
  out.push_back(simple_check("K_W must be a non-empty interval", "KW", s.KW.lo <= s.KW.hi,
                             "[" + fmt_point(s.KW.lo) + ", " + fmt_point(s.KW.hi) + "]"));
  if (!dims) return {r, std::nullopt};

  for (std::size_t i = 0; i < ell; ++i)
    out.push_back(simple_check("k0 non-negative and bounded by C_k", "k0_" + std::to_string(i + 1),
                               s.k0[i] >= 0.0 && s.k0[i] <= b.C_k, "k0=" + fmt_point(s.k0[i])));
  for (std::size_t i = 0; i < ell; ++i) {
    z_function_checks(out, "k1_" + std::to_string(i + 1), s.k1[i], ell, b.C_k, true, true);
    z_function_checks(out, "k2_" + std::to_string(i + 1), s.k2[i], ell, b.C_k, true, true);
  }

  // beta
  if (!s.beta.weights.empty() && s.beta.weights.size() != 1) {
    out.push_back(simple_check("function arity is scalar", "beta", false));
  } else {
    const Curve beta = along(s.beta, s.beta.weights.empty() ? 1.0 : s.beta.weights[0]);
    out.push_back(le_check("beta non-negative", "beta", constant_curve(0.0), beta, -kInf, kInf));
    out.push_back(le_check("beta vanishes below -c_beta", "beta", beta, constant_curve(0.0), -kInf, -b.c_beta));
    out.push_back(le_check("beta <= C_beta(1+|x|)", "beta", beta, linear_growth(b.C_beta), -kInf, kInf));
    out.push_back(simple_check("continuous (restriction on discontinuities)", "beta", is_continuous(s.beta),
                               "x=" + fmt_point(s.beta.cutoff)));
  }
  // g
  if (!s.g.weights.empty() && s.g.weights.size() != 1) {
    out.push_back(simple_check("function arity is scalar", "g", false));
  } else {
    const Curve g = along(s.g, s.g.weights.empty() ? 1.0 : s.g.weights[0]);
    out.push_back(le_check("g non-negative", "g", constant_curve(0.0), g, -kInf, kInf));
    out.push_back(le_check("g <= max(c_g, x)", "g", g, curve_of(max_with_identity(b.c_g)), -kInf, kInf));
  }
  // n
  static const char* an[2] = {"p", "d"};
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 3; ++j) {
      const std::string name = std::string("n_") + an[a] + std::to_string(j);
      z_function_checks(out, name, s.n[a][j], ell, b.C_n, true, false);
      out.push_back(simple_check("continuous (restriction on discontinuities)", name, is_continuous(s.n[a][j])));
    }
  // M
  if (s.weight_rule == WeightRule::drift) {
    M_checks(out, "M_p", s.M_p, s);
    M_checks(out, "M_d", s.M_d, s);
  }

  if (!r.ok()) return {r, std::nullopt};
  return {r, ValidatedModel(std::make_shared<const ModelSpec>(s))};
}

inline ValidatedModel require_valid(const ModelSpec& s) {
  auto o = validate_spec(s);
  if (!o.model) throw ValidationError(o.report);
  return *o.model;
}

// ---------------------------------------------------------------------------
// Named systems

// One plasticity trace, beta(x) = max(0, nu + beta0*x), g = 0, constant k's.
// With WeightRule::jump, W jumps by eps*Z(t-) at post-synaptic spikes. With
// WeightRule::drift the same input is routed through Omega_p and
// M_p(omega) = alpha*omega, which keeps the domination constants finite.
inline ModelSpec simple_model(const SimpleParams& p, WeightRule rule = WeightRule::jump, double alpha = 1.0) {
  ModelSpec s;
  s.name = "simple";
  s.lambda = p.lambda;
  s.gamma = {p.gamma};
  s.k0 = {0.0};
  s.k1 = {FunctionSpec::constant(p.B1)};
  s.k2 = {FunctionSpec::constant(p.B2)};
  s.beta = FunctionSpec::affine_clipped(p.nu, p.beta0);
  s.g = FunctionSpec::constant(0.0);
  for (auto& row : s.n)
    for (auto& f : row) f = FunctionSpec::constant(0.0);
  s.n[kPot][2] = FunctionSpec::affine(0.0, 1.0);
  s.alpha = alpha;
  s.weight_rule = rule;
  if (rule == WeightRule::drift) s.M_p = FunctionSpec::affine(0.0, alpha);
  s.bounds.c_beta = p.beta0 > 0.0 ? p.nu / p.beta0 : 0.0;
  s.bounds.C_beta = std::max(p.nu, p.beta0);
  s.bounds.C_k = std::max(p.B1, p.B2);
  s.bounds.C_n = 1.0;
  s.bounds.C_M = rule == WeightRule::drift ? alpha : 0.0;
  s.simple = p;
  return s;
}

inline DominatingConstants dominating_constants(const ModelSpec& s) {
  DominatingConstants c;
  c.lambda = s.lambda;
  c.gamma = *std::min_element(s.gamma.begin(), s.gamma.end());
  c.alpha = s.alpha;
  c.C_k = s.bounds.C_k;
  c.C_n = s.bounds.C_n;
  c.C_M = s.bounds.C_M;
  c.C_beta = s.bounds.C_beta;
  c.ell = static_cast<double>(s.ell());
  return c;
}

// The dominating system as an ordinary spec: one trace with k's = C_k,
// beta(x) = C_beta(1+x)^+, g = 0, every n = C_n(1 + ell*z), a single
// integrator carried in both Omega slots, and dW/dt = C_M(1 + Omega).
inline ModelSpec dominating_spec(const DominatingConstants& c) {
  ModelSpec s;
  s.name = "dominating";
  s.lambda = c.lambda;
  s.gamma = {c.gamma};
  s.k0 = {c.C_k};
  s.k1 = {FunctionSpec::constant(c.C_k)};
  s.k2 = {FunctionSpec::constant(c.C_k)};
  s.beta = FunctionSpec::affine_clipped(c.C_beta, c.C_beta);
  s.g = FunctionSpec::constant(0.0);
  for (auto& row : s.n)
    for (auto& f : row) f = FunctionSpec::affine(c.C_n, c.C_n * c.ell);
  s.alpha = c.alpha;
  s.M_p = FunctionSpec::affine(c.C_M, c.C_M);
  s.M_d = FunctionSpec::constant(0.0);
  s.delta = 0.0;
  s.weight_rule = WeightRule::drift;
  s.bounds.c_beta = 1.0;
  s.bounds.C_beta = c.C_beta;
  s.bounds.C_k = c.C_k;
  s.bounds.C_n = c.C_n * std::max(1.0, c.ell);
  s.bounds.C_M = c.C_M;
  s.dominating = c;
  return s;
}

inline ModelSpec dominating_spec(const ModelSpec& original) {
  return dominating_spec(dominating_constants(original));
}

// Initial point of the dominating process.
inline SystemState dominating_initial(const SystemState& u0) {
  SystemState d;
  d.t = u0.t;
  d.x = std::max(u0.x, 0.0);
  double zmax = 0.0;
  for (double v : u0.z) zmax = std::max(zmax, v);
  d.z = {zmax};
  d.omega_p = d.omega_d = std::max(u0.omega_p, u0.omega_d);
  d.w = std::abs(u0.w);
  return d;
}

inline SystemState initial_state(const ModelSpec& s, double x = 0.0, double w = 0.0) {
  SystemState u;
  u.x = x;
  u.z.assign(s.ell(), 0.0);
  u.w = w;
  return u;
}

}  // namespace stdpavg
