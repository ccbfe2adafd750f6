#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stdpavg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class FunctionKind { constant, affine, affine_clipped, saturating, piecewise_linear };

inline const char* to_string(FunctionKind k) {
  switch (k) {
    case FunctionKind::constant: return "constant";
    case FunctionKind::affine: return "affine";
    case FunctionKind::affine_clipped: return "affine_clipped";
    case FunctionKind::saturating: return "saturating";
    case FunctionKind::piecewise_linear: return "piecewise_linear";
  }
  return "?";
}

inline FunctionKind function_kind_from_string(const std::string& s) {
  if (s == "constant") return FunctionKind::constant;
  if (s == "affine") return FunctionKind::affine;
  if (s == "affine_clipped") return FunctionKind::affine_clipped;
  if (s == "saturating") return FunctionKind::saturating;
  if (s == "piecewise_linear") return FunctionKind::piecewise_linear;
  throw std::invalid_argument("unknown function kind '" + s + "'");
}

// A closed enumeration of scalar shapes. Vector inputs are first reduced to a
// scalar u = <weights, v>; an empty weight list means the input is scalar.
//
//   constant          a
//   affine            a + b*u
//   affine_clipped    0 if u < cutoff, else max(0, a + b*u)
//   saturating        c*u/(1+u) for u >= 0, 0 for u < 0
//   piecewise_linear  linear interpolation through knots, linear extrapolation
//                     along the end segments
struct FunctionSpec {
  FunctionKind kind = FunctionKind::constant;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double cutoff = -kInf;
  std::vector<std::pair<double, double>> knots;
  std::vector<double> weights;

  static FunctionSpec constant(double value) {
    FunctionSpec f;
    f.a = value;
    return f;
  }
  static FunctionSpec affine(double intercept, double slope) {
    FunctionSpec f;
    f.kind = FunctionKind::affine;
    f.a = intercept;
    f.b = slope;
    return f;
  }
  static FunctionSpec affine_clipped(double intercept, double slope, double cutoff = -kInf) {
    FunctionSpec f;
    f.kind = FunctionKind::affine_clipped;
    f.a = intercept;
    f.b = slope;
    f.cutoff = cutoff;
    return f;
  }
  static FunctionSpec saturating(double scale) {
    FunctionSpec f;
    f.kind = FunctionKind::saturating;
    f.c = scale;
    return f;
  }
  static FunctionSpec piecewise_linear(std::vector<std::pair<double, double>> pts) {
    FunctionSpec f;
    f.kind = FunctionKind::piecewise_linear;
    std::sort(pts.begin(), pts.end());
    f.knots = std::move(pts);
    return f;
  }

  // Reduce vector inputs by the given linear combination.
  FunctionSpec on(std::vector<double> w) const {
    FunctionSpec f = *this;
    f.weights = std::move(w);
    return f;
  }

  bool is_scalar() const { return weights.empty(); }
  // Constant or affine: exact along exponential flows.
  bool is_affine() const { return kind == FunctionKind::constant || kind == FunctionKind::affine; }
  bool is_zero() const {
    return (kind == FunctionKind::constant && a == 0.0) ||
           (kind == FunctionKind::affine && a == 0.0 && b == 0.0) ||
           (kind == FunctionKind::saturating && c == 0.0);
  }
  double slope() const { return kind == FunctionKind::affine ? b : 0.0; }

  // Scalar rule applied to the reduced input.
  double rule(double u) const {
    switch (kind) {
      case FunctionKind::constant: return a;
      case FunctionKind::affine: return a + b * u;
      case FunctionKind::affine_clipped: return u < cutoff ? 0.0 : std::max(0.0, a + b * u);
      case FunctionKind::saturating: return u <= 0.0 ? 0.0 : c * u / (1.0 + u);
      case FunctionKind::piecewise_linear: return interpolate(u);
    }
    return 0.0;
  }

  double reduce(std::span<const double> v) const {
    if (weights.empty()) {
      if (v.size() != 1 && kind != FunctionKind::constant)
        throw std::invalid_argument("arity mismatch: scalar function applied to a vector of size " +
                                    std::to_string(v.size()));
      return v.empty() ? 0.0 : v[0];
    }
    if (v.size() != weights.size())
      throw std::invalid_argument("arity mismatch: expected " + std::to_string(weights.size()) +
                                  " inputs, got " + std::to_string(v.size()));
    double u = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) u += weights[i] * v[i];
    return u;
  }

  double operator()(double u) const {
    if (weights.size() > 1) throw std::invalid_argument("arity mismatch: vector function applied to a scalar");
    return rule(weights.empty() ? u : weights[0] * u);
  }
  double operator()(std::span<const double> v) const { return rule(reduce(v)); }
  double operator()(std::initializer_list<double> v) const {
    return (*this)(std::span<const double>(v.begin(), v.size()));
  }

 private:
  double interpolate(double u) const {
    if (knots.empty()) return 0.0;
    if (knots.size() == 1) return knots.front().second;
    auto seg = [&](std::size_t i) {
      const auto& [x0, y0] = knots[i];
      const auto& [x1, y1] = knots[i + 1];
      return y0 + (y1 - y0) * (u - x0) / (x1 - x0);
    };
    if (u <= knots.front().first) return seg(0);
    if (u >= knots.back().first) return seg(knots.size() - 2);
    auto it = std::upper_bound(knots.begin(), knots.end(), u,
                               [](double x, const auto& k) { return x < k.first; });
    return seg(static_cast<std::size_t>(it - knots.begin()) - 1);
  }
};

// ---------------------------------------------------------------------------
// Piecewise-affine view used by the analytic assumption checks.

struct AffinePiece {
  double lo, hi;  // open interval; values at the ends are one-sided limits
  double slope, icept;
  double at(double x) const { return icept + slope * x; }
};

using PiecewiseAffine = std::vector<AffinePiece>;

// Every kind except saturating is piecewise affine in its scalar input.
inline std::optional<PiecewiseAffine> to_pieces(const FunctionSpec& f) {
  switch (f.kind) {
    case FunctionKind::constant: return PiecewiseAffine{{-kInf, kInf, 0.0, f.a}};
    case FunctionKind::affine: return PiecewiseAffine{{-kInf, kInf, f.b, f.a}};
    case FunctionKind::affine_clipped: {
      PiecewiseAffine out;
      const double lo = f.cutoff;
      if (lo > -kInf) out.push_back({-kInf, lo, 0.0, 0.0});
      if (f.b == 0.0) {
        out.push_back({lo, kInf, 0.0, std::max(0.0, f.a)});
        return out;
      }
      const double root = -f.a / f.b;
      if (root <= lo || root >= kInf) {
        // sign is constant on [cutoff, inf)
        const double probe = lo > -kInf ? lo + 1.0 : root + (f.b > 0 ? 1.0 : -1.0);
        const bool positive = f.a + f.b * probe > 0.0;
        out.push_back(positive ? AffinePiece{lo, kInf, f.b, f.a} : AffinePiece{lo, kInf, 0.0, 0.0});
        return out;
      }
      if (f.b > 0) {
        out.push_back({lo, root, 0.0, 0.0});
        out.push_back({root, kInf, f.b, f.a});
      } else {
        out.push_back({lo, root, f.b, f.a});
        out.push_back({root, kInf, 0.0, 0.0});
      }
      return out;
    }
    case FunctionKind::piecewise_linear: {
      const auto& k = f.knots;
      if (k.empty()) return PiecewiseAffine{{-kInf, kInf, 0.0, 0.0}};
      if (k.size() == 1) return PiecewiseAffine{{-kInf, kInf, 0.0, k[0].second}};
      PiecewiseAffine out;
      for (std::size_t i = 0; i + 1 < k.size(); ++i) {
        const double s = (k[i + 1].second - k[i].second) / (k[i + 1].first - k[i].first);
        const double lo = i == 0 ? -kInf : k[i].first;
        const double hi = i + 2 == k.size() ? kInf : k[i + 1].first;
        out.push_back({lo, hi, s, k[i].second - s * k[i].first});
      }
      return out;
    }
    case FunctionKind::saturating: return std::nullopt;
  }
  return std::nullopt;
}

// Pieces of u -> f(scale*u).
inline PiecewiseAffine rescale(const PiecewiseAffine& p, double scale) {
  PiecewiseAffine out;
  for (const auto& q : p) {
    double lo = q.lo / scale, hi = q.hi / scale;
    if (scale < 0) std::swap(lo, hi);
    out.push_back({lo, hi, q.slope * scale, q.icept});
  }
  return out;
}

inline PiecewiseAffine negate(PiecewiseAffine p) {
  for (auto& q : p) {
    q.slope = -q.slope;
    q.icept = -q.icept;
  }
  return p;
}

inline double piece_value(const PiecewiseAffine& p, double x, bool from_left) {
  for (const auto& q : p) {
    const bool inside = from_left ? (x > q.lo && x <= q.hi) : (x >= q.lo && x < q.hi);
    if (inside) return q.at(x);
  }
  return p.back().at(x);
}

inline double piece_slope(const PiecewiseAffine& p, double x) {
  for (const auto& q : p)
    if (x > q.lo && x < q.hi) return q.slope;
  return p.back().slope;
}

// First point of [lo, hi] where f(x) > g(x) + tol, using one-sided limits at
// breakpoints and asymptotic slopes at infinite ends. nullopt means f <= g.
inline std::optional<double> first_violation(const PiecewiseAffine& f, const PiecewiseAffine& g,
                                             double lo, double hi, double tol = 1e-12) {
  std::vector<double> bp{lo, hi};
  for (const auto* p : {&f, &g})
    for (const auto& q : *p)
      for (double e : {q.lo, q.hi})
        if (std::isfinite(e) && e > lo && e < hi) bp.push_back(e);
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    const double a = bp[i], b = bp[i + 1];
    const double mid = std::isfinite(a) && std::isfinite(b) ? 0.5 * (a + b)
                       : std::isfinite(a)                   ? a + 1.0
                       : std::isfinite(b)                   ? b - 1.0
                                                            : 0.0;
    const double ds = piece_slope(f, mid) - piece_slope(g, mid);
    auto diff = [&](double x, bool from_left) {
      return piece_value(f, x, from_left) - piece_value(g, x, from_left);
    };
    auto bad = [&](double v, double x) { return v > tol * (1.0 + std::abs(x)); };
    if (std::isfinite(a)) {
      if (bad(diff(a, false), a)) return a;
    } else if (ds < 0.0 || (ds == 0.0 && bad(diff(mid, false), mid))) {
      return -kInf;
    }
    if (std::isfinite(b)) {
      if (bad(diff(b, true), b)) return b;
    } else if (ds > 0.0 || (ds == 0.0 && bad(diff(mid, false), mid))) {
      return kInf;
    }
  }
  return std::nullopt;
}

}  // namespace stdpavg
