#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow.hpp"
#include "quadrature.hpp"
#include "rng.hpp"

namespace stdpavg {

struct EventStream {
  std::vector<double> times;
  std::vector<double> marks;  // empty unless requested
};

class EnvelopeViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline EventStream sample_homogeneous(double rate, double horizon, Rng& rng, bool with_marks = false) {
  if (rate < 0.0) throw std::invalid_argument("rate must be non-negative");
  EventStream s;
  if (rate == 0.0) return s;
  for (double t = rng.exponential(rate); t <= horizon; t += rng.exponential(rate)) {
    s.times.push_back(t);
    if (with_marks) s.marks.push_back(rng.uniform());
  }
  return s;
}

// First point after t0 of a Poisson process with the given intensity, by
// accepting envelope-rate candidates whose mark u satisfies u*envelope <=
// intensity. Returns nullopt when no point is accepted before the horizon.
template <class Intensity>
std::optional<double> next_jump_thinned(double envelope, Intensity&& intensity, double t0, Rng& rng,
                                        double horizon = std::numeric_limits<double>::infinity(),
                                        std::size_t max_candidates = 100'000'000) {
  if (!(envelope > 0.0)) return std::nullopt;
  double t = t0;
  for (std::size_t n = 0; n < max_candidates; ++n) {
    t += rng.exponential(envelope);
    if (t > horizon) return std::nullopt;
    const double lam = intensity(t);
    const double u = rng.uniform();
    if (lam > envelope * (1.0 + 1e-12))
      throw EnvelopeViolation("intensity " + std::to_string(lam) + " exceeds envelope " + std::to_string(envelope) +
                              " at t=" + std::to_string(t));
    if (u * envelope <= lam) return t;
  }
  return std::nullopt;
}

// S(t) = x0 e^{-t/eps} + sum_{s_i <= t} e^{-(t - s_i)/eps}, driven by a
// Poisson stream of rate lambda/eps.
struct ShotNoisePath {
  double epsilon = 1.0;
  double lambda = 1.0;
  double x0 = 0.0;
  double horizon = 0.0;
  std::vector<double> jumps;
  std::vector<double> values;  // S just after each jump, accumulated along the path

  // Exact filtered sum from the event log.
  double at(double t) const {
    double v = x0 * std::exp(-t / epsilon);
    for (double s : jumps) {
      if (s > t) break;
      v += std::exp(-(t - s) / epsilon);
    }
    return v;
  }
  // Path value from the stored post-jump values.
  double stored_at(double t) const {
    auto it = std::upper_bound(jumps.begin(), jumps.end(), t);
    if (it == jumps.begin()) return x0 * std::exp(-t / epsilon);
    const std::size_t i = static_cast<std::size_t>(it - jumps.begin()) - 1;
    return values[i] * std::exp(-(t - jumps[i]) / epsilon);
  }
};

inline ShotNoisePath simulate_shot_noise(double epsilon, double lambda, double x0, double horizon, Rng& rng) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  ShotNoisePath p;
  p.epsilon = epsilon;
  p.lambda = lambda;
  p.x0 = x0;
  p.horizon = horizon;
  p.jumps = sample_homogeneous(lambda / epsilon, horizon, rng).times;
  p.values.reserve(p.jumps.size());
  double v = x0, last = 0.0;
  for (double s : p.jumps) {
    v = v * std::exp(-(s - last) / epsilon) + 1.0;
    p.values.push_back(v);
    last = s;
  }
  return p;
}

// E[exp(xi * S(t))] for S started at 0: exp(-lambda int_0^{t/eps} (1 - exp(xi e^{-s})) ds),
// integrated in u = e^{-s} over [e^{-t/eps}, 1]. t may be +inf.
inline double shot_noise_laplace(double xi, double t, double lambda, double epsilon) {
  if (xi == 0.0 || lambda == 0.0 || t == 0.0) return 1.0;
  const double u0 = std::isinf(t) ? 0.0 : std::exp(-t / epsilon);
  auto f = [xi](double u) { return u == 0.0 ? xi : std::expm1(xi * u) / u; };
  const double I = integrate(f, u0, 1.0, 1e-10).value;
  return std::exp(lambda * I);
}

// E[S^x(t)] for the scaled shot noise.
inline double shot_noise_mean(double x, double t, double lambda, double epsilon) {
  return x * std::exp(-t / epsilon) + lambda * (-std::expm1(-t / epsilon));
}

// R jumps by one at the epochs of a stream with intensity S(t-)/eps and decays
// at rate gamma/eps; S is the shot noise above, started at 0.
struct InteractingShotNoisePath {
  ShotNoisePath s;
  double gamma = 1.0;
  std::vector<double> r_jumps;

  double S(double t) const { return s.at(t); }
  double R(double t) const {
    double v = 0.0;
    for (double u : r_jumps) {
      if (u > t) break;
      v += std::exp(-gamma * (t - u) / s.epsilon);
    }
    return v;
  }

  // J_k(t) = int_0^t exp(-k*gamma*(t-u)/eps) S(u)/eps du, exact segment by segment.
  double nested_filter(int k, double t) const {
    const double eps = s.epsilon;
    const double a = k * gamma / eps;
    double total = 0.0, start = 0.0, value = s.x0;
    auto segment = [&](double from, double to, double v) {
      // int_from^to exp(-a(t-u)) v e^{-(u-from)/eps} du / eps
      const double len = to - from;
      total += std::exp(-a * (t - to)) * v * filter_kernel(a, 1.0 / eps, len) / eps;
    };
    for (std::size_t i = 0; i < s.jumps.size() && s.jumps[i] <= t; ++i) {
      segment(start, s.jumps[i], value);
      value = s.values[i];
      start = s.jumps[i];
    }
    segment(start, t, value);
    return total;
  }

  // E[R(t)^4 | S] from the Poisson cumulants J_1..J_4.
  double conditional_fourth_moment(double t) const {
    const double j1 = nested_filter(1, t), j2 = nested_filter(2, t), j3 = nested_filter(3, t),
                 j4 = nested_filter(4, t);
    return j4 + 4.0 * j1 * j3 + 3.0 * j2 * j2 + 6.0 * j1 * j1 * j2 + j1 * j1 * j1 * j1;
  }
};

inline InteractingShotNoisePath simulate_interacting_shot_noise(double epsilon, double lambda, double gamma,
                                                                double horizon, Rng& rng) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  InteractingShotNoisePath p;
  p.gamma = gamma;
  p.s = simulate_shot_noise(epsilon, lambda, 0.0, horizon, rng);
  // Between jumps of S the intensity S/eps decays, so S at the last jump bounds it.
  double from = 0.0, level = 0.0;
  auto thin = [&](double to) {
    double t = from;
    const double env = level / epsilon;
    while (env > 0.0) {
      auto next = next_jump_thinned(
          env, [&](double u) { return level * std::exp(-(u - from) / epsilon) / epsilon; }, t, rng, to);
      if (!next) break;
      p.r_jumps.push_back(*next);
      t = *next;
    }
  };
  for (std::size_t i = 0; i < p.s.jumps.size(); ++i) {
    thin(p.s.jumps[i]);
    from = p.s.jumps[i];
    level = p.s.values[i];
  }
  thin(horizon);
  return p;
}

}  // namespace stdpavg
