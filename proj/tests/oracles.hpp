#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include "stdpavg/limit_ode.hpp"

namespace oracle {

// Coefficient sets whose discriminant has the requested sign.
inline stdpavg::LinearLimitCoefficients random_coefficients(stdpavg::BlowupCase kind, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  stdpavg::LinearLimitCoefficients c;
  c.L2 = 0.1 + 1.9 * U(gen);
  c.L1 = 0.5 + 2.5 * U(gen);
  const double crit = c.L1 * c.L1 / (4.0 * c.L2);
  switch (kind) {
    case stdpavg::BlowupCase::positive: c.L0 = crit * 0.9 * U(gen); break;
    case stdpavg::BlowupCase::zero: c.L0 = crit; break;
    case stdpavg::BlowupCase::negative: c.L0 = crit * (1.1 + U(gen)); break;
  }
  return c;
}

// max |w'(t) - Lambda(w(t))| over [0, fraction*S0], with w' from a five-point
// stencil in long double whose width shrinks with the distance to S0.
inline long double max_residual(const stdpavg::BlowupSolution& b, double fraction = 0.9, int points = 200) {
  long double worst = 0.0L;
  const long double S0 = b.S0;
  for (int i = 0; i <= points; ++i) {
    const long double t = fraction * S0 * i / points;
    const long double h = 1e-4L * (S0 - t);
    auto w = [&](long double s) { return b.value<long double>(s); };
    const long double d = (-w(t + 2 * h) + 8 * w(t + h) - 8 * w(t - h) + w(t - 2 * h)) / (12 * h);
    worst = std::max(worst, std::fabs(d - b.rhs<long double>(w(t))));
  }
  return worst;
}

// Largest |w_rk4 - w_closed| on [0, fraction*S0].
inline double max_rk4_gap(const stdpavg::BlowupSolution& b, double steps_per_window, double fraction = 0.9) {
  stdpavg::ModelSpec m = stdpavg::simple_model({});
  const auto c = b.coeffs;
  const stdpavg::PsiFn psi = [c](double w) { return std::array<double, 2>{c(w), 0.0}; };
  const auto sol = stdpavg::solve_limit_ode(m, {0.0, 0.0, b.w0}, fraction * b.S0, psi, b.S0 / steps_per_window, 1e300);
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.t.size(); ++k) worst = std::max(worst, std::abs(sol.w[k] - b(sol.t[k])));
  return worst;
}

}  // namespace oracle
