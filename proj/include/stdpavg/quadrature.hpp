#pragma once

#include <cmath>
#include <stdexcept>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace stdpavg {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

// Adaptive 15-point Gauss-Kronrod on [a, b]; either limit may be infinite.
// Throws unless the error estimate is within abs_tol (or, for large
// integrands, a relative 1e-12 of the L1 norm).
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double abs_tol = 1e-10) {
  if (a == b) return {};
  double err = 0.0, l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 20, 1e-12, &err, &l1);
  if (!std::isfinite(v) || !(err <= abs_tol || err <= 1e-12 * l1))
  {
    std::ostringstream msg;
    msg << "quadrature on [" << a << ", " << b << "] did not converge: error estimate " << err
        << ", tolerance " << abs_tol;
    throw QuadratureError(msg.str());
  }
  return {v, err};
}

}  // namespace stdpavg
