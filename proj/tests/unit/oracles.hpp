/*
 * Copyright 2026 The rmtlab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Reference computations for the unit tests. They deliberately avoid the
// library's own integrator: the density is integrated on x directly with
// double-exponential quadrature, and the atom is added by hand.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

using cplx = std::complex<double>;

inline double edge_lo(double y) { return (1.0 - std::sqrt(y)) * (1.0 - std::sqrt(y)); }
inline double edge_hi(double y) { return (1.0 + std::sqrt(y)) * (1.0 + std::sqrt(y)); }

inline double mp_pdf(double x, double y) {
  const double a = edge_lo(y), b = edge_hi(y);
  if (x <= a || x >= b) return 0.0;
  return std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * x * y);
}

/// ∫ f dF_y including the atom 1 - 1/y at zero for y > 1.
inline double integrate(const std::function<double(double)>& f, double y) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double a = edge_lo(y), b = edge_hi(y);
  const double body = ts.integrate([&](double x) { return f(x) * mp_pdf(x, y); }, a, b, 1e-13);
  const double atom = y > 1.0 ? (1.0 - 1.0 / y) * f(0.0) : 0.0;
  return body + atom;
}

/// F_y(x) by integrating the density up to x.
inline double cdf(double x, double y) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double a = edge_lo(y), b = edge_hi(y);
  double value = (y > 1.0 && x >= 0.0) ? 1.0 - 1.0 / y : 0.0;
  if (x <= a) return value;
  if (x >= b) return 1.0;
  return value + ts.integrate([&](double t) { return mp_pdf(t, y); }, a, x, 1e-13);
}

inline cplx integrate_complex(const std::function<cplx(double)>& f, double y) {
  return {integrate([&](double x) { return f(x).real(); }, y),
          integrate([&](double x) { return f(x).imag(); }, y)};
}

/// ∫ dF_y(x) / (x - z).
inline cplx stieltjes(cplx z, double y) {
  return integrate_complex([z](double x) { return 1.0 / (x - z); }, y);
}

inline double m(double sigma, double y) {
  return integrate([sigma](double x) { return 1.0 / (x + sigma); }, y);
}

/// ∫ dF/((x+s1)(x+s2)) - m(s1) m(s2).
inline double kernel(double s1, double s2, double y) {
  return integrate([&](double x) { return 1.0 / ((x + s1) * (x + s2)); }, y) - m(s1, y) * m(s2, y);
}

inline cplx kernel_z(cplx z1, cplx z2, double y) {
  return integrate_complex([&](double x) { return 1.0 / ((x - z1) * (x - z2)); }, y) -
         stieltjes(z1, y) * stieltjes(z2, y);
}

}  // namespace oracle
