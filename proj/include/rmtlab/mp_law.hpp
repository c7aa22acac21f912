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

/// Marchenko-Pastur law: support, density, Stieltjes transforms and an
/// integrator for functionals of the law (atom at zero included).

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "rmtlab/errors.hpp"

namespace rmtlab {

using cplx = std::complex<double>;

/// Dimension-to-sample ratio y = p/n of the limiting law.
class AspectRatio {
 public:
  explicit AspectRatio(double y) : y_(y) {
    if (!std::isfinite(y) || y <= 0.0) {
      std::ostringstream msg;
      msg << "aspect ratio must be positive and finite, got " << y;
      throw std::invalid_argument(msg.str());
    }
  }

  static AspectRatio from_dimensions(std::size_t p, std::size_t n) {
    if (p == 0 || n == 0) throw std::invalid_argument("p and n must be positive");
    return AspectRatio(static_cast<double>(p) / static_cast<double>(n));
  }

  double value() const noexcept { return y_; }

 private:
  double y_;
};

struct Support {
  double lower;
  double upper;
};

inline Support support(AspectRatio ratio) {
  const double r = std::sqrt(ratio.value());
  return {(1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r)};
}

/// The limiting spectral law for a given aspect ratio.
struct MpLaw {
  AspectRatio y;
  double a;
  double b;
  double atom_at_zero;

  explicit MpLaw(AspectRatio ratio)
      : y(ratio),
        a(support(ratio).lower),
        b(support(ratio).upper),
        atom_at_zero(ratio.value() > 1.0 ? 1.0 - 1.0 / ratio.value() : 0.0) {}
};

/// Continuous part of the MP density. The atom at zero is not included.
inline double density(double x, AspectRatio ratio) {
  const auto [a, b] = support(ratio);
  if (!(x > a && x < b)) return 0.0;
  return std::sqrt((b - x) * (x - a)) / (2.0 * std::numbers::pi * x * ratio.value());
}

/// A transform value plus the absolute residual of the defining quadratic.
struct StieltjesValue {
  cplx value;
  double residual;

  double real() const noexcept { return value.real(); }
};

/// Residual of m(1 + sigma - y + y sigma m) - 1.
inline double sigma_quadratic_residual(double m, double sigma, double y) {
  return std::abs(m * (1.0 + sigma - y + y * sigma * m) - 1.0);
}

/// Residual of y z s^2 + (z + y - 1) s + 1.
inline double z_quadratic_residual(cplx s, cplx z, double y) {
  return std::abs(y * z * s * s + (z + y - 1.0) * s + 1.0);
}

namespace detail {

inline void require_positive_sigma(double sigma) {
  if (!std::isfinite(sigma) || sigma <= 0.0) {
    std::ostringstream msg;
    msg << "shift sigma must be positive and finite, got " << sigma;
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace detail

/// m(sigma) = integral of dF_y(x)/(x + sigma), the root of
/// m(1 + sigma - y + y sigma m) = 1 that vanishes as sigma grows.
inline double m_value(double sigma, AspectRatio ratio) {
  detail::require_positive_sigma(sigma);
  const double y = ratio.value();
  const auto [a, b] = support(ratio);
  const double lin = 1.0 + sigma - y;
  // (1 + y + sigma)^2 - 4y factored to avoid cancellation near the edges.
  const double root = std::sqrt((sigma + a) * (sigma + b));
  if (lin >= 0.0) return 2.0 / (lin + root);
  return (root - lin) / (2.0 * y * sigma);
}

inline StieltjesValue m_sigma(double sigma, AspectRatio ratio) {
  const double m = m_value(sigma, ratio);
  return {cplx(m, 0.0), sigma_quadratic_residual(m, sigma, ratio.value())};
}

/// dm/dsigma from implicit differentiation of the quadratic.
inline double m_derivative(double sigma, AspectRatio ratio) {
  const double y = ratio.value();
  const double m = m_value(sigma, ratio);
  return -m * (1.0 + y * m) / (1.0 + sigma - y + 2.0 * y * sigma * m);
}

/// b(sigma) = 1 / (1 + y m(sigma)).
inline double b_of_sigma(double sigma, AspectRatio ratio) {
  return 1.0 / (1.0 + ratio.value() * m_value(sigma, ratio));
}

/// Argument of a resolvent: either S + sigma I with sigma > 0, or S - z I.
class SpectralShift {
 public:
  enum class Kind { Sigma, Z };

  static SpectralShift sigma(double s) {
    detail::require_positive_sigma(s);
    return SpectralShift(Kind::Sigma, cplx(-s, 0.0));
  }

  static SpectralShift at(cplx z) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
      throw std::invalid_argument("spectral shift must be finite");
    }
    return SpectralShift(Kind::Z, z);
  }

  Kind kind() const noexcept { return kind_; }
  bool is_sigma() const noexcept { return kind_ == Kind::Sigma; }

  double sigma_value() const {
    if (!is_sigma()) throw std::logic_error("shift is not a real sigma");
    return -z_.real();
  }

  /// The point z of S - z I; equals -sigma for the real branch.
  cplx z() const noexcept { return z_; }

  SpectralShift conj() const noexcept { return SpectralShift(kind_, std::conj(z_)); }

  bool operator==(const SpectralShift&) const = default;

 private:
  SpectralShift(Kind k, cplx z) : kind_(k), z_(z) {}

  Kind kind_;
  cplx z_;
};

namespace detail {

// Picks the root (-B + w) / (2A) of A s^2 + B s + 1 = 0 using whichever of
// the two algebraically equal expressions avoids cancellation.
inline cplx stable_root(cplx A, cplx B, cplx w) {
  const cplx num = -B + w;
  const cplx other = -B - w;
  if (std::abs(num) >= std::abs(other)) return num / (2.0 * A);
  return 2.0 / other;
}

}  // namespace detail

/// Stieltjes transform s(z) = integral of dF_y(x)/(x - z).
///
/// Off the real axis the square root takes the branch with positive imaginary
/// part and is multiplied by sgn(Im z). Real z outside the support is the
/// limit from the upper half plane; real z inside [a, b] is rejected.
inline StieltjesValue stieltjes(SpectralShift shift, AspectRatio ratio) {
  const double y = ratio.value();
  if (shift.is_sigma()) return m_sigma(shift.sigma_value(), ratio);

  const cplx z = shift.z();
  const auto [a, b] = support(ratio);
  const cplx A = y * z;
  const cplx B = z + y - 1.0;
  const cplx delta = (z - a) * (z - b);
  cplx s;
  if (z.imag() != 0.0) {
    cplx w = std::sqrt(delta);
    if (w.imag() < 0.0) w = -w;
    if (z.imag() < 0.0) w = -w;
    s = detail::stable_root(A, B, w);
  } else {
    const double x = z.real();
    if (x >= a && x <= b) {
      std::ostringstream msg;
      msg << "real shift " << x << " lies inside the support [" << a << ", " << b << "]";
      throw std::domain_error(msg.str());
    }
    if (x == 0.0) {
      if (y >= 1.0) throw std::domain_error("s(0) is singular for y >= 1");
      return {cplx(1.0 / (1.0 - y), 0.0), 0.0};
    }
    const double w = std::sqrt((x - a) * (x - b));
    s = detail::stable_root(A, B, cplx(x > b ? w : -w, 0.0));
    s = cplx(s.real(), 0.0);
  }
  return {s, z_quadratic_residual(s, z, y)};
}

/// ds/dz from implicit differentiation of y z s^2 + (z + y - 1) s + 1 = 0.
inline cplx stieltjes_derivative(SpectralShift shift, AspectRatio ratio) {
  const double y = ratio.value();
  const cplx z = shift.z();
  const cplx s = stieltjes(shift, ratio).value;
  return -(y * s * s + s) / (2.0 * y * z * s + z + y - 1.0);
}

/// Value and error estimate of an integral against the MP law.
struct IntegralResult {
  double value;
  double error_estimate;
};

/// Absolute accuracy declared by mp_integrate for a given aspect ratio. The
/// hard edge at y = 1 gets a looser bound.
inline double mp_declared_tolerance(AspectRatio ratio) {
  return std::abs(ratio.value() - 1.0) < 1e-3 ? 1e-8 : 1e-10;
}

/// Integral of f against F_y: quadrature over (a, b) plus atom_at_zero * f(0).
///
/// Uses x = a + (b - a) sin^2(v), v in [0, pi/2], which turns the square-root
/// edges into a smooth integrand (and keeps the 1/x factor bounded at y = 1).
inline IntegralResult mp_integrate(const std::function<double(double)>& f, AspectRatio ratio) {
  const MpLaw law(ratio);
  const double y = ratio.value();
  const double width = law.b - law.a;
  auto integrand = [&](double v) {
    const double sv = std::sin(v);
    const double cv = std::cos(v);
    const double x = law.a + width * sv * sv;
    const double fx = f(x);
    if (!std::isfinite(fx)) {
      std::ostringstream msg;
      msg << "integrand is not finite at x = " << x;
      throw std::domain_error(msg.str());
    }
    // density(x) dx = (b - a)^2 sin^2 cos^2 / (pi y x) dv
    return fx * width * width * sv * sv * cv * cv / (std::numbers::pi * y * x);
  };
  double error = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, std::numbers::pi / 2.0, 20, 1e-14, &error);
  if (law.atom_at_zero > 0.0) {
    const double f0 = f(0.0);
    if (!std::isfinite(f0)) throw std::domain_error("integrand is not finite at the atom x = 0");
    value += law.atom_at_zero * f0;
  }
  // absolute for O(1) integrals, relative beyond that
  const double allowed = mp_declared_tolerance(ratio) * std::max(1.0, std::abs(value));
  if (!(error <= allowed)) {
    std::ostringstream msg;
    msg << "MP quadrature error estimate " << error << " exceeds tolerance " << allowed;
    throw numerical_error(msg.str());
  }
  return {value, error};
}

inline double mp_integral(const std::function<double(double)>& f, AspectRatio ratio) {
  return mp_integrate(f, ratio).value;
}

/// Distribution function F_y(x), atom included.
inline double mp_cdf(double x, AspectRatio ratio) {
  const MpLaw law(ratio);
  double value = x >= 0.0 ? law.atom_at_zero : 0.0;
  if (x <= law.a) return value;
  if (x >= law.b) return 1.0;
  const double width = law.b - law.a;
  const double y = ratio.value();
  const double v_end = std::asin(std::sqrt((x - law.a) / width));
  auto integrand = [&](double v) {
    const double sv = std::sin(v);
    const double cv = std::cos(v);
    const double t = law.a + width * sv * sv;
    return width * width * sv * sv * cv * cv / (std::numbers::pi * y * t);
  };
  value += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, v_end, 20,
                                                                         1e-14);
  return std::min(value, 1.0);
}

/// Complex-valued integrand, integrated as real and imaginary parts.
inline cplx mp_integral_complex(const std::function<cplx(double)>& f, AspectRatio ratio) {
  const double re = mp_integral([&](double x) { return f(x).real(); }, ratio);
  const double im = mp_integral([&](double x) { return f(x).imag(); }, ratio);
  return {re, im};
}

}  // namespace rmtlab
