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

/// Covariance kernels W of the limiting processes, the ϑ-multipliers of the
/// sphere family, and the covariance functionals of linear spectral
/// statistics (direct MP integral and double contour integral).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rmtlab/angles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/mp_law.hpp"

namespace rmtlab {

/// Named expressions for W. The source material prints forms that disagree;
/// DividedDifference is the one that matches the MP covariance functional.
enum class KernelForm { DividedDifference, Theorem1Display, Section4Derived, Theorem2Display };

inline constexpr std::array<KernelForm, 4> all_kernel_forms{
    KernelForm::DividedDifference, KernelForm::Theorem1Display, KernelForm::Section4Derived,
    KernelForm::Theorem2Display};

inline std::string_view to_string(KernelForm form) {
  switch (form) {
    case KernelForm::DividedDifference: return "DividedDifference";
    case KernelForm::Theorem1Display: return "Theorem1Display";
    case KernelForm::Section4Derived: return "Section4Derived";
    case KernelForm::Theorem2Display: return "Theorem2Display";
  }
  return "?";
}

inline KernelForm parse_kernel_form(std::string_view name) {
  for (KernelForm f : all_kernel_forms) {
    if (to_string(f) == name) return f;
  }
  throw std::invalid_argument("unknown kernel form: " + std::string(name));
}

enum class CovarianceCase { Real, Complex };

inline std::string_view to_string(CovarianceCase c) {
  return c == CovarianceCase::Real ? "real" : "complex";
}

inline CovarianceCase parse_covariance_case(std::string_view name) {
  if (name == "real") return CovarianceCase::Real;
  if (name == "complex") return CovarianceCase::Complex;
  throw std::invalid_argument("unknown covariance case: " + std::string(name));
}

namespace detail {

// Below this separation the literal divided difference loses digits to
// cancellation; the algebraically equal product form is used instead.
inline constexpr double kNearCoincident = 1e-3;

// (s1 - s2) / (z1 - z2) written through z = 1/(1 + y s) - 1/s.
template <class T>
T divided_difference_product_form(T s1, T s2, double y) {
  const T p = (1.0 + y * s1) * (1.0 + y * s2);
  return s1 * s2 * p / (p - y * s1 * s2);
}

}  // namespace detail

/// W(sigma1, sigma2) under the requested form.
///
/// DividedDifference: (m2 - m1)/(sigma1 - sigma2) - m1 m2, with the diagonal
/// evaluated as -m'(sigma) - m(sigma)^2.
inline double w_sigma(double sigma1, double sigma2, AspectRatio ratio,
                      KernelForm form = KernelForm::DividedDifference) {
  const double y = ratio.value();
  const double m1 = m_value(sigma1, ratio);
  const double m2 = m_value(sigma2, ratio);
  switch (form) {
    case KernelForm::DividedDifference: {
      if (sigma1 == sigma2) return -m_derivative(sigma1, ratio) - m1 * m1;
      const double gap = std::abs(sigma1 - sigma2);
      if (gap < detail::kNearCoincident * std::max(1.0, std::max(sigma1, sigma2))) {
        return detail::divided_difference_product_form(m1, m2, y) - m1 * m2;
      }
      return (m2 - m1) / (sigma1 - sigma2) - m1 * m2;
    }
    case KernelForm::Theorem1Display:
    case KernelForm::Theorem2Display:
      // The Theorem 2 expression at z = -sigma coincides with Theorem 1's.
      return y * m1 * m2 / (1.0 - y * (1.0 - sigma1 * m1) * (1.0 - sigma2 * m2));
    case KernelForm::Section4Derived: {
      const double b1 = 1.0 / (1.0 + y * m1);
      const double b2 = 1.0 / (1.0 + y * m2);
      const double d1 = sigma1 + b1;
      const double d2 = sigma2 + b2;
      return y * b1 * b2 / (d1 * d2 * (d1 * d2 - y * b1 * b2));
    }
  }
  throw std::invalid_argument("unknown kernel form");
}

/// DividedDifference / Theorem1Display = (1 - sigma1 m1)(1 - sigma2 m2).
inline double theorem1_factor(double sigma1, double sigma2, AspectRatio ratio) {
  return (1.0 - sigma1 * m_value(sigma1, ratio)) * (1.0 - sigma2 * m_value(sigma2, ratio));
}

/// W(z1, z2) for shifts off the support; a sigma shift enters as z = -sigma.
inline cplx w_z(SpectralShift shift1, SpectralShift shift2, AspectRatio ratio,
                KernelForm form = KernelForm::DividedDifference) {
  const double y = ratio.value();
  const cplx z1 = shift1.z();
  const cplx z2 = shift2.z();
  const cplx s1 = stieltjes(shift1, ratio).value;
  const cplx s2 = stieltjes(shift2, ratio).value;
  switch (form) {
    case KernelForm::DividedDifference: {
      if (z1 == z2) return stieltjes_derivative(shift1, ratio) - s1 * s1;
      const double gap = std::abs(z1 - z2);
      if (gap < detail::kNearCoincident * std::max(1.0, std::max(std::abs(z1), std::abs(z2)))) {
        return detail::divided_difference_product_form(s1, s2, y) - s1 * s2;
      }
      return (s1 - s2) / (z1 - z2) - s1 * s2;
    }
    case KernelForm::Theorem1Display:
    case KernelForm::Theorem2Display:
      return y * s1 * s2 / (1.0 - y * (1.0 + z1 * s1) * (1.0 + z2 * s2));
    case KernelForm::Section4Derived: {
      const cplx b1 = 1.0 / (1.0 + y * s1);
      const cplx b2 = 1.0 / (1.0 + y * s2);
      const cplx d1 = -z1 + b1;
      const cplx d2 = -z2 + b2;
      return y * b1 * b2 / (d1 * d2 * (d1 * d2 - y * b1 * b2));
    }
  }
  throw std::invalid_argument("unknown kernel form");
}

/// Limiting covariance E Y(t1,t2,.) Y(t3,t4,.) given the ϑ multipliers and W.
/// The complex case uses ϑ(t1,t4)ϑ(t3,t2); the real case adds ϑ(t1,t3)ϑ(t4,t2).
template <class T>
T cov_process(T theta14, T theta32, T theta13, T theta42, T w, CovarianceCase c) {
  if (c == CovarianceCase::Complex) return theta14 * theta32 * w;
  return (theta14 * theta32 + theta13 * theta42) * w;
}

/// Limiting inner product x(t)^* x(s) of two sphere-family vectors, which
/// depends only on the angles:
/// cos t1 cos s1 + sin t1 sin s1 (cos t2 cos s2 + sin t2 sin s2 (...)).
inline double theta(const AngleTuple& t, const AngleTuple& s) {
  require_same_dimension(t, s);
  const std::size_t m = t.dimension();
  if (m == 0) return 1.0;
  double acc = std::cos(t[m - 1] - s[m - 1]);
  for (std::size_t k = m - 1; k-- > 0;) {
    acc = std::cos(t[k]) * std::cos(s[k]) + std::sin(t[k]) * std::sin(s[k]) * acc;
  }
  return acc;
}

/// ϑ-multiplier for the covariance of statistics indexed by u = (t1, t2) and
/// v = (t3, t4). The real case uses the unprimed two-term combination.
inline double theta_multiplier(const AngleTuple& t1, const AngleTuple& t2, const AngleTuple& t3,
                               const AngleTuple& t4, CovarianceCase c) {
  return cov_process(theta(t1, t4), theta(t3, t2), theta(t1, t3), theta(t4, t2), 1.0, c);
}

using RealFunction = std::function<double(double)>;
using AnalyticFunction = std::function<cplx(cplx)>;

/// theta * (∫ f g dF_y - ∫ f dF_y ∫ g dF_y).
inline double lss_cov(const RealFunction& f, const RealFunction& g, double theta_mult,
                      AspectRatio ratio) {
  const double fg = mp_integral([&](double x) { return f(x) * g(x); }, ratio);
  const double ef = mp_integral(f, ratio);
  const double eg = mp_integral(g, ratio);
  return theta_mult * (fg - ef * eg);
}

/// Axis-aligned rectangle traversed counterclockwise.
struct Rectangle {
  cplx lower_left;
  cplx upper_right;

  bool strictly_contains(const Rectangle& inner) const {
    return lower_left.real() < inner.lower_left.real() &&
           lower_left.imag() < inner.lower_left.imag() &&
           upper_right.real() > inner.upper_right.real() &&
           upper_right.imag() > inner.upper_right.imag();
  }

  bool encloses_interval(double lo, double hi) const {
    return lower_left.real() < lo && upper_right.real() > hi && lower_left.imag() < 0.0 &&
           upper_right.imag() > 0.0;
  }
};

struct ContourSpec {
  std::size_t nodes_per_side = 256;
  std::size_t max_nodes_per_side = 4096;
  double tolerance = 1e-8;
  /// Explicit contours; when absent the default rectangles are used.
  std::optional<std::pair<Rectangle, Rectangle>> contours;
};

/// Interval the contours must enclose: [a, b], widened to 0 when y > 1 so the
/// atom of F_y lies inside as well.
inline std::pair<double, double> enclosed_interval(AspectRatio ratio) {
  const MpLaw law(ratio);
  return {law.atom_at_zero > 0.0 ? 0.0 : law.a, law.b};
}

/// Rectangle with corners (lo - d) ± i d, (hi + d) ± i d, d = max(0.5, 0.1 (b - a)),
/// and its copy scaled by 1.5 about the interval midpoint.
inline std::pair<Rectangle, Rectangle> default_contours(AspectRatio ratio) {
  const MpLaw law(ratio);
  const auto [lo, hi] = enclosed_interval(ratio);
  const double d = std::max(0.5, 0.1 * (law.b - law.a));
  const double mid = 0.5 * (lo + hi);
  const double half_width = 0.5 * (hi - lo) + d;
  auto scaled = [&](double k) {
    return Rectangle{cplx(mid - k * half_width, -k * d), cplx(mid + k * half_width, k * d)};
  };
  return {scaled(1.0), scaled(1.5)};
}

/// Trapezoid nodes and complex weights (dz) for a counterclockwise rectangle.
struct ContourNodes {
  std::vector<cplx> z;
  std::vector<cplx> dz;
};

inline ContourNodes rectangle_nodes(const Rectangle& r, std::size_t per_side) {
  const std::array<cplx, 4> corners{r.lower_left, cplx(r.upper_right.real(), r.lower_left.imag()),
                                    r.upper_right, cplx(r.lower_left.real(), r.upper_right.imag())};
  ContourNodes nodes;
  nodes.z.reserve(4 * per_side);
  nodes.dz.reserve(4 * per_side);
  const double n = static_cast<double>(per_side);
  for (std::size_t side = 0; side < 4; ++side) {
    const cplx start = corners[side];
    const cplx h = (corners[(side + 1) % 4] - start) / n;
    const cplx h_prev = (start - corners[(side + 3) % 4]) / n;
    for (std::size_t k = 0; k < per_side; ++k) {
      nodes.z.push_back(start + static_cast<double>(k) * h);
      nodes.dz.push_back(k == 0 ? 0.5 * (h + h_prev) : h);
    }
  }
  return nodes;
}

/// One composite-trapezoid evaluation of ∮∮ W(z1,z2) f(z1) g(z2) dz1 dz2 with
/// the divided-difference kernel.
inline cplx contour_double_integral(const AnalyticFunction& f, const AnalyticFunction& g,
                                    AspectRatio ratio, const Rectangle& c1, const Rectangle& c2,
                                    std::size_t per_side) {
  const ContourNodes n1 = rectangle_nodes(c1, per_side);
  const ContourNodes n2 = rectangle_nodes(c2, per_side);
  const std::size_t k1 = n1.z.size();
  const std::size_t k2 = n2.z.size();
  std::vector<cplx> s1(k1), a(k1), s2(k2), b(k2);
  for (std::size_t i = 0; i < k1; ++i) {
    s1[i] = stieltjes(SpectralShift::at(n1.z[i]), ratio).value;
    a[i] = n1.dz[i] * f(n1.z[i]);
  }
  for (std::size_t j = 0; j < k2; ++j) {
    s2[j] = stieltjes(SpectralShift::at(n2.z[j]), ratio).value;
    b[j] = n2.dz[j] * g(n2.z[j]);
  }
  // W = (s1 - s2)/(z1 - z2) - s1 s2; the product term factorizes.
  cplx sum_a(0.0), sum_b(0.0);
  for (std::size_t i = 0; i < k1; ++i) sum_a += a[i] * s1[i];
  for (std::size_t j = 0; j < k2; ++j) sum_b += b[j] * s2[j];
  cplx dd(0.0);
  for (std::size_t i = 0; i < k1; ++i) {
    cplx row(0.0);
    for (std::size_t j = 0; j < k2; ++j) {
      row += b[j] * (s1[i] - s2[j]) / (n1.z[i] - n2.z[j]);
    }
    dd += a[i] * row;
  }
  return dd - sum_a * sum_b;
}

/// Result of the contour route together with its convergence record.
struct ContourResult {
  double value;
  std::size_t nodes_per_side;
  double last_change;
};

/// -theta/(4 pi^2) ∮∮ W(z1,z2) f(z1) g(z2) dz1 dz2 over two disjoint
/// counterclockwise contours enclosing the support, by composite trapezoid
/// with Richardson extrapolation over node doublings.
inline ContourResult lss_cov_contour_detailed(const AnalyticFunction& f, const AnalyticFunction& g,
                                              double theta_mult, AspectRatio ratio,
                                              const ContourSpec& spec = {}) {
  const auto [c1, c2] = spec.contours.value_or(default_contours(ratio));
  const auto [lo, hi] = enclosed_interval(ratio);
  if (!c1.encloses_interval(lo, hi) || !c2.encloses_interval(lo, hi)) {
    std::ostringstream msg;
    msg << "contours must enclose [" << lo << ", " << hi << "] without touching it";
    throw std::invalid_argument(msg.str());
  }
  if (!c1.strictly_contains(c2) && !c2.strictly_contains(c1)) {
    throw std::invalid_argument("contours intersect each other");
  }
  if (spec.nodes_per_side < 2) throw std::invalid_argument("need at least 2 nodes per side");

  const double scale = -theta_mult / (4.0 * std::numbers::pi * std::numbers::pi);
  // Romberg table over doublings; the trapezoid error expands in h^2, h^4, ...
  std::vector<std::vector<double>> table;
  std::size_t n = spec.nodes_per_side;
  double change = std::numeric_limits<double>::infinity();
  while (true) {
    const double t = scale * contour_double_integral(f, g, ratio, c1, c2, n).real();
    std::vector<double> row{t};
    if (!table.empty()) {
      const auto& prev = table.back();
      for (std::size_t j = 1; j <= prev.size(); ++j) {
        const double factor = std::pow(4.0, static_cast<double>(j)) - 1.0;
        row.push_back(row[j - 1] + (row[j - 1] - prev[j - 1]) / factor);
      }
      change = std::abs(row.back() - prev.back());
    }
    table.push_back(std::move(row));
    const double best = table.back().back();
    if (change < spec.tolerance * std::max(1.0, std::abs(best))) return {best, n, change};
    if (2 * n > spec.max_nodes_per_side) {
      std::ostringstream msg;
      msg << "contour quadrature did not converge: last change " << change << " at " << n
          << " nodes per side";
      throw numerical_error(msg.str());
    }
    n *= 2;
  }
}

inline double lss_cov_contour(const AnalyticFunction& f, const AnalyticFunction& g,
                              double theta_mult, AspectRatio ratio, const ContourSpec& spec = {}) {
  return lss_cov_contour_detailed(f, g, theta_mult, ratio, spec).value;
}

}  // namespace rmtlab
