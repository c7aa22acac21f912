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

/// Resolvent bilinear forms x^*(S + sigma I)^{-1} y and x^*(S - z I)^{-1} y,
/// and the centered statistics Y_n built from them.

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rmtlab/ensembles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/mp_law.hpp"

namespace rmtlab {

/// Minimum distance between a complex shift and the spectrum of S.
inline constexpr double kSpectrumClearance = 1e-8;

namespace detail {

template <class Scalar>
bool is_positive_definite(const Matrix<Scalar>& A) {
  return Eigen::LLT<Matrix<Scalar>>(A).info() == Eigen::Success;
}

// True if the real point x is at least `clearance` below lambda_min or above
// lambda_max, decided with two Cholesky attempts instead of an eigensolve.
template <class Scalar>
bool real_point_clear_of_spectrum(const Matrix<Scalar>& S, double x, double clearance) {
  const auto I = Matrix<Scalar>::Identity(S.rows(), S.cols());
  if (is_positive_definite<Scalar>(S - Scalar(x + clearance) * I)) return true;
  return is_positive_definite<Scalar>(Scalar(x - clearance) * I - S);
}

template <class Scalar>
Matrix<cplx> to_complex(const Matrix<Scalar>& S) {
  if constexpr (is_complex_v<Scalar>) {
    return S;
  } else {
    return S.template cast<cplx>();
  }
}

}  // namespace detail

/// Factorized resolvent for one shift. For sigma > 0 the matrix S + sigma I is
/// Hermitian positive definite and gets a Cholesky factorization; for complex
/// z, S - z I gets a partial-pivoting LU. Immutable after construction, so
/// concurrent solves are safe.
template <class Scalar>
class Resolvent {
 public:
  Resolvent(const Matrix<Scalar>& S, SpectralShift shift) : shift_(shift) {
    if (S.rows() != S.cols() || S.rows() == 0) throw std::invalid_argument("S must be square");
    if (!S.allFinite()) throw std::invalid_argument("S has non-finite entries");
    const auto I = Matrix<Scalar>::Identity(S.rows(), S.cols());
    if (shift.is_sigma()) {
      Eigen::LLT<Matrix<Scalar>> llt(S + Scalar(shift.sigma_value()) * I);
      if (llt.info() != Eigen::Success) {
        throw numerical_error("S + sigma I is not positive definite");
      }
      factor_ = std::move(llt);
      return;
    }
    const cplx z = shift.z();
    if (std::abs(z.imag()) < kSpectrumClearance) {
      const double remaining =
          std::sqrt(kSpectrumClearance * kSpectrumClearance - z.imag() * z.imag());
      if (!detail::real_point_clear_of_spectrum<Scalar>(S, z.real(), remaining)) {
        std::ostringstream msg;
        msg << "shift z = " << z << " is within " << kSpectrumClearance << " of the spectrum";
        throw std::domain_error(msg.str());
      }
    }
    const Matrix<cplx> A = detail::to_complex<Scalar>(S) - z * Matrix<cplx>::Identity(S.rows(), S.cols());
    factor_ = Eigen::PartialPivLU<Matrix<cplx>>(A);
  }

  SpectralShift shift() const noexcept { return shift_; }

  /// x^* R y with R the resolvent for this shift.
  cplx bilinear(const Vector<Scalar>& x, const Vector<Scalar>& y) const {
    if (const auto* llt = std::get_if<Eigen::LLT<Matrix<Scalar>>>(&factor_)) {
      const Vector<Scalar> v = llt->solve(y);
      return cplx(x.dot(v));
    }
    const auto& lu = std::get<Eigen::PartialPivLU<Matrix<cplx>>>(factor_);
    const Vector<cplx> v = lu.solve(y.template cast<cplx>());
    return x.template cast<cplx>().dot(v);
  }

  /// R y as a complex vector.
  Vector<cplx> apply(const Vector<Scalar>& y) const {
    if (const auto* llt = std::get_if<Eigen::LLT<Matrix<Scalar>>>(&factor_)) {
      return Vector<Scalar>(llt->solve(y)).template cast<cplx>();
    }
    return std::get<Eigen::PartialPivLU<Matrix<cplx>>>(factor_).solve(y.template cast<cplx>());
  }

 private:
  SpectralShift shift_;
  std::variant<Eigen::LLT<Matrix<Scalar>>, Eigen::PartialPivLU<Matrix<cplx>>> factor_;
};

template <class Scalar>
cplx bilinear_sigma(const Matrix<Scalar>& S, const Vector<Scalar>& x, const Vector<Scalar>& y,
                    double sigma) {
  return Resolvent<Scalar>(S, SpectralShift::sigma(sigma)).bilinear(x, y);
}

template <class Scalar>
cplx bilinear_z(const Matrix<Scalar>& S, const Vector<Scalar>& x, const Vector<Scalar>& y, cplx z) {
  return Resolvent<Scalar>(S, SpectralShift::at(z)).bilinear(x, y);
}

/// Centering transform m_n(sigma) or s(z, y_n) at the finite aspect ratio.
inline cplx centering_transform(SpectralShift shift, AspectRatio y_n) {
  return stieltjes(shift, y_n).value;
}

/// One evaluation of Y_n(t1, t2, shift) = sqrt(p) (x(t1)^* R x(t2) - x(t1)^* x(t2) s_n).
struct ResolventStatistic {
  AngleTuple t1;
  AngleTuple t2;
  SpectralShift shift;
  cplx raw;
  cplx centered;
  double y_n;
};

/// Grid of (t1, t2) pairs crossed with shifts. Point k has shift index
/// k / pairs and pair index k % pairs.
struct GridSpec {
  std::vector<std::pair<AngleTuple, AngleTuple>> t_pairs;
  std::vector<SpectralShift> shifts;

  std::size_t size() const noexcept { return t_pairs.size() * shifts.size(); }

  struct Point {
    const AngleTuple& t1;
    const AngleTuple& t2;
    SpectralShift shift;
  };

  Point point(std::size_t k) const {
    const auto& [t1, t2] = t_pairs.at(k % t_pairs.size());
    return {t1, t2, shifts.at(k / t_pairs.size())};
  }

  bool all_sigma() const {
    for (const auto& s : shifts) {
      if (!s.is_sigma()) return false;
    }
    return true;
  }

  void validate(std::size_t m) const {
    if (t_pairs.empty() || shifts.empty()) throw std::invalid_argument("grid is empty");
    for (const auto& [t1, t2] : t_pairs) {
      if (t1.dimension() != m || t2.dimension() != m) {
        throw std::invalid_argument("grid angle tuples do not match the frame dimension");
      }
    }
  }
};

template <class Scalar>
ResolventStatistic make_statistic(const Resolvent<Scalar>& resolvent, const Vector<Scalar>& x1,
                                  const Vector<Scalar>& x2, const AngleTuple& t1,
                                  const AngleTuple& t2, AspectRatio y_n, std::size_t p) {
  cplx raw = resolvent.bilinear(x1, x2);
  // x^*(S + sigma I)^{-1} x is real; drop the rounding residue
  if (resolvent.shift().is_sigma() && t1 == t2) raw = raw.real();
  const cplx inner = cplx(x1.dot(x2));
  const cplx s_n = centering_transform(resolvent.shift(), y_n);
  const cplx centered = std::sqrt(static_cast<double>(p)) * (raw - inner * s_n);
  return {t1, t2, resolvent.shift(), raw, centered, y_n.value()};
}

template <class Scalar>
ResolventStatistic y_stat(const SampleCovariance<Scalar>& cov, const SphereFrame<Scalar>& frame,
                          const AngleTuple& t1, const AngleTuple& t2, SpectralShift shift) {
  const Resolvent<Scalar> resolvent(cov.S, shift);
  return make_statistic(resolvent, sphere_point(frame, t1), sphere_point(frame, t2), t1, t2,
                        cov.aspect_ratio(), cov.p);
}

/// sqrt(p) (x^*Rx - m_n, x^*Ry, y^*Ry - m_n) for an orthonormal pair and real sigma.
struct ThreeQuantities {
  double xx;
  cplx xy;
  double yy;
};

template <class Scalar>
ThreeQuantities three_quantities(const SampleCovariance<Scalar>& cov, const Vector<Scalar>& x,
                                 const Vector<Scalar>& y, double sigma) {
  if (std::abs(x.dot(y)) > 1e-12) throw std::invalid_argument("x and y must be orthogonal");
  if (std::abs(x.norm() - 1.0) > 1e-12 || std::abs(y.norm() - 1.0) > 1e-12) {
    throw std::invalid_argument("x and y must be unit vectors");
  }
  const Resolvent<Scalar> resolvent(cov.S, SpectralShift::sigma(sigma));
  const double m_n = m_value(sigma, cov.aspect_ratio());
  const double root_p = std::sqrt(static_cast<double>(cov.p));
  const Vector<cplx> rx = resolvent.apply(x);
  const Vector<cplx> ry = resolvent.apply(y);
  const Vector<cplx> xc = x.template cast<cplx>();
  const Vector<cplx> yc = y.template cast<cplx>();
  return {root_p * (xc.dot(rx).real() - m_n), root_p * xc.dot(ry), root_p * (yc.dot(ry).real() - m_n)};
}

/// Evaluates the whole grid with one factorization per shift, in grid order.
template <class Scalar>
std::vector<ResolventStatistic> process_on_grid(const SampleCovariance<Scalar>& cov,
                                                const SphereFrame<Scalar>& frame,
                                                const GridSpec& grid) {
  grid.validate(frame.m());
  const AspectRatio y_n = cov.aspect_ratio();
  std::vector<Vector<Scalar>> first, second;
  first.reserve(grid.t_pairs.size());
  second.reserve(grid.t_pairs.size());
  for (const auto& [t1, t2] : grid.t_pairs) {
    first.push_back(sphere_point(frame, t1));
    second.push_back(sphere_point(frame, t2));
  }
  std::vector<ResolventStatistic> out;
  out.reserve(grid.size());
  for (const SpectralShift& shift : grid.shifts) {
    const Resolvent<Scalar> resolvent(cov.S, shift);
    for (std::size_t i = 0; i < grid.t_pairs.size(); ++i) {
      out.push_back(make_statistic(resolvent, first[i], second[i], grid.t_pairs[i].first,
                                   grid.t_pairs[i].second, y_n, cov.p));
    }
  }
  return out;
}

}  // namespace rmtlab
