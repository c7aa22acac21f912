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

/// Data matrices with i.i.d. standardized entries, the sample covariance
/// S = X X^* / n, truncation of general entry laws, and the sphere family of
/// unit vectors built on an orthonormal frame.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>

#include <Eigen/Dense>

#include "rmtlab/angles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/random.hpp"

namespace rmtlab {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
inline constexpr bool is_complex_v = !std::is_same_v<Scalar, double>;

/// Scalar type of the data for each covariance case.
template <CovarianceCase C>
using scalar_for = std::conditional_t<C == CovarianceCase::Real, double, cplx>;

/// A user-supplied real base distribution, identified by name for caching.
struct BaseSampler {
  std::string name;
  std::function<double(Engine&)> draw;

  static BaseSampler gaussian() {
    return {"gaussian", [](Engine& e) { return std::normal_distribution<double>()(e); }};
  }

  static BaseSampler uniform() {
    return {"uniform", [](Engine& e) {
              const double r = std::sqrt(3.0);
              return std::uniform_real_distribution<double>(-r, r)(e);
            }};
  }

  /// Student t with nu degrees of freedom rescaled to unit variance (nu > 2).
  static BaseSampler student_t(double nu) {
    if (!(nu > 2.0)) throw std::invalid_argument("student t needs nu > 2 for unit variance");
    std::ostringstream name;
    name << "student_t(" << nu << ")";
    const double scale = std::sqrt((nu - 2.0) / nu);
    return {name.str(), [nu, scale](Engine& e) {
              return scale * std::student_t_distribution<double>(nu)(e);
            }};
  }
};

/// Distribution of the entries X_ij.
class EntryLaw {
 public:
  enum class Kind { RealGaussian, ComplexGaussian, TruncatedGeneral };

  static EntryLaw real_gaussian() { return EntryLaw(Kind::RealGaussian); }
  static EntryLaw complex_gaussian() { return EntryLaw(Kind::ComplexGaussian); }

  /// Base values clamped to [-clamp, clamp], then mapped by (x - shift) / scale.
  static EntryLaw truncated(BaseSampler base, double clamp, double shift, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("truncated law needs a positive scale");
    EntryLaw law(Kind::TruncatedGeneral);
    law.base_ = std::move(base);
    law.clamp_ = clamp;
    law.shift_ = shift;
    law.scale_ = scale;
    return law;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_complex() const noexcept { return kind_ == Kind::ComplexGaussian; }
  CovarianceCase covariance_case() const noexcept {
    return is_complex() ? CovarianceCase::Complex : CovarianceCase::Real;
  }

  double clamp() const noexcept { return clamp_; }
  double shift() const noexcept { return shift_; }
  double scale() const noexcept { return scale_; }

  /// Largest attainable |X| after standardization.
  double bound() const noexcept {
    if (kind_ != Kind::TruncatedGeneral) return std::numeric_limits<double>::infinity();
    return (clamp_ + std::abs(shift_)) / scale_;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::RealGaussian: return "real_gaussian";
      case Kind::ComplexGaussian: return "complex_gaussian";
      case Kind::TruncatedGeneral: return "truncated:" + base_.name;
    }
    return "?";
  }

  template <class Scalar>
  Scalar draw(Engine& engine) const {
    if constexpr (is_complex_v<Scalar>) {
      if (kind_ != Kind::ComplexGaussian) throw std::logic_error("real law used for complex data");
      std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
      const double re = normal(engine);
      const double im = normal(engine);
      return {re, im};
    } else {
      switch (kind_) {
        case Kind::RealGaussian: return std::normal_distribution<double>()(engine);
        case Kind::TruncatedGeneral: {
          const double v = std::clamp(base_.draw(engine), -clamp_, clamp_);
          return (v - shift_) / scale_;
        }
        case Kind::ComplexGaussian: break;
      }
      throw std::logic_error("complex law used for real data");
    }
  }

 private:
  explicit EntryLaw(Kind k) : kind_(k) {}

  Kind kind_;
  BaseSampler base_;
  double clamp_ = std::numeric_limits<double>::infinity();
  double shift_ = 0.0;
  double scale_ = 1.0;
};

/// Default truncation schedule eps_n = n^(-1/8).
inline double default_truncation_epsilon(std::size_t n) {
  return std::pow(static_cast<double>(n), -0.125);
}

inline constexpr std::size_t kStandardizationDraws = 1'000'000;

/// Stream used to estimate standardization constants for a base law.
inline StreamKey standardization_key(const std::string& base_name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a, stable across standard libraries
  for (unsigned char c : base_name) h = (h ^ c) * 0x100000001b3ULL;
  return StreamKey(h).child(0x7374616eULL);
}

/// Truncates base draws at eps * n^(1/4) and renormalizes to mean 0 and
/// variance 1. The constants come from kStandardizationDraws draws on a fixed
/// stream and are cached per (base, n, eps).
inline EntryLaw truncate_standardize(const BaseSampler& base, std::size_t n, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("eps_n must be positive");
  if (n == 0) throw std::invalid_argument("n must be positive");
  const double clamp = eps * std::pow(static_cast<double>(n), 0.25);

  static std::mutex cache_mutex;
  static std::map<std::tuple<std::string, std::size_t, double>, std::pair<double, double>> cache;
  const auto key = std::make_tuple(base.name, n, eps);
  {
    std::lock_guard lock(cache_mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      return EntryLaw::truncated(base, clamp, it->second.first, it->second.second);
    }
  }

  Engine engine = standardization_key(base.name).engine();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < kStandardizationDraws; ++i) {
    const double v = std::clamp(base.draw(engine), -clamp, clamp);
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(kStandardizationDraws);
  if (!(var > 0.0)) throw std::domain_error("truncated base law is degenerate (variance 0)");
  const double sd = std::sqrt(var);
  {
    std::lock_guard lock(cache_mutex);
    cache.emplace(key, std::make_pair(mean, sd));
  }
  return EntryLaw::truncated(base, clamp, mean, sd);
}

/// p x n matrix of i.i.d. entries; column j uses the substream key.child(j).
template <class Scalar>
Matrix<Scalar> sample_matrix(const EntryLaw& law, std::size_t p, std::size_t n, StreamKey key) {
  if (p == 0 || n == 0) throw std::invalid_argument("sample_matrix needs p, n >= 1");
  if (law.is_complex() != is_complex_v<Scalar>) {
    throw std::invalid_argument("entry law " + law.name() + " does not match the scalar type");
  }
  Matrix<Scalar> X(p, n);
  for (std::size_t j = 0; j < n; ++j) {
    Engine engine = key.child(j).engine();
    for (std::size_t i = 0; i < p; ++i) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = law.draw<Scalar>(engine);
    }
  }
  return X;
}

template <class Scalar>
struct SampleCovariance {
  std::size_t p;
  std::size_t n;
  Matrix<Scalar> S;

  double y_n() const noexcept { return static_cast<double>(p) / static_cast<double>(n); }
  AspectRatio aspect_ratio() const { return AspectRatio::from_dimensions(p, n); }
};

/// S = X X^* / n, assembled from its lower triangle so it is exactly Hermitian.
template <class Scalar>
SampleCovariance<Scalar> sample_cov(const Matrix<Scalar>& X) {
  const Eigen::Index p = X.rows();
  const Eigen::Index n = X.cols();
  if (p == 0 || n == 0) throw std::invalid_argument("sample_cov needs a non-empty matrix");
  Matrix<Scalar> S = Matrix<Scalar>::Zero(p, p);
  S.template selfadjointView<Eigen::Lower>().rankUpdate(X, 1.0 / static_cast<double>(n));
  for (Eigen::Index j = 0; j < p; ++j) {
    if constexpr (is_complex_v<Scalar>) S(j, j) = Scalar(S(j, j).real(), 0.0);
    for (Eigen::Index i = 0; i < j; ++i) {
      if constexpr (is_complex_v<Scalar>) {
        S(i, j) = std::conj(S(j, i));
      } else {
        S(i, j) = S(j, i);
      }
    }
  }
  return {static_cast<std::size_t>(p), static_cast<std::size_t>(n), std::move(S)};
}

/// m + 1 orthonormal p-vectors stored as columns.
template <class Scalar>
struct SphereFrame {
  Matrix<Scalar> vectors;

  std::size_t m() const noexcept { return static_cast<std::size_t>(vectors.cols()) - 1; }
  std::size_t p() const noexcept { return static_cast<std::size_t>(vectors.rows()); }
};

/// Orthonormal frame from the thin QR factor of a Gaussian p x (m + 1) matrix.
template <class Scalar>
SphereFrame<Scalar> random_frame(std::size_t p, std::size_t m, StreamKey key) {
  if (m + 1 > p) {
    std::ostringstream msg;
    msg << "a frame of " << m + 1 << " vectors does not fit in dimension " << p;
    throw std::invalid_argument(msg.str());
  }
  const EntryLaw law = is_complex_v<Scalar> ? EntryLaw::complex_gaussian() : EntryLaw::real_gaussian();
  const Matrix<Scalar> G = sample_matrix<Scalar>(law, p, m + 1, key);
  Eigen::HouseholderQR<Matrix<Scalar>> qr(G);
  Matrix<Scalar> Q = qr.householderQ() * Matrix<Scalar>::Identity(G.rows(), G.cols());
  return {std::move(Q)};
}

/// x(t) = x_1 cos t_1 + x_2 sin t_1 cos t_2 + ... + x_{m+1} sin t_1 ... sin t_m.
template <class Scalar>
Vector<Scalar> sphere_point(const SphereFrame<Scalar>& frame, const AngleTuple& t) {
  if (t.dimension() != frame.m()) {
    std::ostringstream msg;
    msg << "angle tuple of dimension " << t.dimension() << " used with a frame of m = "
        << frame.m();
    throw std::invalid_argument(msg.str());
  }
  const std::vector<double> c = sphere_coefficients(t);
  Vector<Scalar> x = Vector<Scalar>::Zero(frame.vectors.rows());
  for (std::size_t k = 0; k < c.size(); ++k) {
    x += c[k] * frame.vectors.col(static_cast<Eigen::Index>(k));
  }
  return x;
}

}  // namespace rmtlab
