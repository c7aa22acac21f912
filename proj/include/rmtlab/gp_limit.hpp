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

// Exact sampler for the limiting Gaussian process on a finite grid of
// (t1, t2, sigma) points.

#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rmtlab/ensembles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/montecarlo.hpp"
#include "rmtlab/random.hpp"
#include "rmtlab/resolvent.hpp"

namespace rmtlab {

struct GridKernelMatrix {
  GridSpec grid;
  CovarianceCase covariance_case = CovarianceCase::Real;
  KernelForm form = KernelForm::DividedDifference;
  Matrix<double> K;
  double min_eigenvalue = 0.0;

  bool positive_semidefinite(double tol = 1e-8) const { return min_eigenvalue >= -tol; }
};

inline double min_eigenvalue(const Matrix<double>& A) {
  if (A.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix<double>> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw numerical_error("eigenvalue solver did not converge");
  return es.eigenvalues()(0);
}

/// Entry (i, j) is the limiting E Y_i Y_j for the requested form.
inline GridKernelMatrix build_kernel_matrix(const GridSpec& grid, CovarianceCase c, AspectRatio y,
                                            KernelForm form = KernelForm::DividedDifference) {
  if (grid.size() == 0) throw std::invalid_argument("grid is empty");
  if (!grid.all_sigma()) {
    throw std::invalid_argument("the limit process is sampled for real sigma shifts only");
  }
  const std::size_t n = grid.size();
  GridKernelMatrix km{grid, c, form, Matrix<double>(n, n), 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = predicted_covariance(grid, i, j, c, y, form, false).real();
      km.K(i, j) = v;
      km.K(j, i) = v;
    }
  }
  km.min_eigenvalue = min_eigenvalue(km.K);
  return km;
}

/// Cholesky factor of K + jitter I. The jitter starts at zero, then runs
/// 1e-12, 2e-12, ... up to 1e-6.
struct JitteredFactor {
  Matrix<double> L;
  double jitter = 0.0;
};

inline JitteredFactor factor_with_jitter(const Matrix<double>& K) {
  const auto I = Matrix<double>::Identity(K.rows(), K.cols());
  double jitter = 0.0;
  while (true) {
    Eigen::LLT<Matrix<double>> llt(K + jitter * I);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    jitter = jitter == 0.0 ? 1e-12 : 2.0 * jitter;
    if (jitter > 1e-6) {
      std::ostringstream msg;
      msg << "kernel matrix is not positive semidefinite (min eigenvalue " << min_eigenvalue(K)
          << "); jitter exhausted";
      throw numerical_error(msg.str());
    }
  }
}

struct GpPaths {
  /// count x K, one path per row
  Matrix<double> paths;
  double jitter = 0.0;
};

/// i.i.d. N(0, K) rows; row r is drawn from key.child(r).
inline GpPaths sample_paths(const GridKernelMatrix& km, std::size_t count, StreamKey key) {
  const Eigen::Index K = km.K.rows();
  GpPaths out{Matrix<double>::Zero(static_cast<Eigen::Index>(count), K), 0.0};
  if (km.K.isZero(0.0)) return out;
  const JitteredFactor factor = factor_with_jitter(km.K);
  out.jitter = factor.jitter;
  Vector<double> z(K);
  for (std::size_t r = 0; r < count; ++r) {
    Engine engine = key.child(r).engine();
    std::normal_distribution<double> normal;
    for (Eigen::Index k = 0; k < K; ++k) z(k) = normal(engine);
    out.paths.row(static_cast<Eigen::Index>(r)) = (factor.L * z).transpose();
  }
  return out;
}

/// Random grid with angles in [0, 2 pi]^m and sigma in [sigma_lo, sigma_hi].
/// In the complex case only diagonal pairs (t1 = t2) are drawn so the process
/// is real-valued and its covariance must be positive semidefinite.
inline GridSpec random_grid(std::size_t pairs, std::size_t shifts, std::size_t m, CovarianceCase c,
                            StreamKey key, double sigma_lo = 0.1, double sigma_hi = 5.0) {
  Engine engine = key.engine();
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> shift(sigma_lo, sigma_hi);
  auto tuple = [&] {
    std::vector<double> t(m);
    for (auto& v : t) v = angle(engine);
    return AngleTuple(std::move(t));
  };
  GridSpec grid;
  for (std::size_t i = 0; i < pairs; ++i) {
    AngleTuple t1 = tuple();
    AngleTuple t2 = c == CovarianceCase::Complex ? t1 : tuple();
    grid.t_pairs.emplace_back(std::move(t1), std::move(t2));
  }
  for (std::size_t i = 0; i < shifts; ++i) grid.shifts.push_back(SpectralShift::sigma(shift(engine)));
  return grid;
}

/// Minimum eigenvalue of the kernel matrix on `count` random grids. A
/// negative value beyond rounding means the form is not a covariance.
inline std::vector<double> psd_diagnostic(KernelForm form, AspectRatio y, CovarianceCase c,
                                          std::size_t count, std::size_t max_points, StreamKey key) {
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t g = 0; g < count; ++g) {
    Engine engine = key.child({g, 1}).engine();
    const std::size_t pairs = std::uniform_int_distribution<std::size_t>(1, 5)(engine);
    const std::size_t shifts =
        std::uniform_int_distribution<std::size_t>(1, std::max<std::size_t>(1, max_points / pairs))(engine);
    const GridSpec grid = random_grid(pairs, shifts, 2, c, key.child({g, 2}));
    out.push_back(build_kernel_matrix(grid, c, y, form).min_eigenvalue);
  }
  return out;
}

}  // namespace rmtlab
