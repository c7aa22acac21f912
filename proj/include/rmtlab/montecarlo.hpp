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

/// Seeded replication engine and the comparison of empirical moments with
/// the limiting covariance predicted by each kernel form.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <new>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rmtlab/ensembles.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/random.hpp"
#include "rmtlab/resolvent.hpp"

namespace rmtlab {

struct FrameSpec {
  std::size_t m = 1;
  std::uint64_t seed = 1;
};

struct ExperimentPlan {
  std::size_t p = 200;
  std::size_t n = 400;
  EntryLaw law = EntryLaw::real_gaussian();
  CovarianceCase covariance_case = CovarianceCase::Real;
  FrameSpec frame;
  GridSpec grid;
  std::size_t replications = 2000;
  std::uint64_t seed = 1;
  /// Testing aid: every replication draws from the stream of replication 0.
  bool common_random_numbers = false;

  AspectRatio y_n() const { return AspectRatio::from_dimensions(p, n); }

  StreamKey replication_key(std::size_t r) const {
    return StreamKey(seed).child(common_random_numbers ? 0 : r);
  }

  void validate() const {
    if (p == 0 || n == 0) throw std::invalid_argument("plan needs p, n >= 1");
    if (replications < 2) throw std::invalid_argument("plan needs at least 2 replications");
    if (law.covariance_case() != covariance_case) {
      throw std::invalid_argument("entry law " + law.name() + " is inconsistent with the " +
                                  std::string(to_string(covariance_case)) + " case");
    }
    if (frame.m + 1 > p) throw std::invalid_argument("frame does not fit in dimension p");
    grid.validate(frame.m);
  }
};

/// R x K array of (possibly complex) statistics, one row per replication.
class StatisticArray {
 public:
  StatisticArray() = default;
  StatisticArray(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  cplx& operator()(std::size_t r, std::size_t k) { return data_[r * cols_ + k]; }
  cplx operator()(std::size_t r, std::size_t k) const { return data_[r * cols_ + k]; }

  std::span<cplx> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::vector<cplx> column(std::size_t k) const {
    std::vector<cplx> c(rows_);
    for (std::size_t r = 0; r < rows_; ++r) c[r] = (*this)(r, k);
    return c;
  }

  std::vector<double> real_column(std::size_t k) const {
    std::vector<double> c(rows_);
    for (std::size_t r = 0; r < rows_; ++r) c[r] = (*this)(r, k).real();
    return c;
  }

  bool column_is_real(std::size_t k) const {
    for (std::size_t r = 0; r < rows_; ++r) {
      if ((*this)(r, k).imag() != 0.0) return false;
    }
    return true;
  }

  bool is_real() const {
    return std::all_of(data_.begin(), data_.end(), [](cplx v) { return v.imag() == 0.0; });
  }

  const std::vector<cplx>& data() const noexcept { return data_; }

  bool operator==(const StatisticArray&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

/// Fills an R x K array by calling fill(r, row) for every replication on a
/// pool of `workers` threads. Rows are owned by index, so the result does not
/// depend on the worker count.
template <class RowFn>
StatisticArray run_rows(std::size_t rows, std::size_t cols, std::size_t workers, RowFn fill) {
  StatisticArray out;
  try {
    out = StatisticArray(rows, cols);
  } catch (const std::bad_alloc&) {
    throw std::runtime_error("resource exhaustion allocating the statistic array");
  }
  workers = std::max<std::size_t>(1, std::min(workers, rows));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t r = next.fetch_add(1);
      if (r >= rows) return;
      try {
        fill(r, out.row(r));
      } catch (const std::bad_alloc&) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::make_exception_ptr(
              std::runtime_error("resource exhaustion during replications; partial results discarded"));
        }
        failed = true;
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

namespace detail {

template <class Scalar>
StatisticArray run_grid_replications(const ExperimentPlan& plan, std::size_t workers) {
  const auto frame = random_frame<Scalar>(plan.p, plan.frame.m, StreamKey(plan.frame.seed));
  return run_rows(plan.replications, plan.grid.size(), workers, [&](std::size_t r, std::span<cplx> row) {
    const Matrix<Scalar> X = sample_matrix<Scalar>(plan.law, plan.p, plan.n, plan.replication_key(r));
    const auto stats = process_on_grid(sample_cov(X), frame, plan.grid);
    for (std::size_t k = 0; k < stats.size(); ++k) row[k] = stats[k].centered;
  });
}

}  // namespace detail

/// Row r holds Y_n at every grid point for an independent S seeded by (seed, r).
inline StatisticArray run_replications(const ExperimentPlan& plan, std::size_t workers = 1) {
  plan.validate();
  if (plan.covariance_case == CovarianceCase::Real) {
    return detail::run_grid_replications<double>(plan, workers);
  }
  return detail::run_grid_replications<cplx>(plan, workers);
}

/// Sample means and covariances with leave-one-replication-out jackknife
/// standard errors. Standard errors of complex quantities carry the error of
/// the real part in .real() and of the imaginary part in .imag().
struct EmpiricalMoments {
  std::size_t replications = 0;
  Vector<cplx> mean;
  Vector<cplx> mean_se;
  /// (1/(R-1)) sum (Y_i - mean_i)(Y_j - mean_j)
  Matrix<cplx> pseudo_cov;
  Matrix<cplx> pseudo_se;
  /// (1/(R-1)) sum (Y_i - mean_i) conj(Y_j - mean_j)
  Matrix<cplx> hermitian_cov;
  Matrix<cplx> hermitian_se;
  bool real_data = true;

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

namespace detail {

// Jackknife SE of an unbiased covariance entry. With centered products q_k,
// the leave-one-out estimate is (sum q - q_k R/(R-1)) / (R-2), so the
// jackknife spread reduces to the spread of q_k.
inline double jackknife_cov_se(const std::vector<double>& q) {
  const double R = static_cast<double>(q.size());
  if (q.size() < 3) return std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double v : q) mean += v;
  mean /= R;
  double ss = 0.0;
  for (double v : q) ss += (v - mean) * (v - mean);
  const double c = R / (R - 1.0);
  return std::sqrt((R - 1.0) / R * c * c / ((R - 2.0) * (R - 2.0)) * ss);
}

}  // namespace detail

inline EmpiricalMoments empirical_cov(const StatisticArray& samples) {
  const std::size_t R = samples.rows();
  const std::size_t K = samples.cols();
  if (R < 2) throw std::invalid_argument("empirical_cov needs at least 2 replications");
  const double Rd = static_cast<double>(R);

  EmpiricalMoments em;
  em.replications = R;
  em.real_data = samples.is_real();
  em.mean = Vector<cplx>::Zero(static_cast<Eigen::Index>(K));
  em.mean_se = Vector<cplx>::Zero(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    cplx sum(0.0);
    for (std::size_t r = 0; r < R; ++r) sum += samples(r, k);
    em.mean(k) = sum / Rd;
  }
  Matrix<cplx> d(R, K);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t k = 0; k < K; ++k) d(r, k) = samples(r, k) - em.mean(k);
  }
  for (std::size_t k = 0; k < K; ++k) {
    double sre = 0.0, sim = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      sre += d(r, k).real() * d(r, k).real();
      sim += d(r, k).imag() * d(r, k).imag();
    }
    em.mean_se(k) = cplx(std::sqrt(sre / (Rd - 1.0) / Rd), std::sqrt(sim / (Rd - 1.0) / Rd));
  }

  em.pseudo_cov = Matrix<cplx>::Zero(K, K);
  em.pseudo_se = Matrix<cplx>::Zero(K, K);
  em.hermitian_cov = Matrix<cplx>::Zero(K, K);
  em.hermitian_se = Matrix<cplx>::Zero(K, K);
  std::vector<double> qre(R), qim(R), hre(R), him(R);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i; j < K; ++j) {
      cplx ps(0.0), hs(0.0);
      for (std::size_t r = 0; r < R; ++r) {
        const cplx pq = d(r, i) * d(r, j);
        const cplx hq = d(r, i) * std::conj(d(r, j));
        qre[r] = pq.real();
        qim[r] = pq.imag();
        hre[r] = hq.real();
        him[r] = hq.imag();
        ps += pq;
        hs += hq;
      }
      const cplx pc = ps / (Rd - 1.0);
      const cplx hc = hs / (Rd - 1.0);
      const cplx pse(detail::jackknife_cov_se(qre), detail::jackknife_cov_se(qim));
      const cplx hse(detail::jackknife_cov_se(hre), detail::jackknife_cov_se(him));
      em.pseudo_cov(i, j) = em.pseudo_cov(j, i) = pc;
      em.pseudo_se(i, j) = em.pseudo_se(j, i) = pse;
      em.hermitian_cov(i, j) = hc;
      em.hermitian_cov(j, i) = std::conj(hc);
      em.hermitian_se(i, j) = em.hermitian_se(j, i) = hse;
    }
  }
  return em;
}

/// Shape diagnostics of one statistic column against N(0, predicted variance).
struct GaussianityReport {
  std::size_t replications = 0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  /// skewness * sqrt(R/6), approximately N(0,1) under normality
  double skewness_z = 0.0;
  /// excess kurtosis * sqrt(R/24), approximately N(0,1) under normality
  double kurtosis_z = 0.0;
  double ks_distance = 0.0;
  /// 1.63 / sqrt(R), the 1% critical value of the one-sample KS statistic
  double ks_critical = 0.0;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline GaussianityReport normality_tests(std::span<const double> sample, double predicted_variance) {
  const std::size_t R = sample.size();
  if (R < 100) throw std::invalid_argument("normality tests need at least 100 replications");
  if (!(predicted_variance > 0.0)) throw std::invalid_argument("predicted variance must be positive");
  const double Rd = static_cast<double>(R);
  double mean = 0.0;
  for (double v : sample) mean += v;
  mean /= Rd;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : sample) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= Rd;
  m3 /= Rd;
  m4 /= Rd;
  if (!(m2 > 0.0)) throw std::domain_error("degenerate column: zero variance");

  GaussianityReport g;
  g.replications = R;
  g.skewness = m3 / std::pow(m2, 1.5);
  g.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  g.skewness_z = g.skewness * std::sqrt(Rd / 6.0);
  g.kurtosis_z = g.excess_kurtosis * std::sqrt(Rd / 24.0);

  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = std::sqrt(predicted_variance);
  double d = 0.0;
  for (std::size_t i = 0; i < R; ++i) {
    const double F = normal_cdf(sorted[i] / sd);
    d = std::max({d, static_cast<double>(i + 1) / Rd - F, F - static_cast<double>(i) / Rd});
  }
  g.ks_distance = d;
  g.ks_critical = 1.63 / std::sqrt(Rd);
  return g;
}

/// Predicted covariance of grid points i and j. `hermitian` selects
/// E Y_i conj(Y_j), which equals E Y(t1,t2,z_i) Y(t4,t3,conj z_j).
inline cplx predicted_covariance(const GridSpec& grid, std::size_t i, std::size_t j,
                                 CovarianceCase c, AspectRatio y, KernelForm form, bool hermitian) {
  const auto pi = grid.point(i);
  const auto pj = grid.point(j);
  const AngleTuple& t3 = hermitian ? pj.t2 : pj.t1;
  const AngleTuple& t4 = hermitian ? pj.t1 : pj.t2;
  const SpectralShift zj = hermitian ? pj.shift.conj() : pj.shift;
  const cplx w = w_z(pi.shift, zj, y, form);
  const double mult = theta_multiplier(pi.t1, pi.t2, t3, t4, c);
  return mult * w;
}

/// One covariance entry compared against every requested kernel form.
struct EntryComparison {
  std::size_t i = 0;
  std::size_t j = 0;
  bool hermitian = false;
  cplx empirical;
  cplx standard_error;
  std::vector<cplx> predicted;
  /// z-scores of the real and imaginary parts; NaN where a part is not tested
  std::vector<double> z_real;
  std::vector<double> z_imag;
};

struct FormFit {
  KernelForm form;
  double sum_squared_z = 0.0;
  double max_abs_z = 0.0;
  std::size_t tested = 0;
};

struct ComparisonReport {
  std::vector<KernelForm> forms;
  AspectRatio y_n{1.0};
  std::vector<EntryComparison> entries;
  std::vector<FormFit> fits;
  KernelForm verdict = KernelForm::DividedDifference;
  /// mean / SE of every statistic (real part)
  std::vector<double> mean_z;
  /// present for columns when R >= 100
  std::vector<GaussianityReport> gaussianity;

  const FormFit& fit(KernelForm form) const {
    for (const auto& f : fits) {
      if (f.form == form) return f;
    }
    throw std::out_of_range("form not part of the comparison");
  }

  std::size_t form_index(KernelForm form) const {
    for (std::size_t k = 0; k < forms.size(); ++k) {
      if (forms[k] == form) return k;
    }
    throw std::out_of_range("form not part of the comparison");
  }

  /// The first entry for (i, j) of the requested kind.
  const EntryComparison& entry(std::size_t i, std::size_t j, bool hermitian = false) const {
    for (const auto& e : entries) {
      if (((e.i == i && e.j == j) || (e.i == j && e.j == i)) && e.hermitian == hermitian) return e;
    }
    throw std::out_of_range("no such covariance entry");
  }
};

namespace detail {

inline double z_score(double empirical, double predicted, double se) {
  if (!(se > 0.0) || !std::isfinite(se)) return std::numeric_limits<double>::quiet_NaN();
  return (empirical - predicted) / se;
}

}  // namespace detail

/// Compares every covariance entry with the prediction of each form, using
/// kernels evaluated at y_n. The verdict is the form with the smallest sum of
/// squared z-scores.
inline ComparisonReport compare_kernel(const EmpiricalMoments& emp, const ExperimentPlan& plan,
                                       const std::vector<KernelForm>& forms,
                                       const StatisticArray* samples = nullptr) {
  if (forms.empty()) throw std::invalid_argument("compare_kernel needs at least one form");
  const std::size_t K = plan.grid.size();
  if (emp.dimension() != K) throw std::invalid_argument("moments do not match the plan grid");
  ComparisonReport report;
  report.forms = forms;
  report.y_n = plan.y_n();
  for (KernelForm f : forms) report.fits.push_back({f});

  const bool both_kinds = !emp.real_data;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i; j < K; ++j) {
      for (int kind = 0; kind < (both_kinds ? 2 : 1); ++kind) {
        const bool herm = kind == 1;
        EntryComparison e;
        e.i = i;
        e.j = j;
        e.hermitian = herm;
        e.empirical = herm ? emp.hermitian_cov(i, j) : emp.pseudo_cov(i, j);
        e.standard_error = herm ? emp.hermitian_se(i, j) : emp.pseudo_se(i, j);
        for (std::size_t f = 0; f < forms.size(); ++f) {
          const cplx pred =
              predicted_covariance(plan.grid, i, j, plan.covariance_case, report.y_n, forms[f], herm);
          e.predicted.push_back(pred);
          const double zr = detail::z_score(e.empirical.real(), pred.real(), e.standard_error.real());
          const double zi = detail::z_score(e.empirical.imag(), pred.imag(), e.standard_error.imag());
          e.z_real.push_back(zr);
          e.z_imag.push_back(zi);
          for (double z : {zr, zi}) {
            if (std::isnan(z)) continue;
            auto& fit = report.fits[f];
            fit.sum_squared_z += z * z;
            fit.max_abs_z = std::max(fit.max_abs_z, std::abs(z));
            ++fit.tested;
          }
        }
        report.entries.push_back(std::move(e));
      }
    }
  }
  // Ties (forms that agree to rounding) go to the form listed first.
  std::size_t best = 0;
  for (std::size_t f = 1; f < report.fits.size(); ++f) {
    const double incumbent = report.fits[best].sum_squared_z;
    if (report.fits[f].sum_squared_z < incumbent - 1e-9 * std::max(1.0, incumbent)) best = f;
  }
  report.verdict = report.fits[best].form;

  for (std::size_t k = 0; k < K; ++k) {
    report.mean_z.push_back(detail::z_score(emp.mean(k).real(), 0.0, emp.mean_se(k).real()));
  }
  if (samples != nullptr && samples->rows() >= 100) {
    for (std::size_t k = 0; k < K; ++k) {
      // Var(Re Y) = (E|Y|^2 + Re E Y^2) / 2
      const cplx pseudo = predicted_covariance(plan.grid, k, k, plan.covariance_case, report.y_n,
                                               KernelForm::DividedDifference, false);
      const cplx herm = predicted_covariance(plan.grid, k, k, plan.covariance_case, report.y_n,
                                             KernelForm::DividedDifference, true);
      const double var_re = 0.5 * (herm.real() + pseudo.real());
      const std::vector<double> col = samples->real_column(k);
      GaussianityReport g;
      if (var_re > 0.0) {
        try {
          g = normality_tests(col, var_re);
        } catch (const std::domain_error&) {
          // constant column, nothing to test
        }
      }
      report.gaussianity.push_back(g);
    }
  }
  return report;
}

}  // namespace rmtlab
