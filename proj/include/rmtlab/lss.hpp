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

/// Linear spectral statistics of the eigenprojection measure that puts mass
/// x^* u_j u_j^* y at eigenvalue lambda_j, and their Monte Carlo covariance.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmtlab/ensembles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/montecarlo.hpp"
#include "rmtlab/mp_law.hpp"

namespace rmtlab {

template <class Scalar>
struct SpectralDecomposition {
  Vector<double> eigenvalues;  // ascending
  Matrix<Scalar> U;            // eigenvectors as columns
};

template <class Scalar>
SpectralDecomposition<Scalar> eigen(const Matrix<Scalar>& S) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(S);
  if (es.info() != Eigen::Success) throw numerical_error("eigendecomposition did not converge");
  return {es.eigenvalues(), es.eigenvectors()};
}

template <class Scalar>
SpectralDecomposition<Scalar> eigen(const SampleCovariance<Scalar>& cov) {
  return eigen(cov.S);
}

/// Kolmogorov distance between the ESD of the given eigenvalues and F_y
/// (atom included).
inline double esd_ks_distance(const Vector<double>& eigenvalues, AspectRatio ratio) {
  const std::size_t p = static_cast<std::size_t>(eigenvalues.size());
  std::vector<double> lambda(eigenvalues.data(), eigenvalues.data() + p);
  // S is PSD and its null eigenvalues come out as +-1e-15 or so; snap them
  // onto the atom at 0
  const double top = lambda.empty() ? 0.0 : *std::max_element(lambda.begin(), lambda.end());
  const double null_tol = 1e-10 * std::max(1.0, top);
  for (double& v : lambda) {
    if (v < null_tol) v = 0.0;
  }
  std::sort(lambda.begin(), lambda.end());
  double d = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const double F = mp_cdf(lambda[i], ratio);
    // left limit of F: only differs at the atom
    const double F_left = lambda[i] > 0.0 ? F : 0.0;
    d = std::max({d, static_cast<double>(i + 1) / static_cast<double>(p) - F,
                  F_left - static_cast<double>(i) / static_cast<double>(p)});
  }
  return d;
}

/// Test function f: either a real polynomial or an analytic callable.
class TestFunction {
 public:
  static constexpr std::size_t kMaxContourDegree = 16;

  /// c0 + c1 x + ... + cd x^d
  static TestFunction polynomial(std::vector<double> coefficients) {
    if (coefficients.empty()) coefficients.push_back(0.0);
    TestFunction f;
    f.coefficients_ = std::move(coefficients);
    f.is_polynomial_ = true;
    std::ostringstream name;
    name << "poly[";
    for (std::size_t i = 0; i < f.coefficients_.size(); ++i) {
      name << (i ? "," : "") << f.coefficients_[i];
    }
    name << "]";
    f.name_ = name.str();
    const auto coeffs = f.coefficients_;
    f.fn_ = [coeffs](cplx z) {
      cplx acc(0.0);
      for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * z + coeffs[k];
      return acc;
    };
    return f;
  }

  static TestFunction monomial(std::size_t degree) {
    std::vector<double> c(degree + 1, 0.0);
    c[degree] = 1.0;
    return polynomial(std::move(c));
  }

  /// A function analytic on a neighbourhood of the support, real on the real axis.
  static TestFunction analytic(std::string name, std::function<cplx(cplx)> fn) {
    TestFunction f;
    f.name_ = std::move(name);
    f.fn_ = std::move(fn);
    return f;
  }

  bool is_polynomial() const noexcept { return is_polynomial_; }
  const std::vector<double>& coefficients() const noexcept { return coefficients_; }
  std::size_t degree() const noexcept { return coefficients_.empty() ? 0 : coefficients_.size() - 1; }
  const std::string& name() const noexcept { return name_; }

  cplx operator()(cplx z) const { return fn_(z); }
  double operator()(double x) const { return fn_(cplx(x, 0.0)).real(); }

  RealFunction real() const {
    return [fn = fn_](double x) { return fn(cplx(x, 0.0)).real(); };
  }
  AnalyticFunction complex() const { return fn_; }

 private:
  TestFunction() = default;

  std::function<cplx(cplx)> fn_;
  std::vector<double> coefficients_;
  bool is_polynomial_ = false;
  std::string name_;
};

/// sqrt(p) (sum_j f(lambda_j)(x^*u_j)(u_j^*y) - x^*y * mean_f), with mean_f the
/// integral of f against F_{y_n}, supplied by the caller.
template <class Scalar>
cplx x_n_f(const SpectralDecomposition<Scalar>& decomp, const TestFunction& f,
           const Vector<Scalar>& x, const Vector<Scalar>& y, double mean_f) {
  const Vector<Scalar> a = decomp.U.adjoint() * x;
  const Vector<Scalar> b = decomp.U.adjoint() * y;
  cplx sum(0.0);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double fj = f(decomp.eigenvalues(j));
    if (!std::isfinite(fj)) throw std::domain_error("test function is not finite at an eigenvalue");
    sum += std::conj(cplx(a(j))) * fj * cplx(b(j));
  }
  const double p = static_cast<double>(x.size());
  return std::sqrt(p) * (sum - cplx(x.dot(y)) * mean_f);
}

template <class Scalar>
cplx x_n_f(const SpectralDecomposition<Scalar>& decomp, const TestFunction& f,
           const Vector<Scalar>& x, const Vector<Scalar>& y, AspectRatio y_n) {
  return x_n_f(decomp, f, x, y, mp_integral(f.real(), y_n));
}

/// x^* f(S) y for a polynomial f, by Horner's rule on vectors.
template <class Scalar>
cplx polynomial_form(const Matrix<Scalar>& S, const std::vector<double>& coefficients,
                     const Vector<Scalar>& x, const Vector<Scalar>& y) {
  if (coefficients.empty()) return 0.0;
  Vector<Scalar> v = coefficients.back() * y;
  for (std::size_t k = coefficients.size() - 1; k-- > 0;) v = S * v + coefficients[k] * y;
  return cplx(x.dot(v));
}

/// Eigen-free X_n(f) for polynomial f.
template <class Scalar>
cplx x_n_polynomial(const Matrix<Scalar>& S, const TestFunction& f, const Vector<Scalar>& x,
                    const Vector<Scalar>& y, double mean_f) {
  if (!f.is_polynomial()) throw std::invalid_argument("x_n_polynomial needs a polynomial");
  const double p = static_cast<double>(x.size());
  return std::sqrt(p) * (polynomial_form(S, f.coefficients(), x, y) - cplx(x.dot(y)) * mean_f);
}

/// X_n for f(x) = x: sqrt(p)(x^*Sy - x^*y), since the MP law has mean 1.
template <class Scalar>
cplx x_n_linear(const Matrix<Scalar>& S, const Vector<Scalar>& x, const Vector<Scalar>& y) {
  const double p = static_cast<double>(x.size());
  return std::sqrt(p) * (cplx(x.dot(S * y)) - cplx(x.dot(y)));
}

/// Angles of the two statistics: u = (t1, t2) for f and v = (t3, t4) for g.
struct LssConfig {
  AngleTuple t1, t2, t3, t4;
};

struct LssEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  bool hermitian = false;
  cplx empirical;
  cplx standard_error;
  double predicted_direct = 0.0;
  double predicted_contour = 0.0;
  double z_real = 0.0;
  double z_imag = 0.0;
};

struct LssReport {
  std::string f_name;
  std::string g_name;
  AspectRatio y_n{1.0};
  std::vector<LssEntry> entries;
  double max_abs_z = 0.0;
  double max_route_gap = 0.0;

  const LssEntry& entry(std::size_t i, std::size_t j, bool hermitian = false) const {
    for (const auto& e : entries) {
      if (e.i == i && e.j == j && e.hermitian == hermitian) return e;
    }
    throw std::out_of_range("no such LSS entry");
  }
};

struct LssRun {
  StatisticArray samples;
  LssReport report;
};

namespace detail {

template <class Scalar>
StatisticArray run_lss_replications(const ExperimentPlan& plan, const TestFunction& f,
                                    const TestFunction& g, const LssConfig& cfg, std::size_t workers) {
  const auto frame = random_frame<Scalar>(plan.p, plan.frame.m, StreamKey(plan.frame.seed));
  const Vector<Scalar> x1 = sphere_point(frame, cfg.t1);
  const Vector<Scalar> x2 = sphere_point(frame, cfg.t2);
  const Vector<Scalar> x3 = sphere_point(frame, cfg.t3);
  const Vector<Scalar> x4 = sphere_point(frame, cfg.t4);
  const AspectRatio y_n = plan.y_n();
  const double mean_f = mp_integral(f.real(), y_n);
  const double mean_g = mp_integral(g.real(), y_n);
  const bool polynomial = f.is_polynomial() && g.is_polynomial();
  const bool same_first = cfg.t1 == cfg.t2;
  const bool same_second = cfg.t3 == cfg.t4;
  return run_rows(plan.replications, 2, workers, [&](std::size_t r, std::span<cplx> row) {
    const Matrix<Scalar> X = sample_matrix<Scalar>(plan.law, plan.p, plan.n, plan.replication_key(r));
    const auto cov = sample_cov(X);
    if (polynomial) {
      row[0] = x_n_polynomial(cov.S, f, x1, x2, mean_f);
      row[1] = x_n_polynomial(cov.S, g, x3, x4, mean_g);
    } else {
      const auto decomp = eigen(cov.S);
      row[0] = x_n_f(decomp, f, x1, x2, mean_f);
      row[1] = x_n_f(decomp, g, x3, x4, mean_g);
    }
    // x^* f(S) x is real for Hermitian S; drop the rounding residue
    if (same_first) row[0] = row[0].real();
    if (same_second) row[1] = row[1].real();
  });
}

}  // namespace detail

/// Monte Carlo covariance of (X_n(f, u), X_n(g, v)) against the direct MP
/// integral and the double contour integral of the limiting covariance.
inline LssRun lss_experiment(const ExperimentPlan& plan, const TestFunction& f, const TestFunction& g,
                             const LssConfig& cfg, std::size_t workers = 1,
                             const ContourSpec& contour = {}) {
  if (plan.p == 0 || plan.n == 0) throw std::invalid_argument("plan needs p, n >= 1");
  if (plan.replications < 2) throw std::invalid_argument("plan needs at least 2 replications");
  if (plan.law.covariance_case() != plan.covariance_case) {
    throw std::invalid_argument("entry law is inconsistent with the covariance case");
  }
  for (const TestFunction* fn : {&f, &g}) {
    if (fn->is_polynomial() && fn->degree() > TestFunction::kMaxContourDegree) {
      throw std::invalid_argument("polynomial degree exceeds the contour limit of 16");
    }
  }
  LssRun run;
  run.samples = plan.covariance_case == CovarianceCase::Real
                    ? detail::run_lss_replications<double>(plan, f, g, cfg, workers)
                    : detail::run_lss_replications<cplx>(plan, f, g, cfg, workers);
  const EmpiricalMoments em = empirical_cov(run.samples);

  LssReport& rep = run.report;
  rep.f_name = f.name();
  rep.g_name = g.name();
  rep.y_n = plan.y_n();
  const std::array<const TestFunction*, 2> fns{&f, &g};
  const std::array<std::pair<const AngleTuple*, const AngleTuple*>, 2> idx{
      std::make_pair(&cfg.t1, &cfg.t2), std::make_pair(&cfg.t3, &cfg.t4)};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = i; j < 2; ++j) {
      const double direct = lss_cov(fns[i]->real(), fns[j]->real(), 1.0, rep.y_n);
      const double route = lss_cov_contour(fns[i]->complex(), fns[j]->complex(), 1.0, rep.y_n, contour);
      rep.max_route_gap = std::max(rep.max_route_gap, std::abs(direct - route));
      for (int kind = 0; kind < (em.real_data ? 1 : 2); ++kind) {
        const bool herm = kind == 1;
        const AngleTuple& a1 = *idx[i].first;
        const AngleTuple& a2 = *idx[i].second;
        const AngleTuple& b1 = herm ? *idx[j].second : *idx[j].first;
        const AngleTuple& b2 = herm ? *idx[j].first : *idx[j].second;
        const double mult = theta_multiplier(a1, a2, b1, b2, plan.covariance_case);
        LssEntry e;
        e.i = i;
        e.j = j;
        e.hermitian = herm;
        e.empirical = herm ? em.hermitian_cov(i, j) : em.pseudo_cov(i, j);
        e.standard_error = herm ? em.hermitian_se(i, j) : em.pseudo_se(i, j);
        e.predicted_direct = mult * direct;
        e.predicted_contour = mult * route;
        e.z_real = detail::z_score(e.empirical.real(), e.predicted_direct, e.standard_error.real());
        e.z_imag = detail::z_score(e.empirical.imag(), 0.0, e.standard_error.imag());
        for (double z : {e.z_real, e.z_imag}) {
          if (!std::isnan(z)) rep.max_abs_z = std::max(rep.max_abs_z, std::abs(z));
        }
        rep.entries.push_back(e);
      }
    }
  }
  return run;
}

}  // namespace rmtlab
