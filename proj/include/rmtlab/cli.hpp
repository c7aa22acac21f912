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

/// Configuration-driven experiment commands behind the rmtlab executable.
///
/// A configuration is a single JSON object with flat, dotted keys such as
/// "grid.sigma" or "frame.seed". Every command validates its configuration in
/// full before computing or writing anything; unknown keys are errors.
///
/// Exit codes: 0 success, 1 gate failure, 2 configuration error,
/// 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmtlab/ensembles.hpp"
#include "rmtlab/errors.hpp"
#include "rmtlab/gp_limit.hpp"
#include "rmtlab/kernels.hpp"
#include "rmtlab/lss.hpp"
#include "rmtlab/montecarlo.hpp"
#include "rmtlab/mp_law.hpp"
#include "rmtlab/version.hpp"

namespace rmtlab::cli {

using json = nlohmann::json;

enum ExitCode : int { kSuccess = 0, kGateFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

/// Reads typed values from a flat configuration object.
class ConfigReader {
 public:
  ConfigReader(const json& config, const std::string& command, const std::set<std::string>& allowed)
      : config_(config), command_(command) {
    if (!config.is_object()) throw config_error("configuration must be a JSON object");
    for (const auto& [key, value] : config.items()) {
      if (!allowed.contains(key)) {
        throw config_error("unknown key '" + key + "' for command '" + command + "'");
      }
    }
  }

  bool has(const std::string& key) const { return config_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return require<T>(key);
  }

  template <class T>
  T require(const std::string& key) const {
    if (!has(key)) throw config_error("missing required key '" + key + "' for '" + command_ + "'");
    const json& v = config_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        // literals built in code are stored signed, parsed ones unsigned
        const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
        if (!ok) throw config_error("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw config_error("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw config_error("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw config_error("key '" + key + "' has the wrong type: " + v.dump());
    }
  }

  /// A number or a list of numbers.
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback = {}) const {
    if (!has(key)) return fallback;
    const json& v = config_.at(key);
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw config_error("key '" + key + "' must be a number or a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw config_error("key '" + key + "' must contain numbers only");
      out.push_back(e.get<double>());
    }
    return out;
  }

  /// A list of [re, im] pairs.
  std::vector<cplx> complex_numbers(const std::string& key) const {
    std::vector<cplx> out;
    if (!has(key)) return out;
    const json& v = config_.at(key);
    if (!v.is_array()) throw config_error("key '" + key + "' must be a list of [re, im] pairs");
    for (const auto& e : v) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw config_error("key '" + key + "' must be a list of [re, im] pairs");
      }
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return out;
  }

  AngleTuple angles(const json& v, const std::string& key) const {
    if (v.is_number()) return AngleTuple{v.get<double>()};
    if (!v.is_array()) throw config_error("key '" + key + "' must hold angle lists");
    std::vector<double> t;
    for (const auto& e : v) {
      if (!e.is_number()) throw config_error("key '" + key + "' must hold numeric angles");
      t.push_back(e.get<double>());
    }
    return AngleTuple(std::move(t));
  }

  /// A pair [t1, t2] of angle lists.
  std::pair<AngleTuple, AngleTuple> angle_pair(const std::string& key) const {
    const json& v = config_.at(key);
    if (!v.is_array() || v.size() != 2) throw config_error("key '" + key + "' must be [t1, t2]");
    return {angles(v[0], key), angles(v[1], key)};
  }

  std::vector<std::pair<AngleTuple, AngleTuple>> angle_pairs(const std::string& key) const {
    std::vector<std::pair<AngleTuple, AngleTuple>> out;
    const json& v = config_.at(key);
    if (!v.is_array()) throw config_error("key '" + key + "' must be a list of [t1, t2] pairs");
    for (const auto& e : v) {
      if (!e.is_array() || e.size() != 2) throw config_error("key '" + key + "' must hold [t1, t2] pairs");
      out.emplace_back(angles(e[0], key), angles(e[1], key));
    }
    return out;
  }

 private:
  const json& config_;
  std::string command_;
};

/// Shortest representation that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string angles_text(const AngleTuple& t) {
  std::string s;
  for (std::size_t i = 0; i < t.dimension(); ++i) s += (i ? ";" : "") + fmt(t[i]);
  return s;
}

inline json angles_json(const AngleTuple& t) { return json(t.values()); }

struct RunContext {
  std::filesystem::path out_dir;
  std::size_t workers = 1;
  std::ostream* log = &std::cerr;
};

/// Files a command produced, written only after the computation succeeded.
struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }

  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) {
      std::ofstream out(dir / name, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
      out << content;
    }
  }
};

inline std::vector<KernelForm> parse_forms(const ConfigReader& cfg) {
  if (!cfg.has("forms")) return {all_kernel_forms.begin(), all_kernel_forms.end()};
  const auto names = cfg.require<std::vector<std::string>>("forms");
  if (names.empty()) throw config_error("'forms' must not be empty");
  std::vector<KernelForm> forms;
  for (const auto& name : names) {
    try {
      forms.push_back(parse_kernel_form(name));
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }
  return forms;
}

inline std::vector<AspectRatio> parse_ratios(const ConfigReader& cfg) {
  std::vector<AspectRatio> out;
  for (double y : cfg.numbers("y")) {
    try {
      out.emplace_back(y);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }
  if (out.empty()) throw config_error("missing required key 'y'");
  return out;
}

inline std::vector<double> parse_sigmas(const ConfigReader& cfg, const std::string& key) {
  std::vector<double> out = cfg.numbers(key);
  for (double s : out) {
    if (!(s > 0.0) || !std::isfinite(s)) throw config_error("'" + key + "' values must be positive");
  }
  return out;
}

inline const std::set<std::string> kPlanKeys{
    "p", "n", "law", "case", "replications", "seed", "frame.m", "frame.seed",
    "truncation.base", "truncation.nu", "truncation.epsilon", "workers", "gate.z_threshold"};

inline EntryLaw parse_law(const ConfigReader& cfg, std::size_t n) {
  const std::string name = cfg.get<std::string>("law", "real_gaussian");
  if (name == "real_gaussian") return EntryLaw::real_gaussian();
  if (name == "complex_gaussian") return EntryLaw::complex_gaussian();
  if (name != "truncated") throw config_error("unknown law '" + name + "'");
  const std::string base_name = cfg.get<std::string>("truncation.base", "student_t");
  BaseSampler base = BaseSampler::gaussian();
  if (base_name == "uniform") {
    base = BaseSampler::uniform();
  } else if (base_name == "student_t") {
    const double nu = cfg.get<double>("truncation.nu", 5.0);
    if (!(nu > 4.0)) throw config_error("'truncation.nu' must exceed 4 (finite fourth moment)");
    base = BaseSampler::student_t(nu);
  } else if (base_name != "gaussian") {
    throw config_error("unknown truncation base '" + base_name + "'");
  }
  const double eps = cfg.get<double>("truncation.epsilon", default_truncation_epsilon(n));
  if (!(eps > 0.0)) throw config_error("'truncation.epsilon' must be positive");
  return truncate_standardize(base, n, eps);
}

/// Plan fields shared by the simulate and lss commands; the grid is filled by the caller.
inline ExperimentPlan parse_plan(const ConfigReader& cfg) {
  ExperimentPlan plan;
  plan.p = cfg.get<std::size_t>("p", 200);
  plan.n = cfg.get<std::size_t>("n", 400);
  if (plan.p == 0 || plan.n == 0) throw config_error("'p' and 'n' must be positive");
  plan.replications = cfg.get<std::size_t>("replications", 2000);
  if (plan.replications < 2) throw config_error("'replications' must be at least 2");
  plan.seed = cfg.get<std::uint64_t>("seed", 1);
  plan.frame.m = cfg.get<std::size_t>("frame.m", 1);
  plan.frame.seed = cfg.get<std::uint64_t>("frame.seed", 1);
  if (plan.frame.m + 1 > plan.p) throw config_error("'frame.m' + 1 must not exceed p");
  plan.law = parse_law(cfg, plan.n);
  plan.covariance_case = plan.law.covariance_case();
  if (cfg.has("case")) {
    CovarianceCase c;
    try {
      c = parse_covariance_case(cfg.require<std::string>("case"));
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
    if (c != plan.covariance_case) throw config_error("'case' is inconsistent with 'law'");
  }
  return plan;
}

inline std::optional<double> parse_gate(const ConfigReader& cfg) {
  if (!cfg.has("gate.z_threshold")) return std::nullopt;
  const double t = cfg.require<double>("gate.z_threshold");
  if (!(t > 0.0)) throw config_error("'gate.z_threshold' must be positive");
  return t;
}

// ---------------------------------------------------------------------------
// law

inline Outputs cmd_law(const json& config, const RunContext&) {
  const ConfigReader cfg(config, "law", {"y", "sigma", "z", "density.points"});
  const auto ratios = parse_ratios(cfg);
  const auto sigmas = parse_sigmas(cfg, "sigma");
  const auto zs = cfg.complex_numbers("z");
  const std::size_t points = cfg.get<std::size_t>("density.points", 9);

  std::ostringstream csv;
  csv << "#schema=rmtlab.law/1\n";
  csv << "y,quantity,arg_re,arg_im,value_re,value_im,residual\n";
  json rows = json::array();
  auto emit = [&](double y, const char* q, cplx arg, cplx value, double residual) {
    csv << fmt(y) << ',' << q << ',' << fmt(arg.real()) << ',' << fmt(arg.imag()) << ','
        << fmt(value.real()) << ',' << fmt(value.imag()) << ',' << fmt(residual) << '\n';
    rows.push_back({{"y", y}, {"quantity", q}, {"arg", {arg.real(), arg.imag()}},
                    {"value", {value.real(), value.imag()}}, {"residual", residual}});
  };
  for (AspectRatio ratio : ratios) {
    const MpLaw law(ratio);
    const double y = ratio.value();
    emit(y, "support_a", 0.0, law.a, 0.0);
    emit(y, "support_b", 0.0, law.b, 0.0);
    emit(y, "atom", 0.0, law.atom_at_zero, 0.0);
    for (std::size_t i = 0; i < points; ++i) {
      const double x = law.a + (law.b - law.a) * (static_cast<double>(i) + 0.5) / static_cast<double>(points);
      emit(y, "density", x, density(x, ratio), 0.0);
    }
    for (double s : sigmas) {
      const StieltjesValue m = m_sigma(s, ratio);
      emit(y, "m", s, m.value, m.residual);
    }
    for (cplx z : zs) {
      StieltjesValue s;
      try {
        s = stieltjes(SpectralShift::at(z), ratio);
      } catch (const std::domain_error& e) {
        throw config_error(e.what());
      }
      emit(y, "s", z, s.value, s.residual);
    }
  }
  Outputs out;
  out.add("law.csv", csv.str());
  out.add("law.json", json{{"schema", "rmtlab.law/1"}, {"rows", rows}}.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// kernel

inline Outputs cmd_kernel(const json& config, const RunContext&) {
  const ConfigReader cfg(config, "kernel",
                         {"y", "sigma", "forms", "psd.grids", "psd.max_points", "psd.case", "seed"});
  const auto ratios = parse_ratios(cfg);
  const auto sigmas = parse_sigmas(cfg, "sigma");
  if (sigmas.empty()) throw config_error("'sigma' must list at least one shift");
  const auto forms = parse_forms(cfg);
  const std::size_t grids = cfg.get<std::size_t>("psd.grids", 10);
  const std::size_t max_points = cfg.get<std::size_t>("psd.max_points", 20);
  if (max_points == 0) throw config_error("'psd.max_points' must be positive");
  CovarianceCase psd_case;
  try {
    psd_case = parse_covariance_case(cfg.get<std::string>("psd.case", "real"));
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 1);

  std::ostringstream csv;
  csv << "#schema=rmtlab.kernel/1\n";
  csv << "y,sigma1,sigma2";
  for (KernelForm f : forms) csv << ',' << to_string(f);
  csv << ",dd_over_theorem1,theorem1_factor\n";
  json table = json::array();
  for (AspectRatio ratio : ratios) {
    for (double s1 : sigmas) {
      for (double s2 : sigmas) {
        csv << fmt(ratio.value()) << ',' << fmt(s1) << ',' << fmt(s2);
        json row{{"y", ratio.value()}, {"sigma1", s1}, {"sigma2", s2}};
        for (KernelForm f : forms) {
          const double w = w_sigma(s1, s2, ratio, f);
          csv << ',' << fmt(w);
          row[std::string(to_string(f))] = w;
        }
        const double ratio_dd = w_sigma(s1, s2, ratio) /
                                w_sigma(s1, s2, ratio, KernelForm::Theorem1Display);
        const double factor = theorem1_factor(s1, s2, ratio);
        csv << ',' << fmt(ratio_dd) << ',' << fmt(factor) << '\n';
        row["dd_over_theorem1"] = ratio_dd;
        row["theorem1_factor"] = factor;
        table.push_back(row);
      }
    }
  }

  std::ostringstream psd_csv;
  psd_csv << "#schema=rmtlab.kernel_psd/1\n";
  psd_csv << "y,form,grid,min_eigenvalue,psd\n";
  json psd = json::array();
  for (AspectRatio ratio : ratios) {
    for (KernelForm f : forms) {
      const auto mins = psd_diagnostic(f, ratio, psd_case, grids, max_points, StreamKey(seed));
      std::size_t failures = 0;
      for (std::size_t g = 0; g < mins.size(); ++g) {
        const bool ok = mins[g] >= -1e-8;
        failures += ok ? 0 : 1;
        psd_csv << fmt(ratio.value()) << ',' << to_string(f) << ',' << g << ',' << fmt(mins[g]) << ','
                << (ok ? 1 : 0) << '\n';
      }
      psd.push_back({{"y", ratio.value()}, {"form", to_string(f)}, {"grids", mins.size()},
                     {"non_psd_grids", failures}, {"min_eigenvalues", mins}});
    }
  }
  Outputs out;
  out.add("kernel.csv", csv.str());
  out.add("kernel_psd.csv", psd_csv.str());
  out.add("kernel.json",
          json{{"schema", "rmtlab.kernel/1"}, {"psd_case", to_string(psd_case)}, {"table", table}, {"psd", psd}}
                  .dump(2) +
              "\n");
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulationOutcome {
  Outputs outputs;
  bool gate_failed = false;
};

inline json plan_json(const ExperimentPlan& plan) {
  return {{"p", plan.p},
          {"n", plan.n},
          {"y_n", plan.y_n().value()},
          {"law", plan.law.name()},
          {"case", to_string(plan.covariance_case)},
          {"replications", plan.replications},
          {"seed", plan.seed},
          {"frame", {{"m", plan.frame.m}, {"seed", plan.frame.seed}}}};
}

inline json shift_json(SpectralShift s) {
  if (s.is_sigma()) return {{"sigma", s.sigma_value()}};
  return {{"z", {s.z().real(), s.z().imag()}}};
}

inline SimulationOutcome cmd_simulate(const json& config, const RunContext& ctx) {
  std::set<std::string> keys = kPlanKeys;
  keys.insert({"grid.t_pairs", "grid.sigma", "grid.z", "forms"});
  const ConfigReader cfg(config, "simulate", keys);
  ExperimentPlan plan = parse_plan(cfg);
  const auto forms = parse_forms(cfg);
  const auto gate = parse_gate(cfg);
  if (!cfg.has("grid.t_pairs")) throw config_error("missing required key 'grid.t_pairs'");
  try {
    plan.grid.t_pairs = cfg.angle_pairs("grid.t_pairs");
    for (double s : parse_sigmas(cfg, "grid.sigma")) plan.grid.shifts.push_back(SpectralShift::sigma(s));
    for (cplx z : cfg.complex_numbers("grid.z")) {
      const SpectralShift shift = SpectralShift::at(z);
      stieltjes(shift, plan.y_n());  // rejects real z inside the support
      plan.grid.shifts.push_back(shift);
    }
    plan.validate();
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error(e.what());
  }

  const StatisticArray samples = run_replications(plan, ctx.workers);
  const EmpiricalMoments em = empirical_cov(samples);
  const ComparisonReport report = compare_kernel(em, plan, forms, &samples);

  std::ostringstream stats;
  stats << "#schema=rmtlab.statistics/1\n";
  stats << "replication,point,t1,t2,shift_kind,shift_re,shift_im,value_re,value_im\n";
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t k = 0; k < samples.cols(); ++k) {
      const auto pt = plan.grid.point(k);
      stats << r << ',' << k << ',' << angles_text(pt.t1) << ',' << angles_text(pt.t2) << ','
            << (pt.shift.is_sigma() ? "sigma" : "z") << ','
            << fmt(pt.shift.is_sigma() ? pt.shift.sigma_value() : pt.shift.z().real()) << ','
            << fmt(pt.shift.is_sigma() ? 0.0 : pt.shift.z().imag()) << ',' << fmt(samples(r, k).real())
            << ',' << fmt(samples(r, k).imag()) << '\n';
    }
  }

  std::ostringstream cmp;
  cmp << "#schema=rmtlab.comparison/1\n";
  cmp << "i,j,kind,empirical_re,empirical_im,se_re,se_im";
  for (KernelForm f : forms) {
    cmp << ",pred_" << to_string(f) << "_re,pred_" << to_string(f) << "_im,z_" << to_string(f)
        << "_re,z_" << to_string(f) << "_im";
  }
  cmp << '\n';
  json entries = json::array();
  bool gate_failed = false;
  const std::size_t dd = [&]() -> std::size_t {
    for (std::size_t f = 0; f < forms.size(); ++f) {
      if (forms[f] == KernelForm::DividedDifference) return f;
    }
    return forms.size();
  }();
  for (const auto& e : report.entries) {
    cmp << e.i << ',' << e.j << ',' << (e.hermitian ? "hermitian" : "pseudo") << ','
        << fmt(e.empirical.real()) << ',' << fmt(e.empirical.imag()) << ','
        << fmt(e.standard_error.real()) << ',' << fmt(e.standard_error.imag());
    json je{{"i", e.i},
            {"j", e.j},
            {"kind", e.hermitian ? "hermitian" : "pseudo"},
            {"empirical", {e.empirical.real(), e.empirical.imag()}},
            {"standard_error", {e.standard_error.real(), e.standard_error.imag()}}};
    for (std::size_t f = 0; f < forms.size(); ++f) {
      cmp << ',' << fmt(e.predicted[f].real()) << ',' << fmt(e.predicted[f].imag()) << ','
          << fmt(e.z_real[f]) << ',' << fmt(e.z_imag[f]);
      const auto nan_safe = [](double z) { return std::isnan(z) ? json(nullptr) : json(z); };
      je["predicted"][std::string(to_string(forms[f]))] = {e.predicted[f].real(), e.predicted[f].imag()};
      je["z"][std::string(to_string(forms[f]))] = {nan_safe(e.z_real[f]), nan_safe(e.z_imag[f])};
      if (gate && f == dd) {
        for (double z : {e.z_real[f], e.z_imag[f]}) {
          if (!std::isnan(z) && std::abs(z) > *gate) gate_failed = true;
        }
      }
    }
    cmp << '\n';
    entries.push_back(je);
  }

  json fits = json::array();
  for (const auto& f : report.fits) {
    fits.push_back({{"form", to_string(f.form)}, {"sum_squared_z", f.sum_squared_z},
                    {"max_abs_z", f.max_abs_z}, {"tested", f.tested}});
  }
  json points = json::array();
  for (std::size_t k = 0; k < plan.grid.size(); ++k) {
    const auto pt = plan.grid.point(k);
    json jp{{"index", k}, {"t1", angles_json(pt.t1)}, {"t2", angles_json(pt.t2)}, {"shift", shift_json(pt.shift)},
            {"mean", {em.mean(k).real(), em.mean(k).imag()}},
            {"mean_z", std::isnan(report.mean_z[k]) ? json(nullptr) : json(report.mean_z[k])}};
    if (k < report.gaussianity.size() && report.gaussianity[k].replications > 0) {
      const auto& g = report.gaussianity[k];
      jp["gaussianity"] = {{"skewness", g.skewness}, {"excess_kurtosis", g.excess_kurtosis},
                           {"skewness_z", g.skewness_z}, {"kurtosis_z", g.kurtosis_z},
                           {"ks_distance", g.ks_distance}, {"ks_critical", g.ks_critical}};
    }
    points.push_back(jp);
  }
  json rep{{"schema", "rmtlab.report/1"},
           {"command", "simulate"},
           {"plan", plan_json(plan)},
           {"points", points},
           {"fits", fits},
           {"verdict", to_string(report.verdict)},
           {"entries", entries}};
  if (gate) {
    rep["gate"] = {{"z_threshold", *gate}, {"form", "DividedDifference"}, {"passed", !gate_failed}};
  }
  SimulationOutcome outcome;
  outcome.outputs.add("statistics.csv", stats.str());
  outcome.outputs.add("comparison.csv", cmp.str());
  outcome.outputs.add("report.json", rep.dump(2) + "\n");
  outcome.gate_failed = gate_failed;
  (void)ctx;
  return outcome;
}

// ---------------------------------------------------------------------------
// lss

inline TestFunction parse_polynomial(const ConfigReader& cfg, const std::string& key) {
  const auto coeffs = cfg.numbers(key, {0.0, 1.0});
  if (coeffs.empty()) throw config_error("'" + key + "' must list polynomial coefficients");
  if (coeffs.size() - 1 > TestFunction::kMaxContourDegree) {
    throw config_error("'" + key + "' exceeds the maximum degree 16");
  }
  return TestFunction::polynomial(coeffs);
}

inline SimulationOutcome cmd_lss(const json& config, const RunContext& ctx) {
  std::set<std::string> keys = kPlanKeys;
  keys.insert({"f", "g", "u", "v", "contour.nodes"});
  const ConfigReader cfg(config, "lss", keys);
  ExperimentPlan plan = parse_plan(cfg);
  const auto gate = parse_gate(cfg);
  const TestFunction f = parse_polynomial(cfg, "f");
  const TestFunction g = parse_polynomial(cfg, "g");
  LssConfig lc;
  const AngleTuple zero(std::vector<double>(plan.frame.m, 0.0));
  std::tie(lc.t1, lc.t2) = cfg.has("u") ? cfg.angle_pair("u") : std::make_pair(zero, zero);
  std::tie(lc.t3, lc.t4) = cfg.has("v") ? cfg.angle_pair("v") : std::make_pair(zero, zero);
  for (const AngleTuple* t : {&lc.t1, &lc.t2, &lc.t3, &lc.t4}) {
    if (t->dimension() != plan.frame.m) throw config_error("'u'/'v' angles must have frame.m entries");
  }
  ContourSpec contour;
  contour.nodes_per_side = cfg.get<std::size_t>("contour.nodes", 256);
  if (contour.nodes_per_side < 2) throw config_error("'contour.nodes' must be at least 2");
  contour.max_nodes_per_side = std::max(contour.max_nodes_per_side, contour.nodes_per_side);

  const LssRun run = lss_experiment(plan, f, g, lc, ctx.workers, contour);

  std::ostringstream stats;
  stats << "#schema=rmtlab.lss_statistics/1\n";
  stats << "replication,xf_re,xf_im,xg_re,xg_im\n";
  for (std::size_t r = 0; r < run.samples.rows(); ++r) {
    stats << r << ',' << fmt(run.samples(r, 0).real()) << ',' << fmt(run.samples(r, 0).imag()) << ','
          << fmt(run.samples(r, 1).real()) << ',' << fmt(run.samples(r, 1).imag()) << '\n';
  }
  std::ostringstream cmp;
  cmp << "#schema=rmtlab.lss/1\n";
  cmp << "i,j,kind,empirical_re,empirical_im,se_re,se_im,predicted_direct,predicted_contour,"
         "contour_direct_abs_diff,z_re,z_im\n";
  json entries = json::array();
  bool gate_failed = false;
  for (const auto& e : run.report.entries) {
    cmp << e.i << ',' << e.j << ',' << (e.hermitian ? "hermitian" : "pseudo") << ','
        << fmt(e.empirical.real()) << ',' << fmt(e.empirical.imag()) << ','
        << fmt(e.standard_error.real()) << ',' << fmt(e.standard_error.imag()) << ','
        << fmt(e.predicted_direct) << ',' << fmt(e.predicted_contour) << ','
        << fmt(std::abs(e.predicted_direct - e.predicted_contour)) << ',' << fmt(e.z_real) << ','
        << fmt(e.z_imag) << '\n';
    const auto nan_safe = [](double z) { return std::isnan(z) ? json(nullptr) : json(z); };
    entries.push_back({{"i", e.i},
                       {"j", e.j},
                       {"kind", e.hermitian ? "hermitian" : "pseudo"},
                       {"empirical", {e.empirical.real(), e.empirical.imag()}},
                       {"standard_error", {e.standard_error.real(), e.standard_error.imag()}},
                       {"predicted_direct", e.predicted_direct},
                       {"predicted_contour", e.predicted_contour},
                       {"z", {nan_safe(e.z_real), nan_safe(e.z_imag)}}});
    if (gate) {
      for (double z : {e.z_real, e.z_imag}) {
        if (!std::isnan(z) && std::abs(z) > *gate) gate_failed = true;
      }
    }
  }
  json rep{{"schema", "rmtlab.lss_report/1"},
           {"command", "lss"},
           {"plan", plan_json(plan)},
           {"f", f.name()},
           {"g", g.name()},
           {"u", {angles_json(lc.t1), angles_json(lc.t2)}},
           {"v", {angles_json(lc.t3), angles_json(lc.t4)}},
           {"max_abs_z", run.report.max_abs_z},
           {"max_contour_direct_abs_diff", run.report.max_route_gap},
           {"entries", entries}};
  if (gate) rep["gate"] = {{"z_threshold", *gate}, {"passed", !gate_failed}};
  SimulationOutcome outcome;
  outcome.outputs.add("lss_statistics.csv", stats.str());
  outcome.outputs.add("lss.csv", cmp.str());
  outcome.outputs.add("report.json", rep.dump(2) + "\n");
  outcome.gate_failed = gate_failed;
  return outcome;
}

// ---------------------------------------------------------------------------
// gp

inline Outputs cmd_gp(const json& config, const RunContext&) {
  const ConfigReader cfg(config, "gp", {"y", "case", "form", "grid.t_pairs", "grid.sigma", "samples", "seed"});
  const auto ratios = parse_ratios(cfg);
  if (ratios.size() != 1) throw config_error("'y' must be a single value for gp");
  const AspectRatio ratio = ratios.front();
  CovarianceCase c;
  KernelForm form;
  try {
    c = parse_covariance_case(cfg.get<std::string>("case", "real"));
    form = parse_kernel_form(cfg.get<std::string>("form", "DividedDifference"));
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  const std::size_t count = cfg.get<std::size_t>("samples", 10000);
  if (count < 2) throw config_error("'samples' must be at least 2");
  const std::uint64_t seed = cfg.get<std::uint64_t>("seed", 1);
  GridSpec grid;
  if (!cfg.has("grid.t_pairs")) throw config_error("missing required key 'grid.t_pairs'");
  grid.t_pairs = cfg.angle_pairs("grid.t_pairs");
  const auto sigmas = parse_sigmas(cfg, "grid.sigma");
  if (sigmas.empty()) throw config_error("'grid.sigma' must list at least one shift");
  for (double s : sigmas) grid.shifts.push_back(SpectralShift::sigma(s));
  const std::size_t m = grid.t_pairs.front().first.dimension();
  try {
    grid.validate(m);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }

  const GridKernelMatrix km = build_kernel_matrix(grid, c, ratio, form);
  const GpPaths paths = sample_paths(km, count, StreamKey(seed));
  StatisticArray arr(count, grid.size());
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t k = 0; k < grid.size(); ++k) arr(r, k) = paths.paths(r, k);
  }
  const EmpiricalMoments em = empirical_cov(arr);

  std::ostringstream csv;
  csv << "#schema=rmtlab.gp/1\n";
  csv << "i,j,kernel,empirical,se,z\n";
  json entries = json::array();
  double max_z = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = i; j < grid.size(); ++j) {
      const double emp = em.pseudo_cov(i, j).real();
      const double se = em.pseudo_se(i, j).real();
      const double z = detail::z_score(emp, km.K(i, j), se);
      if (!std::isnan(z)) max_z = std::max(max_z, std::abs(z));
      csv << i << ',' << j << ',' << fmt(km.K(i, j)) << ',' << fmt(emp) << ',' << fmt(se) << ',' << fmt(z) << '\n';
      entries.push_back({{"i", i}, {"j", j}, {"kernel", km.K(i, j)}, {"empirical", emp}, {"standard_error", se},
                         {"z", std::isnan(z) ? json(nullptr) : json(z)}});
    }
  }
  json rep{{"schema", "rmtlab.gp_report/1"},
           {"command", "gp"},
           {"y", ratio.value()},
           {"case", to_string(c)},
           {"form", to_string(form)},
           {"samples", count},
           {"seed", seed},
           {"min_eigenvalue", km.min_eigenvalue},
           {"jitter", paths.jitter},
           {"max_abs_z", max_z},
           {"entries", entries}};
  Outputs out;
  out.add("gp.csv", csv.str());
  out.add("report.json", rep.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------

/// Worker count from RMTLAB_WORKERS, or 1.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("RMTLAB_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

/// Runs one subcommand, writes its outputs and manifest into ctx.out_dir,
/// and returns the process exit code.
inline int run_command(const std::string& command, const json& config, RunContext ctx) {
  const auto start = std::chrono::steady_clock::now();
  try {
    if (config.is_object() && config.contains("workers")) {
      const json& w = config["workers"];
      if (!w.is_number_integer() || w.get<std::int64_t>() <= 0) {
        throw config_error("'workers' must be a positive integer");
      }
      if (ctx.workers == 0) ctx.workers = config["workers"].get<std::size_t>();
    }
    if (ctx.workers == 0) ctx.workers = default_workers();

    Outputs outputs;
    bool gate_failed = false;
    if (command == "law") {
      outputs = cmd_law(config, ctx);
    } else if (command == "kernel") {
      outputs = cmd_kernel(config, ctx);
    } else if (command == "simulate") {
      auto r = cmd_simulate(config, ctx);
      outputs = std::move(r.outputs);
      gate_failed = r.gate_failed;
    } else if (command == "lss") {
      auto r = cmd_lss(config, ctx);
      outputs = std::move(r.outputs);
      gate_failed = r.gate_failed;
    } else if (command == "gp") {
      outputs = cmd_gp(config, ctx);
    } else {
      throw config_error("unknown command '" + command + "'");
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest{{"schema", "rmtlab.manifest/1"},
                  {"command", command},
                  {"version", RMTLAB_VERSION},
                  {"config", config},
                  {"workers", ctx.workers},
                  {"wall_time_seconds", wall},
                  {"outputs", json::array()}};
    if (config.contains("seed")) manifest["seeds"]["seed"] = config["seed"];
    if (config.contains("frame.seed")) manifest["seeds"]["frame.seed"] = config["frame.seed"];
    for (const auto& [name, content] : outputs.files) manifest["outputs"].push_back(name);
    outputs.add("manifest.json", manifest.dump(2) + "\n");
    outputs.write(ctx.out_dir);
    if (gate_failed) {
      *ctx.log << "rmtlab: gate failed (|z| above threshold)\n";
      return kGateFailure;
    }
    return kSuccess;
  } catch (const config_error& e) {
    *ctx.log << "rmtlab: configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    *ctx.log << "rmtlab: configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    *ctx.log << "rmtlab: numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

/// Loads a configuration file, or the "config" member of a manifest.
inline json load_config(const std::filesystem::path& path, bool manifest) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path.string() + ": " + e.what());
  }
  if (!manifest) return j;
  if (!j.is_object() || !j.contains("config")) throw config_error(path.string() + " is not a manifest");
  return j["config"];
}

}  // namespace rmtlab::cli
