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

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rmtlab {

/// Spherical angles t = (t_1, ..., t_m) indexing a unit vector on a frame of
/// m + 1 orthonormal vectors. An empty tuple addresses the first frame vector.
class AngleTuple {
 public:
  AngleTuple() = default;
  explicit AngleTuple(std::vector<double> t) : t_(std::move(t)) {
    for (double v : t_) {
      if (!std::isfinite(v)) throw std::invalid_argument("angles must be finite");
    }
  }
  AngleTuple(std::initializer_list<double> t) : AngleTuple(std::vector<double>(t)) {}

  std::size_t dimension() const noexcept { return t_.size(); }
  double operator[](std::size_t i) const { return t_[i]; }
  const std::vector<double>& values() const noexcept { return t_; }

  bool operator==(const AngleTuple&) const = default;

 private:
  std::vector<double> t_;
};

/// Coefficients c_1..c_{m+1} with x(t) = sum_k c_k x_k:
/// c_1 = cos t_1, c_k = sin t_1 ... sin t_{k-1} cos t_k, c_{m+1} = prod sin t_j.
inline std::vector<double> sphere_coefficients(const AngleTuple& t) {
  const std::size_t m = t.dimension();
  std::vector<double> c(m + 1);
  double sines = 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    c[k] = sines * std::cos(t[k]);
    sines *= std::sin(t[k]);
  }
  c[m] = sines;
  return c;
}

inline void require_same_dimension(const AngleTuple& t, const AngleTuple& s) {
  if (t.dimension() != s.dimension()) {
    std::ostringstream msg;
    msg << "angle tuples differ in dimension: " << t.dimension() << " vs " << s.dimension();
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace rmtlab
