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

/// Keyed random streams. Every (seed, replication, column) triple maps to its
/// own engine, so results never depend on evaluation order or thread count.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rmtlab {

namespace detail {

// SplitMix64 finalizer; used only to spread keys before seeding an engine.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

using Engine = std::mt19937_64;

/// Hierarchical stream key. Child keys are derived by hashing, never by
/// advancing a shared engine.
class StreamKey {
 public:
  constexpr explicit StreamKey(std::uint64_t seed = 0) : key_(seed) {}

  StreamKey child(std::uint64_t index) const {
    return StreamKey(detail::mix64(key_ ^ detail::mix64(index + 0x632be59bd9b4e019ULL)));
  }

  StreamKey child(std::initializer_list<std::uint64_t> path) const {
    StreamKey k = *this;
    for (auto i : path) k = k.child(i);
    return k;
  }

  std::uint64_t value() const noexcept { return key_; }

  Engine engine() const { return Engine(detail::mix64(key_)); }

  bool operator==(const StreamKey&) const = default;

 private:
  std::uint64_t key_;
};

}  // namespace rmtlab
