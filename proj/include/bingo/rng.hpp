// SPDX-License-Identifier: Apache-2.0
//
// Seeded RNG helpers. Distribution draws are hand-rolled so streams do not
// depend on the standard library's distribution implementations.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bingo {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) { return gen_() % n; }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_int(i)]);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace bingo
