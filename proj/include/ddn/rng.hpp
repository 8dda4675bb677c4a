#pragma once

#include <cmath>
#include <cstdint>

namespace ddn {

// Counter-based generator (splitmix64 finalizer over seed + counter).
// State is two u64 words, so mid-run snapshots serialize trivially and
// restores are bit-exact.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), ctr_(counter) {}

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (ctr_++) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via Box-Muller (one draw per call, second discarded;
  // keeps the state/counter relation simple)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return ctr_; }
  void restore(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    ctr_ = counter;
  }

  // independent stream derived from this seed
  Rng fork(std::uint64_t stream) const {
    std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ull * (stream + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace ddn
