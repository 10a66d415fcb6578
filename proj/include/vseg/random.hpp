#pragma once

#include <cstdint>
#include <string_view>

namespace vseg {

// xoshiro256** seeded through splitmix64. All draws are computed from raw
// bits so sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed for a named stream ("phantom", "init",
// "shuffle", ...) so that consumers of one stream never perturb another.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

}  // namespace vseg
