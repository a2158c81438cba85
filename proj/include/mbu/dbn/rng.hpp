#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "mbu/dbn/fraction.hpp"

namespace mbu::dbn {

/// Seeded random stream. Only the raw mt19937_64 output is used, so streams are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from a root seed and a name; the result does not
  /// depend on the order in which substreams are created.
  static Rng substream(std::uint64_t root, std::string_view name);
  static Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index);

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  bool coin() { return (engine_() >> 63) != 0; }

  /// True with probability exactly f.
  bool bernoulli(const Fraction& f) { return below(f.den()) < f.num(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

}  // namespace mbu::dbn
