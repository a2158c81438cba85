#include "mbu/dbn/rng.hpp"

#include "mbu/errors.hpp"

namespace mbu::dbn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  // FNV-1a over the name, then avalanche with the root and index.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(splitmix64(root ^ h) + index);
}

Rng Rng::substream(std::uint64_t root, std::string_view name) { return Rng(mix_seed(root, name)); }

Rng Rng::substream(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return Rng(mix_seed(root, name, index));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractViolation("Rng::below(0)");
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace mbu::dbn
