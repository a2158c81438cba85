#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mbu/errors.hpp"

namespace mbu::dbn {

inline constexpr int kMaxVars = 16;

/// Total Boolean assignment to one class of variables. Bit i holds the value
/// of the i-th declared variable of that class.
template <class Tag>
class BitVec {
 public:
  constexpr BitVec() = default;
  constexpr BitVec(std::uint32_t bits, int width) : bits_(bits), width_(static_cast<std::uint8_t>(width)) {
    if (width < 0 || width > kMaxVars) throw ContractViolation("bit vector width out of range");
    if (width < 32 && (bits >> width) != 0) throw ContractViolation("bit vector has bits beyond its width");
  }

  static BitVec from_bools(const std::vector<bool>& values) {
    std::uint32_t b = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i]) b |= 1u << i;
    return BitVec(b, static_cast<int>(values.size()));
  }

  /// Parses a string of '0'/'1' characters in declaration order ("100" = first var true).
  static BitVec parse(const std::string& text) {
    std::vector<bool> v;
    for (char c : text) {
      if (c != '0' && c != '1') throw ParseError("bad bit string '" + text + "'");
      v.push_back(c == '1');
    }
    return from_bools(v);
  }

  constexpr std::uint32_t bits() const { return bits_; }
  constexpr int width() const { return width_; }
  constexpr bool operator[](int i) const { return (bits_ >> i) & 1u; }

  BitVec with(int i, bool value) const {
    std::uint32_t b = value ? (bits_ | (1u << i)) : (bits_ & ~(1u << i));
    return BitVec(b, width_);
  }

  std::string to_string() const {
    std::string s;
    for (int i = 0; i < width_; ++i) s.push_back((*this)[i] ? '1' : '0');
    return s;
  }

  friend constexpr bool operator==(const BitVec&, const BitVec&) = default;
  friend constexpr auto operator<=>(const BitVec&, const BitVec&) = default;

 private:
  std::uint32_t bits_ = 0;
  std::uint8_t width_ = 0;
};

using StateVec = BitVec<struct StateTag>;
using ActionVec = BitVec<struct ActionTag>;
using ObsVec = BitVec<struct ObsTag>;

/// Enumeration index -> action, ordered lexicographically over (var0, var1, ...)
/// with false < true and var0 most significant.
inline ActionVec lex_action(std::uint32_t index, int width) {
  std::uint32_t b = 0;
  for (int i = 0; i < width; ++i)
    if ((index >> (width - 1 - i)) & 1u) b |= 1u << i;
  return ActionVec(b, width);
}

}  // namespace mbu::dbn
