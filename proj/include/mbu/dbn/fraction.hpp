#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mbu::dbn {

/// Exact probability n/d, always stored reduced.
class Fraction {
 public:
  Fraction() = default;
  Fraction(std::uint32_t num, std::uint32_t den);

  static Fraction parse(std::string_view text);

  std::uint32_t num() const { return num_; }
  std::uint32_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  Fraction complement() const { return Fraction(den_ - num_, den_); }

  /// True for 0 < n/d < 1, the range allowed inside a Choice node.
  bool is_proper() const { return num_ > 0 && num_ < den_; }

  /// Decimal digits of numerator plus denominator.
  int digit_count() const;

  std::string to_string() const;

  friend bool operator==(const Fraction&, const Fraction&) = default;
  friend bool operator<(const Fraction& a, const Fraction& b) {
    return static_cast<std::uint64_t>(a.num_) * b.den_ < static_cast<std::uint64_t>(b.num_) * a.den_;
  }

 private:
  std::uint32_t num_ = 0;
  std::uint32_t den_ = 1;
};

}  // namespace mbu::dbn
