#include "mbu/dbn/fraction.hpp"

#include <charconv>
#include <numeric>

#include "mbu/errors.hpp"

namespace mbu::dbn {

namespace {

int digits(std::uint32_t v) {
  int n = 1;
  while (v >= 10) {
    v /= 10;
    ++n;
  }
  return n;
}

}  // namespace

Fraction::Fraction(std::uint32_t num, std::uint32_t den) {
  if (den == 0) throw ContractViolation("fraction with zero denominator");
  if (num > den) throw ContractViolation("probability fraction exceeds 1");
  std::uint32_t g = std::gcd(num, den);
  if (g == 0) g = 1;
  num_ = num / g;
  den_ = den / g;
  if (num_ == 0) den_ = 1;
}

Fraction Fraction::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) throw ParseError("expected n/d, got '" + std::string(text) + "'");
  std::uint32_t n = 0, d = 0;
  auto num_part = text.substr(0, slash);
  auto den_part = text.substr(slash + 1);
  auto r1 = std::from_chars(num_part.data(), num_part.data() + num_part.size(), n);
  auto r2 = std::from_chars(den_part.data(), den_part.data() + den_part.size(), d);
  if (r1.ec != std::errc{} || r1.ptr != num_part.data() + num_part.size() || r2.ec != std::errc{} ||
      r2.ptr != den_part.data() + den_part.size() || d == 0 || n > d)
    throw ParseError("bad fraction '" + std::string(text) + "'");
  return Fraction(n, d);
}

int Fraction::digit_count() const { return digits(num_) + digits(den_); }

std::string Fraction::to_string() const { return std::to_string(num_) + "/" + std::to_string(den_); }

}  // namespace mbu::dbn
