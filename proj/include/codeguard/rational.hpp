#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

#include "codeguard/error.hpp"

namespace codeguard {

/// Exact non-negative-denominator fraction. Rates such as 0.05 and 1.5 are
/// converted through their shortest decimal form so that 0.05 * 1.5 * 1000 is
/// exactly 75 rather than 75.00000000000001.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw Error(ErrorCode::InvalidArgument, "zero denominator");
    normalize();
  }

  static Rational from_double(double v) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite rate");
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
    if (ec != std::errc{}) throw Error(ErrorCode::InvalidArgument, "rate not representable");
    std::string s(buf, end);
    bool negative = false;
    if (!s.empty() && s[0] == '-') {
      negative = true;
      s.erase(0, 1);
    }
    std::int64_t num = 0;
    std::int64_t den = 1;
    bool after_point = false;
    for (char c : s) {
      if (c == '.') {
        after_point = true;
        continue;
      }
      if (num > (std::numeric_limits<std::int64_t>::max() - 9) / 10 ||
          (after_point && den > std::numeric_limits<std::int64_t>::max() / 10)) {
        throw Error(ErrorCode::InvalidArgument, "rate has too many digits: " + s);
      }
      num = num * 10 + (c - '0');
      if (after_point) den *= 10;
    }
    return Rational(negative ? -num : num, den);
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  std::int64_t floor() const {
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ < 0) --q;
    return q;
  }

  std::int64_t ceil() const {
    std::int64_t q = num_ / den_;
    if (num_ % den_ != 0 && num_ > 0) ++q;
    return q;
  }

  friend Rational operator*(const Rational& a, const Rational& b) {
    const std::int64_t g1 = std::gcd(a.num_, b.den_);
    const std::int64_t g2 = std::gcd(b.num_, a.den_);
    const std::int64_t n1 = g1 == 0 ? a.num_ : a.num_ / g1;
    const std::int64_t d2 = g1 == 0 ? b.den_ : b.den_ / g1;
    const std::int64_t n2 = g2 == 0 ? b.num_ : b.num_ / g2;
    const std::int64_t d1 = g2 == 0 ? a.den_ : a.den_ / g2;
    return Rational(n1 * n2, d1 * d2);
  }

  friend bool operator==(const Rational& a, const Rational& b) = default;

  std::string to_string() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// count / r as a double, computed as count * den / num.
inline double ratio(std::int64_t count, const Rational& r) {
  if (r.num() == 0) throw Error(ErrorCode::InvalidArgument, "division by zero rate");
  return static_cast<double>(count * r.den()) / static_cast<double>(r.num());
}

}  // namespace codeguard
