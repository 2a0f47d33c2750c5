#pragma once

#include <gmpxx.h>

#include <compare>
#include <concepts>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>

#include "thicken/errors.hpp"

namespace thicken {

// Exact rational in lowest terms, backed by GMP.
class Rational {
 public:
  Rational() = default;

  template <std::integral T>
  Rational(T value) : value_(to_mpz(value)) {}

  template <std::integral N, std::integral D>
  Rational(N num, D den) : value_(to_mpz(num), to_mpz(den)) {
    if (den == 0) throw InvalidArgument("zero denominator");
    value_.canonicalize();
  }

  explicit Rational(mpq_class value) : value_(std::move(value)) { value_.canonicalize(); }

  Rational(const mpz_class& num, const mpz_class& den) : value_(num, den) {
    if (den == 0) throw InvalidArgument("zero denominator");
    value_.canonicalize();
  }

  // Accepts "a/b" or "a" with optional sign.
  static Rational parse(std::string_view text) {
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
      return s;
    };
    text = trim(text);
    auto integer = [&](std::string_view s) {
      s = trim(s);
      std::string_view digits = s;
      if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) digits.remove_prefix(1);
      if (digits.empty()) throw InvalidArgument("malformed fraction '" + std::string(text) + "'");
      for (char c : digits) {
        if (c < '0' || c > '9') throw InvalidArgument("malformed fraction '" + std::string(text) + "'");
      }
      std::string owned(s.front() == '+' ? s.substr(1) : s);
      return mpz_class(owned, 10);
    };
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return Rational(integer(text), mpz_class(1));
    mpz_class num = integer(text.substr(0, slash));
    mpz_class den = integer(text.substr(slash + 1));
    if (den == 0) throw InvalidArgument("malformed fraction '" + std::string(text) + "': zero denominator");
    return Rational(num, den);
  }

  // num / 2^exponent
  static Rational dyadic(const mpz_class& num, unsigned long exponent) {
    mpq_class v(num);
    mpq_div_2exp(v.get_mpq_t(), v.get_mpq_t(), exponent);
    return Rational(std::move(v));
  }

  static Rational pow2(long exponent) {
    mpq_class v(1);
    if (exponent >= 0)
      mpq_mul_2exp(v.get_mpq_t(), v.get_mpq_t(), static_cast<unsigned long>(exponent));
    else
      mpq_div_2exp(v.get_mpq_t(), v.get_mpq_t(), static_cast<unsigned long>(-exponent));
    return Rational(std::move(v));
  }

  const mpq_class& get() const { return value_; }
  mpz_class numerator() const { return value_.get_num(); }
  mpz_class denominator() const { return value_.get_den(); }

  int sign() const { return sgn(value_); }
  bool is_zero() const { return sign() == 0; }
  bool is_integer() const { return value_.get_den() == 1; }

  std::string str() const { return value_.get_num().get_str() + "/" + value_.get_den().get_str(); }
  double to_double() const { return value_.get_d(); }

  Rational& operator+=(const Rational& o) { value_ += o.value_; return *this; }
  Rational& operator-=(const Rational& o) { value_ -= o.value_; return *this; }
  Rational& operator*=(const Rational& o) { value_ *= o.value_; return *this; }
  Rational& operator/=(const Rational& o) {
    if (o.is_zero()) throw InvalidArgument("division by zero");
    value_ /= o.value_;
    return *this;
  }

  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
  friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  friend Rational operator-(const Rational& a) { return Rational(mpq_class(-a.value_)); }

  friend bool operator==(const Rational& a, const Rational& b) { return cmp(a.value_, b.value_) == 0; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    int c = cmp(a.value_, b.value_);
    return c < 0 ? std::strong_ordering::less : c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal;
  }

  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

 private:
  template <std::integral T>
  static mpz_class to_mpz(T value) {
    if constexpr (std::is_signed_v<T>) {
      return mpz_class(static_cast<long>(value));
    } else {
      mpz_class out;
      std::uint64_t v = static_cast<std::uint64_t>(value);
      mpz_import(out.get_mpz_t(), 1, 1, sizeof(v), 0, 0, &v);
      return out;
    }
  }

  mpq_class value_;
};

inline Rational abs(const Rational& r) { return r.sign() < 0 ? -r : r; }

inline Rational pow(const Rational& base, unsigned long exponent) {
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), base.get().get_num_mpz_t(), exponent);
  mpz_pow_ui(den.get_mpz_t(), base.get().get_den_mpz_t(), exponent);
  return Rational(num, den);
}

inline const Rational& min(const Rational& a, const Rational& b) { return b < a ? b : a; }
inline const Rational& max(const Rational& a, const Rational& b) { return a < b ? b : a; }

inline mpz_class to_mpz(std::uint64_t v) {
  mpz_class out;
  mpz_import(out.get_mpz_t(), 1, 1, sizeof(v), 0, 0, &v);
  return out;
}

struct RationalHash {
  std::size_t operator()(const Rational& r) const {
    return std::hash<std::string>{}(r.str());
  }
};

}  // namespace thicken
