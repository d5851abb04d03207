#pragma once

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>

#include "lumpvol/error.hpp"
#include "lumpvol/sphere_grid.hpp"

namespace lumpvol {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using BigFloat = boost::multiprecision::cpp_bin_float_50;

// s^2 either as a rational multiple of pi (exact path) or as a plain real.
struct CouplingValue {
  std::optional<Rational> over_pi;
  double value = 0.0;

  static CouplingValue pi_multiple(const Rational& rho) {
    return {rho, static_cast<double>(rho) * kPi};
  }
  static CouplingValue real(double v) { return {std::nullopt, v}; }
  BigFloat big() const {
    if (over_pi) return BigFloat(*over_pi) * boost::math::constants::pi<BigFloat>();
    return BigFloat(value);
  }
};

namespace detail {

inline std::optional<Rational> parse_rational(std::string s) {
  if (s.empty()) return std::nullopt;
  const auto slash = s.find('/');
  if (slash != std::string::npos) {
    auto num = parse_rational(s.substr(0, slash));
    auto den = parse_rational(s.substr(slash + 1));
    if (!num || !den || *den == 0) return std::nullopt;
    return *num / *den;
  }
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '+' || s[0] == '-') {
    neg = s[0] == '-';
    i = 1;
  }
  BigInt num = 0, den = 1;
  bool seen_digit = false, seen_dot = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      num = num * 10 + (c - '0');
      if (seen_dot) den *= 10;
      seen_digit = true;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!seen_digit) return std::nullopt;
  Rational q(num, den);
  return neg ? Rational(-q) : q;
}

}  // namespace detail

// Accepts "16pi", "16*pi", "pi", "3/2pi", "50.27", "1e8".
inline CouplingValue parse_coupling(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s.size() >= 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
    std::string head = s.substr(0, s.size() - 2);
    if (!head.empty() && head.back() == '*') head.pop_back();
    if (head.empty()) return CouplingValue::pi_multiple(Rational(1));
    if (auto q = detail::parse_rational(head)) return CouplingValue::pi_multiple(*q);
    throw InvalidArgument("cannot parse coupling '" + text + "'");
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw InvalidArgument("cannot parse coupling '" + text + "'");
    return CouplingValue::real(v);
  } catch (const std::logic_error&) {
    throw InvalidArgument("cannot parse coupling '" + text + "'");
  }
}

struct FormulaInput {
  int b = 0;
  int r = 1;
  int k = 1;
  std::optional<CouplingValue> s2;
  Rational vol = 1;

  int q() const { return b + (k + 1) * (r + 1 - b) - 1; }
  int m() const { return (k + 1) * r - k * (b - 1); }
};

// r >= 1 and r > 2b - 2 (Riemann-Roch range); k >= 1, b >= 0.
inline void validate(const FormulaInput& in) {
  if (in.b < 0) throw InvalidGenusDegree("genus b must be >= 0");
  if (in.k < 1) throw InvalidGenusDegree("target dimension k must be >= 1");
  if (in.r < 1) throw InvalidGenusDegree("degree r must be >= 1");
  if (!(in.r > 2 * in.b - 2))
    throw InvalidGenusDegree("degree r = " + std::to_string(in.r) + " violates r > 2b - 2 = " + std::to_string(2 * in.b - 2));
  if (in.q() < 1) throw InvalidGenusDegree("moduli dimension q must be >= 1");
  if (in.vol <= 0) throw InvalidArgument("surface volume must be positive");
}

inline BigInt factorial(int n) {
  BigInt f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}
inline BigInt ipow(BigInt base, int e) {
  BigInt out = 1;
  for (int i = 0; i < e; ++i) out *= base;
  return out;
}

// (k+1)^b / q!
inline Rational main_volume(const FormulaInput& in) {
  validate(in);
  return Rational(ipow(in.k + 1, in.b), factorial(in.q()));
}

inline int dim_hol(const FormulaInput& in) {
  validate(in);
  return in.m();
}

inline int strata_dim(const FormulaInput& in, int l) {
  validate(in);
  if (l < 0 || l > in.r) throw InvalidArgument("strata_dim: need 0 <= l <= r");
  return in.k * (in.r - in.b + 1) + in.r - in.k * l;
}

inline Rational baptista_term_coefficient(const FormulaInput& in, int i) {
  return Rational(factorial(in.b) * ipow(in.k + 1, in.b - i),
                  factorial(i) * factorial(in.q() - i) * factorial(in.b - i));
}

inline void check_bradlow(const FormulaInput& in) {
  if (!in.s2) throw InvalidArgument("baptista_volume: s^2 is required");
  const auto& s = *in.s2;
  bool below;
  if (s.over_pi)
    below = *s.over_pi * in.vol < 4 * in.r;
  else
    below = s.value * static_cast<double>(in.vol) < 4.0 * kPi * in.r;
  if (below) throw BradlowViolation("s^2 is below the stability bound 4 pi r / Vol");
}

// Exact value when s^2 is a rational multiple of pi.
inline std::optional<Rational> baptista_volume_exact(const FormulaInput& in) {
  validate(in);
  check_bradlow(in);
  if (!in.s2->over_pi) return std::nullopt;
  const Rational x = Rational(4) / *in.s2->over_pi;  // 4 pi / s^2
  const Rational y = in.vol - x * in.r;               // Vol - 4 pi r / s^2
  Rational total = 0;
  for (int i = 0; i <= in.b; ++i) {
    Rational xi = 1, yi = 1;
    for (int e = 0; e < i; ++e) xi *= x;
    for (int e = 0; e < in.q() - i; ++e) yi *= y;
    total += baptista_term_coefficient(in, i) * xi * yi;
  }
  return total;
}

inline BigFloat baptista_volume_big(const FormulaInput& in) {
  validate(in);
  check_bradlow(in);
  if (auto ex = baptista_volume_exact(in)) return BigFloat(*ex);
  const BigFloat x = BigFloat(4) * boost::math::constants::pi<BigFloat>() / in.s2->big();
  const BigFloat y = BigFloat(in.vol) - x * in.r;
  BigFloat total = 0;
  for (int i = 0; i <= in.b; ++i)
    total += BigFloat(baptista_term_coefficient(in, i)) * pow(x, i) * pow(y, in.q() - i);
  return total;
}

inline double baptista_volume(const FormulaInput& in) { return static_cast<double>(baptista_volume_big(in)); }

inline std::string rational_string(const Rational& q) {
  const BigInt n = boost::multiprecision::numerator(q), d = boost::multiprecision::denominator(q);
  if (d == 1) return n.str();
  return n.str() + "/" + d.str();
}

// "1/q! x (k+1)^b" with the first factor reduced.
inline std::string factored_main_string(const FormulaInput& in) {
  validate(in);
  return rational_string(Rational(1, factorial(in.q()))) + " × " + std::to_string(in.k + 1) + "^" + std::to_string(in.b);
}

}  // namespace lumpvol
