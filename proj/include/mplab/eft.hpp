#pragma once

// Error-free transformations and compensated reductions at a fixed working
// precision T (float or double). Nothing here widens silently: a float dot2
// runs entirely in float.
//
// These routines must be compiled without floating-point contraction
// (-ffp-contract=off); a fused a*b+c would break the exactness of two_sum.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mplab/precision.hpp"

namespace mplab::eft {

template <class T>
struct SumErr {
  T value;
  T error;
};

/// Knuth's branch-free TwoSum: value = fl(a+b), value + error == a + b.
template <class T>
inline SumErr<T> two_sum(T a, T b) {
  const T s = a + b;
  const T bb = s - a;
  const T e = (a - (s - bb)) + (b - bb);
  return {s, e};
}

/// Dekker's FastTwoSum, valid when |a| >= |b| (or a == 0).
template <class T>
inline SumErr<T> fast_two_sum(T a, T b) {
  const T s = a + b;
  return {s, b - (s - a)};
}

/// value = fl(a*b), value + error == a*b, via a fused multiply-add.
/// Exact unless the product underflows into the subnormal range.
template <class T>
inline SumErr<T> two_prod(T a, T b) {
  const T p = a * b;
  return {p, std::fma(a, b, -p)};
}

/// Veltkamp/Dekker split: a == hi + lo with each half fitting in
/// ceil(p/2) bits.
template <class T>
inline SumErr<T> split(T a) {
  constexpr int digits = std::numeric_limits<T>::digits;
  constexpr T factor = static_cast<T>((std::uint64_t{1} << ((digits + 1) / 2)) + 1);
  const T c = factor * a;
  const T hi = c - (c - a);
  return {hi, a - hi};
}

/// Same contract as two_prod, without fma (Dekker's algorithm).
template <class T>
inline SumErr<T> two_prod_dekker(T a, T b) {
  const T p = a * b;
  const auto [ah, al] = split(a);
  const auto [bh, bl] = split(b);
  const T e = al * bl - (((p - ah * bh) - al * bh) - ah * bl);
  return {p, e};
}

/// Unevaluated sum hi + lo. Normal form: hi == fl(hi + lo).
template <class T>
struct Expansion2 {
  T hi{};
  T lo{};

  T value() const { return hi + lo; }
  friend bool operator==(const Expansion2&, const Expansion2&) = default;
};

/// Merge two expansions: TwoSum of the leading terms, fold in both error
/// terms, renormalise. Cancellation in the leading terms can leave the
/// folded error larger than the leading sum, so renormalisation uses TwoSum
/// rather than FastTwoSum.
template <class T>
inline Expansion2<T> expansion2_combine(Expansion2<T> a, Expansion2<T> b) {
  const auto [s, e] = two_sum(a.hi, b.hi);
  const auto [t, f] = two_sum(a.lo, b.lo);
  const auto [h1, l1] = two_sum(s, e + t);
  const auto [h2, l2] = two_sum(h1, l1 + f);
  return {h2, l2};
}

template <class T>
inline Expansion2<T> to_expansion(T v) {
  return {v, T{0}};
}

/// Compensated dot product (Ogita-Rump-Oishi Dot2) as an unevaluated pair.
template <class T>
Expansion2<T> dot2_expansion(std::span<const T> x, std::span<const T> y) {
  require(x.size() == y.size(), "dot2: length mismatch");
  require(!x.empty(), "dot2: empty vectors");
  auto [p, s] = two_prod(x[0], y[0]);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const auto [h, r] = two_prod(x[i], y[i]);
    const auto [pn, q] = two_sum(p, h);
    p = pn;
    s = s + (q + r);
  }
  const auto [hi, lo] = two_sum(p, s);
  return {hi, lo};
}

template <class T>
T dot2(std::span<const T> x, std::span<const T> y) {
  return dot2_expansion(x, y).value();
}

/// Plain recursive dot at working precision.
template <class T>
T dot_plain(std::span<const T> x, std::span<const T> y) {
  require(x.size() == y.size(), "dot: length mismatch");
  T s{0};
  for (std::size_t i = 0; i < x.size(); ++i) s = s + x[i] * y[i];
  return s;
}

/// Working-precision products, binary64 accumulator.
template <class T>
double dot_wide(std::span<const T> x, std::span<const T> y) {
  require(x.size() == y.size(), "dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<double>(static_cast<T>(x[i] * y[i]));
  return s;
}

/// Ill-conditioned dot product with exactly known value.
template <class T>
struct DotProblem {
  std::vector<T> x;
  std::vector<T> y;
  double exact_value = 0.0;     // exact dot rounded once to binary64
  double achieved_cond = 1.0;   // sum|x_i y_i| / |sum x_i y_i|, computed exactly
};

class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

/// Largest target condition number gen_dot accepts for T: 1/u^2 with the
/// rounding unit u = 2^-(digits-1).
template <class T>
double max_reachable_cond() {
  return std::ldexp(1.0, 2 * (std::numeric_limits<T>::digits - 1));
}

/// Generator in the style of Ogita-Rump-Oishi GenDot. Deterministic in
/// `seed`; retries with derived seeds until achieved_cond lies within a
/// factor 100 of `target_cond`.
template <class T>
DotProblem<T> gen_dot(int n, double target_cond, std::uint64_t seed);

/// Exact sum_i x_i*y_i rounded to binary64 (arbitrary-precision rationals).
template <class T>
double exact_dot(std::span<const T> x, std::span<const T> y);

/// |value - exact| / |exact| with the difference taken exactly.
template <class T>
double relative_error(const DotProblem<T>& p, double value);

}  // namespace mplab::eft
