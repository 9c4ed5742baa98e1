#include "mplab/eft.hpp"

#include <gmpxx.h>
#include <mpfr.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace mplab::eft {

namespace {

mpq_class exact_dot_q(std::span<const double> x, std::span<const double> y, std::size_t count) {
  mpq_class s = 0;
  for (std::size_t i = 0; i < count; ++i) s += mpq_class(x[i]) * mpq_class(y[i]);
  return s;
}

template <class T>
mpq_class exact_dot_q(std::span<const T> x, std::span<const T> y) {
  mpq_class s = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    s += mpq_class(static_cast<double>(x[i])) * mpq_class(static_cast<double>(y[i]));
  return s;
}

// mpq -> nearest double (mpq_get_d truncates).
double to_double_nearest(const mpq_class& q) {
  if (q == 0) return 0.0;
  mpfr_t r;
  mpfr_init2(r, 53);
  mpfr_set_q(r, q.get_mpq_t(), MPFR_RNDN);
  const double d = mpfr_get_d(r, MPFR_RNDN);
  mpfr_clear(r);
  return d;
}

std::uint64_t derive_seed(std::uint64_t seed, int attempt) {
  if (attempt == 0) return seed;
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(attempt);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }  // [0,1)
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

template <class T>
double measure_cond(std::span<const T> x, std::span<const T> y) {
  mpq_class abs_sum = 0;
  mpq_class sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const mpq_class p = mpq_class(static_cast<double>(x[i])) * mpq_class(static_cast<double>(y[i]));
    sum += p;
    abs_sum += abs(p);
  }
  if (sum == 0) return std::numeric_limits<double>::infinity();
  return to_double_nearest(abs_sum / abs(sum));
}

template <class T>
DotProblem<T> gen_dot_once(int n, double target_cond, std::uint64_t seed) {
  Uniform rand(seed);
  DotProblem<T> p;
  p.x.resize(n);
  p.y.resize(n);

  if (target_cond <= 2.0) {
    // Same-sign products: condition number exactly 1.
    for (int i = 0; i < n; ++i) {
      p.x[i] = static_cast<T>(0.5 + 0.5 * rand());
      p.y[i] = static_cast<T>(0.5 + 0.5 * rand());
    }
  } else {
    const double b = std::log2(target_cond);
    const int n2 = (n + 1) / 2;
    std::vector<int> e(n2);
    for (int i = 0; i < n2; ++i) e[i] = static_cast<int>(std::lround(rand() * b / 2));
    e.front() = static_cast<int>(std::lround(b / 2)) + 1;
    e.back() = 0;
    for (int i = 0; i < n2; ++i) {
      p.x[i] = static_cast<T>(std::ldexp(2 * rand() - 1, e[i]));
      p.y[i] = static_cast<T>(std::ldexp(2 * rand() - 1, e[i]));
    }
    // Second half: exponents decay linearly to 0, each y chosen to cancel the
    // exact running sum.
    std::vector<double> xd(n), yd(n);
    for (int i = 0; i < n2; ++i) {
      xd[i] = p.x[i];
      yd[i] = p.y[i];
    }
    const int m = n - n2;
    for (int j = 0; j < m; ++j) {
      const double ej = m == 1 ? 0.0 : (b / 2) * (1.0 - static_cast<double>(j) / (m - 1));
      const int ei = static_cast<int>(std::lround(ej));
      const int i = n2 + j;
      T xi = static_cast<T>(std::ldexp(2 * rand() - 1, ei));
      if (xi == T{0}) xi = static_cast<T>(std::ldexp(1.0, ei));
      const double target = std::ldexp(2 * rand() - 1, ei);
      const double running = to_double_nearest(exact_dot_q(xd, yd, static_cast<std::size_t>(i)));
      const T yi = static_cast<T>((target - running) / static_cast<double>(xi));
      p.x[i] = xi;
      p.y[i] = yi;
      xd[i] = xi;
      yd[i] = yi;
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {  // Fisher-Yates with our own draw, portable
      const int k = static_cast<int>(rand() * (i + 1));
      std::swap(perm[i], perm[std::min(k, i)]);
    }
    std::vector<T> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = p.x[perm[i]];
      ys[i] = p.y[perm[i]];
    }
    p.x = std::move(xs);
    p.y = std::move(ys);
  }
  p.exact_value = exact_dot<T>(p.x, p.y);
  p.achieved_cond = measure_cond<T>(p.x, p.y);
  return p;
}

}  // namespace

template <class T>
double exact_dot(std::span<const T> x, std::span<const T> y) {
  require(x.size() == y.size(), "exact_dot: length mismatch");
  return to_double_nearest(exact_dot_q<T>(x, y));
}

template <class T>
double relative_error(const DotProblem<T>& p, double value) {
  const mpq_class exact = exact_dot_q<T>(p.x, p.y);
  if (exact == 0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return to_double_nearest(abs(mpq_class(value) - exact) / abs(exact));
}

template <class T>
DotProblem<T> gen_dot(int n, double target_cond, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_dot: n must be >= 2");
  if (!(target_cond >= 1.0)) throw std::invalid_argument("gen_dot: target_cond must be >= 1");
  if (target_cond > max_reachable_cond<T>())
    throw RangeError("gen_dot: condition number " + std::to_string(target_cond) +
                     " is not reachable at this working precision");
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    auto p = gen_dot_once<T>(n, target_cond, derive_seed(seed, attempt));
    if (p.achieved_cond >= target_cond / 100 && p.achieved_cond <= target_cond * 100) return p;
  }
  throw RangeError("gen_dot: no problem within a factor 100 of cond " + std::to_string(target_cond));
}

template DotProblem<float> gen_dot<float>(int, double, std::uint64_t);
template DotProblem<double> gen_dot<double>(int, double, std::uint64_t);
template double exact_dot<float>(std::span<const float>, std::span<const float>);
template double exact_dot<double>(std::span<const double>, std::span<const double>);
template double relative_error<float>(const DotProblem<float>&, double);
template double relative_error<double>(const DotProblem<double>&, double);

}  // namespace mplab::eft
