#pragma once

// Emulated floating-point arithmetic: a VPREC-style reduced-format rounding
// backend and two Monte Carlo Arithmetic backends (random rounding and full
// MCA), all reached through ArithmeticContext::perform.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mplab::arith {

class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Emulated binary format: `mantissa_bits` explicit fraction bits (t) and
/// `exponent_bits` (r), with IEEE-style bias 2^(r-1)-1 and gradual underflow.
struct PrecisionFormat {
  int mantissa_bits = 52;
  int exponent_bits = 11;

  constexpr int emax() const { return (1 << (exponent_bits - 1)) - 1; }
  constexpr int emin() const { return 1 - emax(); }
  constexpr bool valid() const {
    return mantissa_bits >= 1 && mantissa_bits <= 52 && exponent_bits >= 2 && exponent_bits <= 11;
  }
  void validate() const;

  friend constexpr bool operator==(PrecisionFormat, PrecisionFormat) = default;
};

inline constexpr PrecisionFormat kHalf{10, 5};
inline constexpr PrecisionFormat kSingle{23, 8};
inline constexpr PrecisionFormat kDouble{52, 11};

/// Rounding unit 2^-t of a format (Table-1 convention: single -> 2^-23).
inline double rounding_unit(PrecisionFormat f) { return std::ldexp(1.0, -f.mantissa_bits); }

/// Round a binary64 value onto `fmt` with round-to-nearest-even, honouring the
/// emulated overflow threshold and subnormal range. Throws FormatError.
double round_vprec(double x, PrecisionFormat fmt);

/// MCA noise function: x + 2^(e_x - t) * xi with e_x = floor(log2|x|) + 1.
/// Zero and non-finite inputs are returned unchanged.
double inexact(double x, int t, double xi);

namespace detail {

inline double round_vprec_unchecked(double x, PrecisionFormat fmt) {
  constexpr std::uint64_t kSign = 0x8000'0000'0000'0000ull;
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const std::uint64_t sign = bits & kSign;
  std::uint64_t mag = bits & ~kSign;
  const int biased = static_cast<int>(mag >> 52);
  if (biased == 0x7ff || mag == 0) return x;  // inf, nan, +-0
  const int emax = fmt.emax();
  const int emin = fmt.emin();
  const int e = biased - 1023;
  if (biased != 0 && e >= emin) {
    if (e > emax) return std::copysign(std::numeric_limits<double>::infinity(), x);
    const int drop = 52 - fmt.mantissa_bits;
    if (drop > 0) {
      const std::uint64_t mask = (std::uint64_t{1} << drop) - 1;
      const std::uint64_t half = (std::uint64_t{1} << (drop - 1)) - 1 + ((mag >> drop) & 1);
      mag = (mag + half) & ~mask;
      if (static_cast<int>(mag >> 52) - 1023 > emax)
        return std::copysign(std::numeric_limits<double>::infinity(), x);
    }
    return std::bit_cast<double>(sign | mag);
  }
  // Emulated subnormal range: quantum is 2^(emin - t).
  const double scaled = std::ldexp(x, fmt.mantissa_bits - emin);
  return std::ldexp(std::nearbyint(scaled), emin - fmt.mantissa_bits);
}

inline double inexact_unchecked(double x, int t, double xi) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  int e = 0;
  (void)std::frexp(x, &e);  // |x| = m * 2^e, m in [0.5, 1)  =>  e == floor(log2|x|) + 1
  return x + std::ldexp(xi, e - t);
}

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t hash_label(std::string_view s);

}  // namespace detail

enum class Op : std::uint8_t { add, sub, mul, div, sqrt };
inline constexpr int kOpCount = 5;
std::string_view to_string(Op op);

/// Which arithmetic a context emulates.
struct Backend {
  enum class Kind : std::uint8_t { ieee, vprec, mca_rr, mca_full };

  Kind kind = Kind::ieee;
  PrecisionFormat format = kDouble;  // vprec only
  int virtual_precision = 53;        // mca only; 53 is full binary64

  static Backend ieee() { return {}; }
  static Backend vprec(PrecisionFormat f) { return {Kind::vprec, f, 53}; }
  static Backend mca_rr(int t) { return {Kind::mca_rr, kDouble, t}; }
  static Backend mca_full(int t) { return {Kind::mca_full, kDouble, t}; }

  void validate() const;
  /// "ieee", "vprec:<t>:<r>", "mca_rr:<t>", "mca_full:<t>"
  std::string to_string() const;
  static Backend parse(std::string_view spec);

  friend bool operator==(const Backend&, const Backend&) = default;
};

/// Instrumented arithmetic for one code section.
///
/// Noise for the MCA backends is a pure function of (seed, sample_index,
/// section label, epoch, operation, operand bits, noise slot). Kernels call
/// next_epoch() once per invocation, so a kernel that recomputes the same
/// operation on duplicated element-local copies of one value perturbs every
/// copy identically, and results do not depend on evaluation order.
class ArithmeticContext {
 public:
  enum class Slot : std::uint64_t { operand_a = 1, operand_b = 2, result = 3 };

  ArithmeticContext() : ArithmeticContext(Backend::ieee()) {}
  explicit ArithmeticContext(Backend backend, std::uint64_t seed = 0, std::uint64_t sample_index = 0,
                             std::string section = {});

  const Backend& backend() const { return backend_; }
  const std::string& section() const { return section_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t sample_index() const { return sample_index_; }

  /// True when perform() is plain binary64 arithmetic; kernels may then take
  /// a native fast path as long as they tally() the same operation counts.
  bool exact() const { return backend_.kind == Backend::Kind::ieee; }

  /// Whether MCA backends perturb sqrt (default on).
  void set_perturb_sqrt(bool on) { perturb_sqrt_ = on; }
  bool perturb_sqrt() const { return perturb_sqrt_; }

  void next_epoch() { ++epoch_; }
  std::uint64_t epoch() const { return epoch_; }

  inline double perform(Op op, double a, double b = 0.0);
  double add(double a, double b) { return perform(Op::add, a, b); }
  double sub(double a, double b) { return perform(Op::sub, a, b); }
  double mul(double a, double b) { return perform(Op::mul, a, b); }
  double div(double a, double b) { return perform(Op::div, a, b); }
  double sqrt(double a) { return perform(Op::sqrt, a); }

  /// Uniform draw on (-1/2, 1/2) for the given operation and slot.
  double noise(Slot slot, Op op, double a, double b) const;

  void tally(Op op, std::uint64_t n) { counts_[static_cast<int>(op)] += n; }
  std::uint64_t count(Op op) const { return counts_[static_cast<int>(op)]; }
  std::uint64_t flops() const;
  void reset_counts() { counts_ = {}; }

 private:
  static double native(Op op, double a, double b) {
    switch (op) {
      case Op::add: return a + b;
      case Op::sub: return a - b;
      case Op::mul: return a * b;
      case Op::div: return a / b;
      case Op::sqrt: return std::sqrt(a);
    }
    return a;
  }

  Backend backend_;
  std::uint64_t seed_ = 0;
  std::uint64_t sample_index_ = 0;
  std::string section_;
  std::uint64_t key_ = 0;
  std::uint64_t epoch_ = 0;
  bool perturb_sqrt_ = true;
  std::array<std::uint64_t, kOpCount> counts_{};
};

inline double ArithmeticContext::perform(Op op, double a, double b) {
  ++counts_[static_cast<int>(op)];
  switch (backend_.kind) {
    case Backend::Kind::ieee:
      return native(op, a, b);
    case Backend::Kind::vprec:
      return detail::round_vprec_unchecked(native(op, a, b), backend_.format);
    case Backend::Kind::mca_rr: {
      const double y = native(op, a, b);
      if (op == Op::sqrt && !perturb_sqrt_) return y;
      return detail::inexact_unchecked(y, backend_.virtual_precision, noise(Slot::result, op, a, b));
    }
    case Backend::Kind::mca_full: {
      if (op == Op::sqrt && !perturb_sqrt_) return native(op, a, b);
      const int t = backend_.virtual_precision;
      const double pa = detail::inexact_unchecked(a, t, noise(Slot::operand_a, op, a, b));
      const double pb =
          op == Op::sqrt ? b : detail::inexact_unchecked(b, t, noise(Slot::operand_b, op, a, b));
      return detail::inexact_unchecked(native(op, pa, pb), t, noise(Slot::result, op, a, b));
    }
  }
  return native(op, a, b);
}

/// Section label -> backend, with a fallback for unlisted sections. Mirrors
/// selective instrumentation ("CG loop only" vs "entire program").
class SectionMap {
 public:
  SectionMap() = default;
  explicit SectionMap(Backend fallback) : fallback_(fallback) {}

  SectionMap& set(const std::string& section, Backend b);
  Backend at(const std::string& section) const;
  const std::map<std::string, Backend>& entries() const { return entries_; }
  Backend fallback() const { return fallback_; }

  /// Same backend on every listed section, IEEE elsewhere.
  static SectionMap scoped(Backend b, std::initializer_list<std::string_view> sections);

 private:
  Backend fallback_ = Backend::ieee();
  std::map<std::string, Backend> entries_;
};

/// One context per section label, created lazily from a SectionMap.
class ContextSet {
 public:
  explicit ContextSet(SectionMap map = {}, std::uint64_t seed = 0, std::uint64_t sample_index = 0,
                      bool perturb_sqrt = true);

  ArithmeticContext& operator[](const std::string& section);
  const std::map<std::string, ArithmeticContext>& contexts() const { return contexts_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t sample_index() const { return sample_index_; }
  const SectionMap& map() const { return map_; }

 private:
  SectionMap map_;
  std::uint64_t seed_;
  std::uint64_t sample_index_;
  bool perturb_sqrt_;
  std::map<std::string, ArithmeticContext> contexts_;
};

}  // namespace mplab::arith
