#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace mplab {

/// Storage/arithmetic precision of a field, kernel or reduction.
enum class Precision { fp32, fp64 };

template <class T>
inline constexpr Precision precision_of = std::is_same_v<T, float> ? Precision::fp32 : Precision::fp64;

template <Precision P>
using scalar_t = std::conditional_t<P == Precision::fp32, float, double>;

inline std::string_view to_string(Precision p) { return p == Precision::fp32 ? "fp32" : "fp64"; }

inline Precision parse_precision(std::string_view s) {
  if (s == "fp32" || s == "single" || s == "float") return Precision::fp32;
  if (s == "fp64" || s == "double") return Precision::fp64;
  throw std::invalid_argument("unknown precision '" + std::string(s) + "'");
}

/// Bytes per stored value.
inline constexpr int bytes_per_value(Precision p) { return p == Precision::fp32 ? 4 : 8; }

/// Thrown when a caller violates a shape or pairing precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace mplab
