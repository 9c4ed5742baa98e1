#pragma once

// Preconditioned CG in the Nekbone kernel decomposition, with every vector
// kernel and reduction at the precision chosen by a PrecisionPolicy. Scalar
// recurrences (alpha, beta, divisions) are always binary64.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mplab/arith.hpp"
#include "mplab/gs.hpp"
#include "mplab/mesh.hpp"
#include "mplab/sem.hpp"

namespace mplab::solver {

class OperatorNotSpd : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Preconditioner { identity, jacobi, sqrt_weighted_jacobi };
std::string_view to_string(Preconditioner p);
Preconditioner parse_preconditioner(std::string_view s);

enum class SqrtMode { native, promote_fp64 };
std::string_view to_string(SqrtMode m);
SqrtMode parse_sqrt_mode(std::string_view s);

/// Initialisation is always binary64 and is not a field here.
struct PrecisionPolicy {
  Precision solver_ops = Precision::fp64;
  Precision precond_ops = Precision::fp64;
  SqrtMode sqrt_mode = SqrtMode::native;
  sem::DotMode local_dot = sem::DotMode::plain;
  gs::ReducePrecision global_reduce = gs::ReducePrecision::fp64;
  Precision gs_precision = Precision::fp64;

  /// Throws PolicyError: compensated reductions need dot2 partials.
  void validate() const;
  std::string describe() const;

  static PrecisionPolicy all_fp64() { return {}; }
  static PrecisionPolicy all_fp32() {
    return {Precision::fp32, Precision::fp32, SqrtMode::native, sem::DotMode::plain, gs::ReducePrecision::fp32,
            Precision::fp32};
  }
};

struct CgConfig {
  double tol = 1e-10;
  int max_iter = 1000;
  int stagnation_window = 20;
  double stagnation_factor = 0.5;

  void validate() const;
};

struct RunReport {
  int iterations = 0;
  bool converged = false;
  bool stagnated = false;
  bool breakdown = false;
  std::string message;
  double initial_rtr = 0.0;
  std::vector<double> residual_history;  // rtr after each iteration
  std::vector<double> beta_history;      // rho = glsc3(r, c, z), Nekbone's "beta"
  std::vector<double> pap_history;
  std::map<std::string, std::uint64_t> flops;  // per section
  PrecisionPolicy policy;
  Preconditioner preconditioner = Preconditioner::identity;
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;
  sem::Field<double> solution;

  /// sqrt of the last recorded rtr (or of the initial one).
  double final_residual() const;
};

/// True iff history has >= window entries and
/// min(history[-window:]) > factor * history[-window].
bool detect_stagnation(std::span<const double> history, int window, double factor);

/// An SPD operator on masked element-local fields.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual void apply(const sem::Field<float>& p, sem::Field<float>& w, arith::ContextSet& ctx) const = 0;
  virtual void apply(const sem::Field<double>& p, sem::Field<double>& w, arith::ContextSet& ctx) const = 0;
  /// Assembled diagonal in binary64 (masked entries 1).
  virtual sem::Field<double> diagonal() const = 0;
};

/// Matrix-free Poisson operator: element stiffness, gather-scatter, mask.
class PoissonOperator final : public LinearOperator {
 public:
  PoissonOperator(const sem::BoxMesh& mesh, gs::GsPlan plan);

  void apply(const sem::Field<float>& p, sem::Field<float>& w, arith::ContextSet& ctx) const override;
  void apply(const sem::Field<double>& p, sem::Field<double>& w, arith::ContextSet& ctx) const override;
  sem::Field<double> diagonal() const override;

 private:
  const sem::BoxMesh& mesh_;
  gs::GsPlan plan_;
  sem::OperatorData<float> op32_;
  sem::OperatorData<double> op64_;
};

/// w = d * p on unmasked entries; used to test preconditioners.
class DiagonalOperator final : public LinearOperator {
 public:
  explicit DiagonalOperator(std::vector<double> d) : d_(std::move(d)) {}

  void apply(const sem::Field<float>& p, sem::Field<float>& w, arith::ContextSet& ctx) const override;
  void apply(const sem::Field<double>& p, sem::Field<double>& w, arith::ContextSet& ctx) const override;
  sem::Field<double> diagonal() const override { return sem::Field<double>(d_); }

 private:
  std::vector<double> d_;
};

/// Preconditioner data at precision U, prepared once before the loop.
template <class U>
struct PreconditionerData {
  Preconditioner kind = Preconditioner::identity;
  sem::Field<U> diag;     // jacobi
  sem::Field<U> weights;  // sqrt_weighted_jacobi
};

/// Downcasts the binary64 diagonal once. For sqrt_weighted_jacobi the weight
/// 1/(sqrt(d)*sqrt(d)) is evaluated through `ctx` at U (native), or entirely
/// in binary64 and rounded once to U (promote_fp64).
template <class U>
PreconditionerData<U> prepare_preconditioner(Preconditioner kind, const sem::Field<double>& diag, SqrtMode mode,
                                             arith::ArithmeticContext& ctx);

/// z = M^-1 r at precision U.
template <class U>
void apply_preconditioner(const sem::Field<U>& r, sem::Field<U>& z, const PreconditionerData<U>& pd,
                          arith::ArithmeticContext& ctx);

/// Section labels threaded through the solve.
namespace sections {
inline constexpr const char* init = "init";
inline constexpr const char* solveM = "solveM";
inline constexpr const char* glsc3 = "glsc3";
inline constexpr const char* add2s1 = "add2s1";
inline constexpr const char* add2s2 = "add2s2";
inline constexpr const char* ax = "ax";
inline constexpr const char* gs = "gs";
inline constexpr const char* global_sum = "global_sum";
}  // namespace sections

/// Kernels inside the CG loop.
const std::vector<std::string>& cg_only_sections();
/// Every section, including init and communication.
const std::vector<std::string>& all_sections();

/// PCG on the Poisson operator. The gather-scatter inside ax runs at
/// policy.gs_precision with plan's mode; reductions use plan's mode.
RunReport pcg_solve(const sem::BoxMesh& mesh, const sem::Field<double>& rhs, Preconditioner pc,
                    const PrecisionPolicy& policy, const gs::GsPlan& plan, const CgConfig& cfg,
                    arith::ContextSet& ctx);

/// PCG on an arbitrary operator; `mesh` supplies weights and mask, `plan`
/// the rank partition for reductions.
RunReport pcg_solve(const LinearOperator& op, const sem::BoxMesh& mesh, const sem::Field<double>& rhs,
                    Preconditioner pc, const PrecisionPolicy& policy, const gs::GsPlan& plan, const CgConfig& cfg,
                    arith::ContextSet& ctx);

}  // namespace mplab::solver
