#pragma once

// Matrix-free spectral-element kernels for -Laplace(u) = f on a box, in the
// decomposition of the Nekbone CG loop. Every kernel takes the context of its
// section; with an IEEE context it runs natively at precision T and tallies
// the same operation counts the instrumented path would.

#include <span>
#include <vector>

#include "mplab/arith.hpp"
#include "mplab/gs.hpp"
#include "mplab/mesh.hpp"

namespace mplab::sem {

using arith::ArithmeticContext;

enum class DotMode { plain, wide, dot2 };
std::string_view to_string(DotMode m);
DotMode parse_dot_mode(std::string_view s);

/// C (m x n) = A (m x k) * B (k x n), row-major, loops i, j, then k innermost.
/// No epoch change: callers own the epoch.
template <class T>
void mxm(const T* a, int m, int k, const T* b, int n, T* c, ArithmeticContext& ctx);

/// Shape-checked mxm; starts a new epoch.
template <class T>
void mxm(std::span<const T> a, int m, int k, std::span<const T> b, int n, std::span<T> c, ArithmeticContext& ctx);

/// Operator data cast once to the working precision.
template <class T>
struct OperatorData {
  int n = 0;
  std::vector<T> d;   // n x n, row-major
  std::vector<T> dt;  // transpose
  std::vector<T> g_rr, g_ss, g_tt;
  std::vector<T> mask;
};

template <class T>
OperatorData<T> prepare_operator(const BoxMesh& mesh);

/// Reference-element gradient of one element: ur, us, ut of size n^3.
template <class T>
void local_grad3(const T* u, const T* d, const T* dt, int n, T* ur, T* us, T* ut, ArithmeticContext& ctx);

/// Transpose: w = D_r^T ur + D_s^T us + D_t^T ut. `scratch` holds 2 n^3.
template <class T>
void local_grad3_t(const T* ur, const T* us, const T* ut, const T* d, const T* dt, int n, T* w, T* scratch,
                   ArithmeticContext& ctx);

/// Element stiffness applied to every element, no assembly.
template <class T>
void ax_local(const Field<T>& p, Field<T>& w, const OperatorData<T>& op, ArithmeticContext& ctx);

/// w = mask * gs(A_local p).
template <class T>
void ax_apply(const Field<T>& p, Field<T>& w, const OperatorData<T>& op, const gs::GsPlan& plan,
              ArithmeticContext& ax_ctx, ArithmeticContext& gs_ctx);

/// Per-rank sums of a_i c_i b_i over each rank's elements in ascending
/// element and node order. plain accumulates at T, wide in binary64 (the
/// accumulation is never instrumented), dot2 is compensated at T and also
/// returns expansion partials.
template <class T>
gs::Partials glsc3_local(const Field<T>& a, const Field<T>& c, const Field<T>& b, DotMode mode,
                         const gs::GsPlan& plan, ArithmeticContext& ctx);

/// p = beta * p + z
template <class T>
void add2s1(Field<T>& p, const Field<T>& z, double beta, ArithmeticContext& ctx);

/// x = x + alpha * p
template <class T>
void add2s2(Field<T>& x, const Field<T>& p, double alpha, ArithmeticContext& ctx);

struct Problem {
  Field<double> rhs;        // assembled, masked weak-form load
  Field<double> reference;  // u* at the nodes (zero for the noise load)
};

/// manufactured: f = 3 pi^2 u* with u* = sin(pi x) sin(pi y) sin(pi z).
/// sensitive: the manufactured load scaled by 1 + sin(1e9 cos(x))/2, then
///            renormalised to its original norm.
/// noise: nodal values uniform in [-1, 1) per global dof, keyed by the dof
///        id only, used directly as the discrete load (no mass weighting).
enum class Load { manufactured, sensitive, noise };
std::string_view to_string(Load l);
Load parse_load(std::string_view s);

/// Weak-form load on the unit cube. Multiplications and assembly additions
/// go through `init`. Throws UnsupportedDomain off the unit cube.
Problem build_problem(const BoxMesh& mesh, ArithmeticContext& init, Load load = Load::manufactured);

/// Assembled operator diagonal from dense probing of the element matrix,
/// in binary64; masked dofs get 1. Throws NumericError on a nonpositive
/// unmasked entry.
Field<double> jacobi_diagonal(const BoxMesh& mesh, const gs::GsPlan& plan);

/// Analytic operation counts.
inline std::uint64_t mxm_flops(std::uint64_t m, std::uint64_t n, std::uint64_t k) { return 2 * m * n * k; }
inline std::uint64_t local_grad3_flops(std::uint64_t n) { return 3 * mxm_flops(n * n, n, n); }
inline std::uint64_t ax_element_flops(std::uint64_t n) {
  return 2 * local_grad3_flops(n) + 3 * n * n * n + 2 * n * n * n;
}

}  // namespace mplab::sem
