#include "mplab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mplab::solver {

using arith::ArithmeticContext;
using arith::ContextSet;
using arith::Op;
using sem::Field;

std::string_view to_string(Preconditioner p) {
  switch (p) {
    case Preconditioner::identity: return "identity";
    case Preconditioner::jacobi: return "jacobi";
    case Preconditioner::sqrt_weighted_jacobi: return "sqrt_weighted_jacobi";
  }
  return "?";
}

Preconditioner parse_preconditioner(std::string_view s) {
  if (s == "identity" || s == "none") return Preconditioner::identity;
  if (s == "jacobi") return Preconditioner::jacobi;
  if (s == "sqrt_weighted_jacobi" || s == "sqrt_jacobi") return Preconditioner::sqrt_weighted_jacobi;
  throw PolicyError("unknown preconditioner '" + std::string(s) + "'");
}

std::string_view to_string(SqrtMode m) { return m == SqrtMode::native ? "native" : "promote_fp64"; }

SqrtMode parse_sqrt_mode(std::string_view s) {
  if (s == "native") return SqrtMode::native;
  if (s == "promote_fp64" || s == "fp64") return SqrtMode::promote_fp64;
  throw PolicyError("unknown sqrt mode '" + std::string(s) + "'");
}

void PrecisionPolicy::validate() const {
  if (global_reduce == gs::ReducePrecision::compensated && local_dot != sem::DotMode::dot2)
    throw PolicyError("compensated global reduction requires local_dot = dot2");
}

std::string PrecisionPolicy::describe() const {
  std::ostringstream os;
  os << "ops=" << to_string(solver_ops) << " precond=" << to_string(precond_ops) << " sqrt=" << to_string(sqrt_mode)
     << " dot=" << sem::to_string(local_dot) << " reduce=" << gs::to_string(global_reduce)
     << " gs=" << to_string(gs_precision);
  return os.str();
}

void CgConfig::validate() const {
  if (!(tol > 0)) throw PolicyError("cg: tol must be > 0");
  if (max_iter < 1) throw PolicyError("cg: max_iter must be >= 1");
  if (stagnation_window < 2) throw PolicyError("cg: stagnation window must be >= 2");
  if (!(stagnation_factor > 0 && stagnation_factor < 1)) throw PolicyError("cg: stagnation factor must be in (0,1)");
}

double RunReport::final_residual() const {
  return std::sqrt(residual_history.empty() ? initial_rtr : residual_history.back());
}

bool detect_stagnation(std::span<const double> history, int window, double factor) {
  if (window < 2 || history.size() < static_cast<std::size_t>(window)) return false;
  const auto tail = history.subspan(history.size() - window);
  const double lowest = *std::min_element(tail.begin(), tail.end());
  return lowest > factor * tail.front();
}

const std::vector<std::string>& cg_only_sections() {
  static const std::vector<std::string> s{sections::solveM, sections::glsc3, sections::add2s1, sections::add2s2,
                                          sections::ax};
  return s;
}

const std::vector<std::string>& all_sections() {
  static const std::vector<std::string> s{sections::init,   sections::solveM, sections::glsc3,
                                          sections::add2s1, sections::add2s2, sections::ax,
                                          sections::gs,     sections::global_sum};
  return s;
}

PoissonOperator::PoissonOperator(const sem::BoxMesh& mesh, gs::GsPlan plan)
    : mesh_(mesh),
      plan_(std::move(plan)),
      op32_(sem::prepare_operator<float>(mesh)),
      op64_(sem::prepare_operator<double>(mesh)) {}

void PoissonOperator::apply(const Field<float>& p, Field<float>& w, ContextSet& ctx) const {
  sem::ax_apply(p, w, op32_, plan_, ctx[sections::ax], ctx[sections::gs]);
}

void PoissonOperator::apply(const Field<double>& p, Field<double>& w, ContextSet& ctx) const {
  sem::ax_apply(p, w, op64_, plan_, ctx[sections::ax], ctx[sections::gs]);
}

Field<double> PoissonOperator::diagonal() const { return sem::jacobi_diagonal(mesh_, plan_); }

namespace {

template <class T>
void diagonal_apply(const std::vector<double>& d, const Field<T>& p, Field<T>& w, ArithmeticContext& ctx) {
  require(d.size() == p.size() && w.size() == p.size(), "diagonal operator: size mismatch");
  ctx.next_epoch();
  for (std::size_t i = 0; i < p.size(); ++i) w[i] = static_cast<T>(ctx.mul(static_cast<T>(d[i]), p[i]));
}

}  // namespace

void DiagonalOperator::apply(const Field<float>& p, Field<float>& w, ContextSet& ctx) const {
  diagonal_apply(d_, p, w, ctx[sections::ax]);
}

void DiagonalOperator::apply(const Field<double>& p, Field<double>& w, ContextSet& ctx) const {
  diagonal_apply(d_, p, w, ctx[sections::ax]);
}

template <class U>
PreconditionerData<U> prepare_preconditioner(Preconditioner kind, const Field<double>& diag, SqrtMode mode,
                                             ArithmeticContext& ctx) {
  PreconditionerData<U> pd;
  pd.kind = kind;
  if (kind == Preconditioner::identity) return pd;
  for (std::size_t i = 0; i < diag.size(); ++i) {
    if (!(diag[i] > 0)) throw sem::NumericError("preconditioner: nonpositive diagonal entry");
  }
  pd.diag = sem::field_cast<U>(diag);
  if (kind == Preconditioner::sqrt_weighted_jacobi) {
    ctx.next_epoch();
    pd.weights = Field<U>(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) {
      const U d = pd.diag[i];
      if (mode == SqrtMode::promote_fp64) {
        const double s = std::sqrt(static_cast<double>(d));
        pd.weights[i] = static_cast<U>(1.0 / (s * s));
        ctx.tally(Op::sqrt, 2);
        ctx.tally(Op::mul, 1);
        ctx.tally(Op::div, 1);
      } else {
        const U s1 = static_cast<U>(ctx.sqrt(d));
        const U s2 = static_cast<U>(ctx.sqrt(d));
        pd.weights[i] = static_cast<U>(ctx.div(U{1}, static_cast<U>(ctx.mul(s1, s2))));
      }
    }
  }
  return pd;
}

template <class U>
void apply_preconditioner(const Field<U>& r, Field<U>& z, const PreconditionerData<U>& pd, ArithmeticContext& ctx) {
  require(r.size() == z.size(), "preconditioner: size mismatch");
  ctx.next_epoch();
  switch (pd.kind) {
    case Preconditioner::identity:
      std::copy(r.vec().begin(), r.vec().end(), z.vec().begin());
      return;
    case Preconditioner::jacobi:
      require(pd.diag.size() == r.size(), "preconditioner: data not prepared");
      if (ctx.exact()) {
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / pd.diag[i];
        ctx.tally(Op::div, r.size());
      } else {
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = static_cast<U>(ctx.div(r[i], pd.diag[i]));
      }
      return;
    case Preconditioner::sqrt_weighted_jacobi:
      require(pd.weights.size() == r.size(), "preconditioner: data not prepared");
      if (ctx.exact()) {
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * pd.weights[i];
        ctx.tally(Op::mul, r.size());
      } else {
        for (std::size_t i = 0; i < r.size(); ++i) z[i] = static_cast<U>(ctx.mul(r[i], pd.weights[i]));
      }
      return;
  }
}

namespace {

template <class T>
double reduce(const Field<T>& a, const Field<T>& c, const Field<T>& b, const PrecisionPolicy& policy,
              const gs::GsPlan& plan, ContextSet& ctx) {
  const auto partials = sem::glsc3_local(a, c, b, policy.local_dot, plan, ctx[sections::glsc3]);
  return gs::global_sum(partials, plan.mode(), policy.global_reduce, ctx[sections::global_sum]);
}

template <class T, class U>
RunReport pcg_impl(const LinearOperator& A, const sem::BoxMesh& mesh, const Field<double>& rhs, Preconditioner pc,
                   const PrecisionPolicy& policy, const gs::GsPlan& plan, const CgConfig& cfg, ContextSet& ctx) {
  RunReport rep;
  rep.policy = policy;
  rep.preconditioner = pc;
  rep.seed = ctx.seed();
  rep.sample_index = ctx.sample_index();

  std::map<std::string, std::uint64_t> before;
  for (const auto& s : all_sections()) before[s] = ctx[s].flops();

  const std::size_t n = mesh.local_size();
  const auto mask = mesh.mask();
  // One-time casts before the loop.
  const Field<T> c = sem::field_cast<T>(mesh.mult_weights());
  const auto pd = prepare_preconditioner<U>(pc, pc == Preconditioner::identity ? Field<double>() : A.diagonal(),
                                            policy.sqrt_mode, ctx[sections::solveM]);
  Field<T> x(n), r(n), z(n), p(n), w(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = mask[i] == 0.0 ? T{0} : static_cast<T>(rhs[i]);
  Field<U> r_u, z_u;
  if constexpr (!std::is_same_v<T, U>) {
    r_u = Field<U>(n);
    z_u = Field<U>(n);
  }

  rep.initial_rtr = reduce(r, c, r, policy, plan, ctx);
  std::vector<double> norms;
  double rho = 0.0;
  if (std::sqrt(rep.initial_rtr) <= cfg.tol) {
    rep.converged = true;
  }
  for (int iter = 1; iter <= cfg.max_iter && !rep.converged; ++iter) {
    if constexpr (std::is_same_v<T, U>) {
      apply_preconditioner(r, z, pd, ctx[sections::solveM]);
    } else {
      for (std::size_t i = 0; i < n; ++i) r_u[i] = static_cast<U>(r[i]);
      apply_preconditioner(r_u, z_u, pd, ctx[sections::solveM]);
      for (std::size_t i = 0; i < n; ++i) z[i] = static_cast<T>(z_u[i]);
    }
    const double rho_old = rho;
    rho = reduce(r, c, z, policy, plan, ctx);
    const double beta = iter == 1 ? 0.0 : rho / rho_old;
    sem::add2s1(p, z, beta, ctx[sections::add2s1]);
    A.apply(p, w, ctx);
    const double pap = reduce(w, c, p, policy, plan, ctx);
    rep.beta_history.push_back(rho);
    rep.pap_history.push_back(pap);
    if (std::isnan(pap) || std::isnan(rho)) {
      rep.breakdown = true;
      rep.message = "NaN in CG scalars at iteration " + std::to_string(iter);
      rep.iterations = iter;
      break;
    }
    if (pap <= 0) {
      std::ostringstream os;
      os << "operator not SPD: pap = " << pap << " at iteration " << iter;
      throw OperatorNotSpd(os.str());
    }
    const double alpha = rho / pap;
    sem::add2s2(x, p, alpha, ctx[sections::add2s2]);
    sem::add2s2(r, w, -alpha, ctx[sections::add2s2]);
    const double rtr = reduce(r, c, r, policy, plan, ctx);
    rep.residual_history.push_back(rtr);
    rep.iterations = iter;
    if (std::isnan(rtr)) {
      rep.breakdown = true;
      rep.message = "NaN residual at iteration " + std::to_string(iter);
      break;
    }
    norms.push_back(std::sqrt(rtr));
    if (norms.back() <= cfg.tol) {
      rep.converged = true;
      break;
    }
    if (detect_stagnation(norms, cfg.stagnation_window, cfg.stagnation_factor)) {
      rep.stagnated = true;
      rep.message = "no sufficient decrease over the last " + std::to_string(cfg.stagnation_window) + " iterations";
      break;
    }
  }
  if (!rep.converged && !rep.stagnated && !rep.breakdown) rep.message = "iteration limit reached";
  rep.solution = sem::field_cast<double>(x);
  for (const auto& s : all_sections()) {
    const auto used = ctx[s].flops() - before[s];
    if (used) rep.flops[s] = used;
  }
  return rep;
}

template <class T>
RunReport dispatch_precond(const LinearOperator& A, const sem::BoxMesh& mesh, const Field<double>& rhs,
                           Preconditioner pc, const PrecisionPolicy& policy, const gs::GsPlan& plan,
                           const CgConfig& cfg, ContextSet& ctx) {
  if (policy.precond_ops == Precision::fp32) return pcg_impl<T, float>(A, mesh, rhs, pc, policy, plan, cfg, ctx);
  return pcg_impl<T, double>(A, mesh, rhs, pc, policy, plan, cfg, ctx);
}

}  // namespace

RunReport pcg_solve(const LinearOperator& op, const sem::BoxMesh& mesh, const Field<double>& rhs, Preconditioner pc,
                    const PrecisionPolicy& policy, const gs::GsPlan& plan, const CgConfig& cfg, ContextSet& ctx) {
  policy.validate();
  cfg.validate();
  require(rhs.size() == mesh.local_size(), "pcg: rhs does not match mesh");
  if (policy.solver_ops == Precision::fp32) return dispatch_precond<float>(op, mesh, rhs, pc, policy, plan, cfg, ctx);
  return dispatch_precond<double>(op, mesh, rhs, pc, policy, plan, cfg, ctx);
}

RunReport pcg_solve(const sem::BoxMesh& mesh, const Field<double>& rhs, Preconditioner pc,
                    const PrecisionPolicy& policy, const gs::GsPlan& plan, const CgConfig& cfg, ContextSet& ctx) {
  const PoissonOperator op(mesh, plan.with_accumulate(policy.gs_precision));
  return pcg_solve(op, mesh, rhs, pc, policy, plan, cfg, ctx);
}

template PreconditionerData<float> prepare_preconditioner<float>(Preconditioner, const Field<double>&, SqrtMode,
                                                                 ArithmeticContext&);
template PreconditionerData<double> prepare_preconditioner<double>(Preconditioner, const Field<double>&, SqrtMode,
                                                                   ArithmeticContext&);
template void apply_preconditioner<float>(const Field<float>&, Field<float>&, const PreconditionerData<float>&,
                                          ArithmeticContext&);
template void apply_preconditioner<double>(const Field<double>&, Field<double>&, const PreconditionerData<double>&,
                                           ArithmeticContext&);

}  // namespace mplab::solver
