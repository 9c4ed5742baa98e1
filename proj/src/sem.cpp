#include "mplab/sem.hpp"

#include <cmath>
#include <numbers>

namespace mplab::sem {

using arith::Op;

std::string_view to_string(DotMode m) {
  switch (m) {
    case DotMode::plain: return "plain";
    case DotMode::wide: return "wide";
    case DotMode::dot2: return "dot2";
  }
  return "?";
}

DotMode parse_dot_mode(std::string_view s) {
  if (s == "plain") return DotMode::plain;
  if (s == "wide" || s == "wide_accumulate") return DotMode::wide;
  if (s == "dot2") return DotMode::dot2;
  throw std::invalid_argument("unknown local dot mode '" + std::string(s) + "'");
}

namespace {

template <class T>
inline T op(ArithmeticContext& ctx, Op o, T a, T b) {
  return static_cast<T>(ctx.perform(o, a, b));
}

}  // namespace

template <class T>
void mxm(const T* a, int m, int k, const T* b, int n, T* c, ArithmeticContext& ctx) {
  if (ctx.exact()) {
    for (int i = 0; i < m; ++i) {
      const T* ai = a + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < n; ++j) {
        T s = 0;
        for (int l = 0; l < k; ++l) s += ai[l] * b[l * n + j];
        c[static_cast<std::size_t>(i) * n + j] = s;
      }
    }
    const auto count = static_cast<std::uint64_t>(m) * n * k;
    ctx.tally(Op::mul, count);
    ctx.tally(Op::add, count);
    return;
  }
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      T s = 0;
      for (int l = 0; l < k; ++l) s = op(ctx, Op::add, s, op(ctx, Op::mul, ai[l], b[l * n + j]));
      c[static_cast<std::size_t>(i) * n + j] = s;
    }
  }
}

template <class T>
void mxm(std::span<const T> a, int m, int k, std::span<const T> b, int n, std::span<T> c, ArithmeticContext& ctx) {
  require(m >= 1 && n >= 1 && k >= 1, "mxm: nonpositive dimension");
  require(a.size() == static_cast<std::size_t>(m) * k, "mxm: A shape mismatch");
  require(b.size() == static_cast<std::size_t>(k) * n, "mxm: B shape mismatch");
  require(c.size() == static_cast<std::size_t>(m) * n, "mxm: C shape mismatch");
  ctx.next_epoch();
  mxm(a.data(), m, k, b.data(), n, c.data(), ctx);
}

template <class T>
OperatorData<T> prepare_operator(const BoxMesh& mesh) {
  OperatorData<T> op;
  const int n = mesh.n();
  op.n = n;
  const auto& d = mesh.basis().deriv;
  op.d.resize(static_cast<std::size_t>(n) * n);
  op.dt.resize(op.d.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      op.d[i * n + j] = static_cast<T>(d[i * n + j]);
      op.dt[j * n + i] = static_cast<T>(d[i * n + j]);
    }
  }
  auto cast = [](std::span<const double> v) { return std::vector<T>(v.begin(), v.end()); };
  op.g_rr = cast(mesh.g_rr());
  op.g_ss = cast(mesh.g_ss());
  op.g_tt = cast(mesh.g_tt());
  op.mask = cast(mesh.mask());
  return op;
}

template <class T>
void local_grad3(const T* u, const T* d, const T* dt, int n, T* ur, T* us, T* ut, ArithmeticContext& ctx) {
  const int n2 = n * n;
  mxm(u, n2, n, dt, n, ur, ctx);                           // ur = U(n^2 x n) D^T
  for (int k = 0; k < n; ++k) mxm(d, n, n, u + k * n2, n, us + k * n2, ctx);  // us_k = D U_k
  mxm(d, n, n, u, n2, ut, ctx);                            // ut = D U(n x n^2)
}

template <class T>
void local_grad3_t(const T* ur, const T* us, const T* ut, const T* d, const T* dt, int n, T* w, T* scratch,
                   ArithmeticContext& ctx) {
  const int n2 = n * n, n3 = n2 * n;
  T* w2 = scratch;
  T* w3 = scratch + n3;
  mxm(ur, n2, n, d, n, w, ctx);
  for (int k = 0; k < n; ++k) mxm(dt, n, n, us + k * n2, n, w2 + k * n2, ctx);
  mxm(dt, n, n, ut, n2, w3, ctx);
  if (ctx.exact()) {
    for (int q = 0; q < n3; ++q) w[q] = (w[q] + w2[q]) + w3[q];
    ctx.tally(Op::add, 2 * static_cast<std::uint64_t>(n3));
  } else {
    for (int q = 0; q < n3; ++q) w[q] = op(ctx, Op::add, op(ctx, Op::add, w[q], w2[q]), w3[q]);
  }
}

template <class T>
void ax_local(const Field<T>& p, Field<T>& w, const OperatorData<T>& od, ArithmeticContext& ctx) {
  const int n = od.n, n3 = n * n * n;
  require(p.size() == od.g_rr.size() && w.size() == p.size(), "ax: field does not match operator");
  ctx.next_epoch();
  std::vector<T> ur(n3), us(n3), ut(n3), scratch(2 * n3);
  const std::size_t elements = p.size() / n3;
  const bool native = ctx.exact();
  for (std::size_t e = 0; e < elements; ++e) {
    const std::size_t off = e * n3;
    local_grad3(p.data() + off, od.d.data(), od.dt.data(), n, ur.data(), us.data(), ut.data(), ctx);
    const T* grr = od.g_rr.data() + off;
    const T* gss = od.g_ss.data() + off;
    const T* gtt = od.g_tt.data() + off;
    if (native) {
      for (int q = 0; q < n3; ++q) {
        ur[q] = grr[q] * ur[q];
        us[q] = gss[q] * us[q];
        ut[q] = gtt[q] * ut[q];
      }
    } else {
      for (int q = 0; q < n3; ++q) {
        ur[q] = op(ctx, Op::mul, grr[q], ur[q]);
        us[q] = op(ctx, Op::mul, gss[q], us[q]);
        ut[q] = op(ctx, Op::mul, gtt[q], ut[q]);
      }
    }
    local_grad3_t(ur.data(), us.data(), ut.data(), od.d.data(), od.dt.data(), n, w.data() + off, scratch.data(),
                  ctx);
  }
  if (native) ctx.tally(Op::mul, 3 * static_cast<std::uint64_t>(n3) * elements);
}

template <class T>
void ax_apply(const Field<T>& p, Field<T>& w, const OperatorData<T>& od, const gs::GsPlan& plan,
              ArithmeticContext& ax_ctx, ArithmeticContext& gs_ctx) {
  require(p.size() == plan.topology().local_size, "ax: plan does not match field");
  ax_local(p, w, od, ax_ctx);
  gs::gather_scatter(w, plan, gs_ctx);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (od.mask[i] == T{0}) w[i] = T{0};
  }
}

template <class T>
gs::Partials glsc3_local(const Field<T>& a, const Field<T>& c, const Field<T>& b, DotMode mode,
                         const gs::GsPlan& plan, ArithmeticContext& ctx) {
  require(a.size() == b.size() && a.size() == c.size(), "glsc3: length mismatch");
  require(a.size() == plan.topology().local_size, "glsc3: plan does not match field");
  ctx.next_epoch();
  const auto& topo = plan.topology();
  const std::size_t npe = topo.nodes_per_element;
  gs::Partials out;
  out.working = precision_of<T>;
  out.values.resize(topo.ranks);
  if (mode == DotMode::dot2) out.expansions.resize(topo.ranks);
  const bool native = ctx.exact();

  for (int r = 0; r < topo.ranks; ++r) {
    const auto& elems = topo.elements_of_rank[r];
    switch (mode) {
      case DotMode::plain: {
        T s = 0;
        for (int e : elems) {
          const std::size_t off = e * npe;
          if (native) {
            for (std::size_t q = off; q < off + npe; ++q) s += a[q] * b[q] * c[q];
          } else {
            for (std::size_t q = off; q < off + npe; ++q)
              s = op(ctx, Op::add, s, op(ctx, Op::mul, op(ctx, Op::mul, a[q], b[q]), c[q]));
          }
        }
        out.values[r] = s;
        break;
      }
      case DotMode::wide: {
        double s = 0;
        for (int e : elems) {
          const std::size_t off = e * npe;
          if (native) {
            for (std::size_t q = off; q < off + npe; ++q) s += static_cast<double>(static_cast<T>(a[q] * b[q] * c[q]));
          } else {
            // The accumulator is binary64 by request; only the products are instrumented.
            for (std::size_t q = off; q < off + npe; ++q) s += op(ctx, Op::mul, op(ctx, Op::mul, a[q], b[q]), c[q]);
          }
        }
        out.values[r] = s;
        break;
      }
      case DotMode::dot2: {
        // Compensated at T; a*c is exact because c is a power of two.
        T p = 0, s = 0;
        for (int e : elems) {
          const std::size_t off = e * npe;
          for (std::size_t q = off; q < off + npe; ++q) {
            const auto [h, rr] = eft::two_prod(static_cast<T>(a[q] * c[q]), b[q]);
            const auto [pn, qq] = eft::two_sum(p, h);
            p = pn;
            s = s + (qq + rr);
          }
        }
        const auto [hi, lo] = eft::two_sum(p, s);
        out.expansions[r] = {hi, lo};
        out.values[r] = static_cast<T>(hi + lo);
        break;
      }
    }
  }
  if (native || mode == DotMode::dot2) {
    ctx.tally(Op::mul, 2 * a.size());
    ctx.tally(Op::add, a.size());
  } else if (mode == DotMode::wide) {
    ctx.tally(Op::add, a.size());
  }
  return out;
}

template <class T>
void add2s1(Field<T>& p, const Field<T>& z, double beta, ArithmeticContext& ctx) {
  require(p.size() == z.size(), "add2s1: length mismatch");
  ctx.next_epoch();
  const T bt = static_cast<T>(beta);
  if (ctx.exact()) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = bt * p[i] + z[i];
    ctx.tally(Op::mul, p.size());
    ctx.tally(Op::add, p.size());
    return;
  }
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = op(ctx, Op::add, op(ctx, Op::mul, bt, p[i]), z[i]);
}

template <class T>
void add2s2(Field<T>& x, const Field<T>& p, double alpha, ArithmeticContext& ctx) {
  require(x.size() == p.size(), "add2s2: length mismatch");
  ctx.next_epoch();
  const T at = static_cast<T>(alpha);
  if (ctx.exact()) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + at * p[i];
    ctx.tally(Op::mul, x.size());
    ctx.tally(Op::add, x.size());
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = op(ctx, Op::add, x[i], op(ctx, Op::mul, at, p[i]));
}

std::string_view to_string(Load l) {
  switch (l) {
    case Load::manufactured: return "manufactured";
    case Load::sensitive: return "sensitive";
    case Load::noise: return "noise";
  }
  return "?";
}

Load parse_load(std::string_view s) {
  if (s == "manufactured") return Load::manufactured;
  if (s == "sensitive" || s == "sensitive_init") return Load::sensitive;
  if (s == "noise") return Load::noise;
  throw std::invalid_argument("unknown load '" + std::string(s) + "'");
}

Problem build_problem(const BoxMesh& mesh, ArithmeticContext& init, Load kind) {
  if (!mesh.is_unit_cube()) throw UnsupportedDomain("build_problem: only the unit cube is supported");
  init.next_epoch();
  const std::size_t total = mesh.local_size();
  const double pi = std::numbers::pi;
  Problem pr{Field<double>(total), Field<double>(total)};
  const auto x = mesh.x(), y = mesh.y(), z = mesh.z();
  const auto mass = mesh.mass();
  const auto gids = mesh.global_ids();
  std::vector<double> load(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (kind == Load::noise) {
      const auto bits = arith::detail::mix64(static_cast<std::uint64_t>(gids[i]) + 0x6a09e667f3bcc909ULL);
      const double f = std::ldexp(static_cast<double>(bits >> 11), -52) - 1.0;
      load[i] = f;
      continue;
    }
    const double u = std::sin(pi * x[i]) * std::sin(pi * y[i]) * std::sin(pi * z[i]);
    pr.reference[i] = u;
    load[i] = init.mul(mass[i], 3 * pi * pi * u);
  }
  // Assemble: one total per global dof, summed in local order.
  std::vector<double> global(mesh.global_size(), 0.0);
  std::vector<std::uint8_t> seen(mesh.global_size(), 0);
  for (std::size_t i = 0; i < total; ++i) {
    if (kind == Load::noise) {
      global[gids[i]] = load[i];
      continue;
    }
    auto& g = global[gids[i]];
    g = seen[gids[i]] ? init.add(g, load[i]) : load[i];
    seen[gids[i]] = 1;
  }
  const auto mask = mesh.mask();
  for (std::size_t i = 0; i < total; ++i) pr.rhs[i] = mask[i] == 0.0 ? 0.0 : global[gids[i]];

  if (kind == Load::sensitive) {
    const auto c = mesh.mult_weights();
    auto norm2 = [&](const Field<double>& f) {
      double s = 0;
      for (std::size_t i = 0; i < total; ++i) s += f[i] * f[i] * c[i];
      return s;
    };
    const double before = norm2(pr.rhs);
    for (std::size_t i = 0; i < total; ++i) {
      const double arg = init.mul(1e9, std::cos(x[i]));
      pr.rhs[i] = init.mul(pr.rhs[i], 1.0 + 0.5 * std::sin(arg));
    }
    const double after = norm2(pr.rhs);
    if (after > 0) {
      const double scale = std::sqrt(before / after);
      for (std::size_t i = 0; i < total; ++i) pr.rhs[i] = init.mul(pr.rhs[i], scale);
    }
  }
  return pr;
}

Field<double> jacobi_diagonal(const BoxMesh& mesh, const gs::GsPlan& plan) {
  // All elements of a BoxMesh share one geometry, so probe element 0 only.
  const int n = mesh.n(), n3 = n * n * n;
  const auto full = prepare_operator<double>(mesh);
  OperatorData<double> one;
  one.n = n;
  one.d = full.d;
  one.dt = full.dt;
  one.g_rr.assign(full.g_rr.begin(), full.g_rr.begin() + n3);
  one.g_ss.assign(full.g_ss.begin(), full.g_ss.begin() + n3);
  one.g_tt.assign(full.g_tt.begin(), full.g_tt.begin() + n3);
  ArithmeticContext ieee;
  std::vector<double> elem_diag(n3);
  Field<double> unit(n3), col(n3);
  for (int q = 0; q < n3; ++q) {
    unit.fill(0.0);
    unit[q] = 1.0;
    ax_local(unit, col, one, ieee);
    elem_diag[q] = col[q];
  }
  Field<double> diag(mesh.local_size());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = elem_diag[i % n3];
  gs::gather_scatter(diag, plan.with_accumulate(Precision::fp64).with_mode(gs::Mode::tree), ieee);
  const auto mask = mesh.mask();
  for (std::size_t i = 0; i < diag.size(); ++i) {
    if (mask[i] == 0.0) {
      diag[i] = 1.0;
    } else if (!(diag[i] > 0.0)) {
      throw NumericError("jacobi_diagonal: nonpositive diagonal entry at local dof " + std::to_string(i));
    }
  }
  return diag;
}

#define MPLAB_SEM_INSTANTIATE(T)                                                                               \
  template void mxm<T>(const T*, int, int, const T*, int, T*, ArithmeticContext&);                             \
  template void mxm<T>(std::span<const T>, int, int, std::span<const T>, int, std::span<T>, ArithmeticContext&); \
  template OperatorData<T> prepare_operator<T>(const BoxMesh&);                                                \
  template void local_grad3<T>(const T*, const T*, const T*, int, T*, T*, T*, ArithmeticContext&);            \
  template void local_grad3_t<T>(const T*, const T*, const T*, const T*, const T*, int, T*, T*,               \
                                 ArithmeticContext&);                                                          \
  template void ax_local<T>(const Field<T>&, Field<T>&, const OperatorData<T>&, ArithmeticContext&);          \
  template void ax_apply<T>(const Field<T>&, Field<T>&, const OperatorData<T>&, const gs::GsPlan&,             \
                            ArithmeticContext&, ArithmeticContext&);                                           \
  template gs::Partials glsc3_local<T>(const Field<T>&, const Field<T>&, const Field<T>&, DotMode,             \
                                       const gs::GsPlan&, ArithmeticContext&);                                 \
  template void add2s1<T>(Field<T>&, const Field<T>&, double, ArithmeticContext&);                            \
  template void add2s2<T>(Field<T>&, const Field<T>&, double, ArithmeticContext&);

MPLAB_SEM_INSTANTIATE(float)
MPLAB_SEM_INSTANTIATE(double)

}  // namespace mplab::sem
