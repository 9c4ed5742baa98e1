#include "mplab/gs.hpp"

#include <algorithm>
#include <limits>

namespace mplab::gs {

using arith::ArithmeticContext;
using arith::Op;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::sequential: return "sequential";
    case Mode::staged: return "staged";
    case Mode::tree: return "tree";
    case Mode::compensated: return "compensated";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "sequential" || s == "pairwise") return Mode::sequential;
  if (s == "staged" || s == "crystal" || s == "crystal_router") return Mode::staged;
  if (s == "tree" || s == "allreduce") return Mode::tree;
  if (s == "compensated") return Mode::compensated;
  throw ConfigError("unknown gather-scatter mode '" + std::string(s) + "'");
}

std::string_view to_string(ReducePrecision p) {
  switch (p) {
    case ReducePrecision::fp32: return "fp32";
    case ReducePrecision::fp64: return "fp64";
    case ReducePrecision::compensated: return "compensated";
  }
  return "?";
}

ReducePrecision parse_reduce_precision(std::string_view s) {
  if (s == "fp32") return ReducePrecision::fp32;
  if (s == "fp64") return ReducePrecision::fp64;
  if (s == "compensated") return ReducePrecision::compensated;
  throw ConfigError("unknown reduction precision '" + std::string(s) + "'");
}

namespace {

std::array<int, 3> choose_rank_grid(const sem::MeshSpec& m, int R) {
  std::array<int, 3> best{0, 0, 0};
  int best_score = std::numeric_limits<int>::max();
  for (int pz = 1; pz <= R; ++pz) {
    if (R % pz || m.ez % pz) continue;
    for (int py = 1; py <= R / pz; ++py) {
      if ((R / pz) % py || m.ey % py) continue;
      const int px = R / (pz * py);
      if (m.ex % px) continue;
      const int score = px + py + pz;
      if (score < best_score) {  // strict: first (smallest pz, then py) wins ties
        best_score = score;
        best = {px, py, pz};
      }
    }
  }
  return best;
}

}  // namespace

GsPlan build_plan(const sem::BoxMesh& mesh, int R, Mode mode, Precision accumulate) {
  const int E = mesh.elements();
  if (R < 1) throw ConfigError("ranks must be >= 1");
  if (R > E) throw ConfigError("ranks (" + std::to_string(R) + ") exceed element count (" + std::to_string(E) + ")");

  auto topo = std::make_shared<Topology>();
  topo->ranks = R;
  topo->local_size = mesh.local_size();
  topo->global_size = mesh.global_size();
  topo->nodes_per_element = mesh.nodes_per_element();
  topo->rank_of_element.resize(E);

  const auto& s = mesh.spec();
  const auto grid = choose_rank_grid(s, R);
  if (grid[0] > 0) {
    topo->rank_grid = grid;
    const int bx = s.ex / grid[0], by = s.ey / grid[1], bz = s.ez / grid[2];
    for (int e = 0; e < E; ++e) {
      int ex, ey, ez;
      mesh.element_coords(e, ex, ey, ez);
      topo->rank_of_element[e] = ex / bx + grid[0] * (ey / by + grid[1] * (ez / bz));
    }
  } else {
    topo->rank_grid = {0, 0, 0};
    const int base = E / R, extra = E % R;
    int e = 0;
    for (int r = 0; r < R; ++r) {
      const int count = base + (r < extra ? 1 : 0);
      for (int c = 0; c < count; ++c) topo->rank_of_element[e++] = r;
    }
  }

  // Contributor lists sorted by (rank, local index).
  const auto gids = mesh.global_ids();
  const int npe = mesh.nodes_per_element();
  topo->offsets.assign(topo->global_size + 1, 0);
  for (auto g : gids) ++topo->offsets[g + 1];
  for (std::size_t g = 0; g < topo->global_size; ++g) topo->offsets[g + 1] += topo->offsets[g];
  topo->entries.resize(topo->local_size);
  topo->entry_rank.resize(topo->local_size);
  std::vector<std::int64_t> fill(topo->offsets.begin(), topo->offsets.end() - 1);
  auto& elements_of = topo->elements_of_rank;
  elements_of.assign(R, {});
  for (int e = 0; e < E; ++e) elements_of[topo->rank_of_element[e]].push_back(e);
  for (int r = 0; r < R; ++r) {
    if (elements_of[r].empty()) throw ConfigError("gs: rank " + std::to_string(r) + " owns no elements");
    for (int e : elements_of[r]) {
      for (int q = 0; q < npe; ++q) {
        const std::int64_t local = static_cast<std::int64_t>(e) * npe + q;
        const auto slot = fill[gids[local]]++;
        topo->entries[slot] = local;
        topo->entry_rank[slot] = r;
      }
    }
  }
  for (std::size_t g = 0; g < topo->global_size; ++g) {
    if (fill[g] != topo->offsets[g + 1]) throw std::logic_error("gs: contributor lists inconsistent");
  }
  return GsPlan(std::move(topo), mode, accumulate);
}

namespace {

constexpr int kMaxContrib = 64;

// Adds at accumulate precision A, natively or through the context.
template <class A>
struct Adder {
  ArithmeticContext& ctx;
  bool native;
  std::uint64_t adds = 0;

  A operator()(A a, A b) {
    if (native) {
      ++adds;
      return a + b;
    }
    return static_cast<A>(ctx.perform(Op::add, a, b));
  }
};

template <class A, class Add>
A tree_sum(const A* v, int count, Add& add) {
  if (count == 1) return v[0];
  const int half = (count + 1) / 2;
  return add(tree_sum(v, half, add), tree_sum(v + half, count - half, add));
}

template <class T, class A>
void gather_scatter_impl(sem::Field<T>& f, const GsPlan& plan, ArithmeticContext& ctx) {
  const Topology& topo = plan.topology();
  Adder<A> add{ctx, ctx.exact()};
  const Mode mode = plan.mode();
  std::array<A, kMaxContrib> vals{};
  std::array<A, kMaxContrib> sub{};
  std::array<int, kMaxContrib + 1> group_start{};

  for (std::size_t g = 0; g < topo.global_size; ++g) {
    const auto b = topo.offsets[g];
    const int count = static_cast<int>(topo.offsets[g + 1] - b);
    const std::int64_t* idx = topo.entries.data() + b;
    const int* rk = topo.entry_rank.data() + b;
    if (count == 1) {
      f[idx[0]] = static_cast<T>(static_cast<A>(f[idx[0]]));
      continue;
    }
    if (count > kMaxContrib) throw std::logic_error("gs: too many contributors");
    for (int c = 0; c < count; ++c) vals[c] = static_cast<A>(f[idx[c]]);

    switch (mode) {
      case Mode::tree: {
        const T out = static_cast<T>(tree_sum(vals.data(), count, add));
        for (int c = 0; c < count; ++c) f[idx[c]] = out;
        break;
      }
      case Mode::compensated: {
        auto acc = eft::to_expansion(vals[0]);
        for (int c = 1; c < count; ++c) acc = eft::expansion2_combine(acc, eft::to_expansion(vals[c]));
        add.adds += static_cast<std::uint64_t>(count - 1);
        const T out = static_cast<T>(acc.value());
        for (int c = 0; c < count; ++c) f[idx[c]] = out;
        break;
      }
      case Mode::staged:
      case Mode::sequential: {
        int groups = 0;
        for (int c = 0; c < count; ++c) {
          if (c == 0 || rk[c] != rk[c - 1]) {
            group_start[groups] = c;
            sub[groups] = vals[c];
            ++groups;
          } else {
            sub[groups - 1] = add(sub[groups - 1], vals[c]);
          }
        }
        group_start[groups] = count;
        if (mode == Mode::staged || groups == 1) {
          A total = sub[0];
          for (int h = 1; h < groups; ++h) total = add(total, sub[h]);
          const T out = static_cast<T>(total);
          for (int c = 0; c < count; ++c) f[idx[c]] = out;
        } else {
          for (int grp = 0; grp < groups; ++grp) {
            A total = sub[grp];
            for (int h = 0; h < groups; ++h) {
              if (h != grp) total = add(total, sub[h]);
            }
            const T out = static_cast<T>(total);
            for (int c = group_start[grp]; c < group_start[grp + 1]; ++c) f[idx[c]] = out;
          }
        }
        break;
      }
    }
  }
  if (add.adds) ctx.tally(Op::add, add.adds);
}

}  // namespace

template <class T>
void gather_scatter(sem::Field<T>& f, const GsPlan& plan, ArithmeticContext& ctx) {
  require(f.size() == plan.topology().local_size, "gather_scatter: field does not match plan");
  ctx.next_epoch();
  if (plan.accumulate() == Precision::fp32)
    gather_scatter_impl<T, float>(f, plan, ctx);
  else
    gather_scatter_impl<T, double>(f, plan, ctx);
}

template <class T>
void average(sem::Field<T>& f, std::span<const double> mult_weights, const GsPlan& plan, ArithmeticContext& ctx) {
  require(f.size() == mult_weights.size(), "average: weight length mismatch");
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<T>(f[i] * static_cast<T>(mult_weights[i]));
  gather_scatter(f, plan, ctx);
}

template <class A>
A global_sum_plain(std::span<const double> values, Mode mode, ArithmeticContext& ctx) {
  require(!values.empty(), "global_sum: no partials");
  ctx.next_epoch();
  Adder<A> add{ctx, ctx.exact()};
  std::vector<A> v(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<A>(values[i]);
  A out;
  if (mode == Mode::tree) {
    out = tree_sum(v.data(), static_cast<int>(v.size()), add);
  } else {
    out = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) out = add(out, v[i]);
  }
  if (add.adds) ctx.tally(Op::add, add.adds);
  return out;
}

template <class T>
T global_sum_compensated(std::span<const eft::Expansion2<T>> partials, Mode mode) {
  require(!partials.empty(), "global_sum: no partials");
  if (mode == Mode::tree) {
    auto combine = [](auto a, auto b) { return eft::expansion2_combine(a, b); };
    return tree_sum(partials.data(), static_cast<int>(partials.size()), combine).value();
  }
  auto acc = partials[0];
  for (std::size_t i = 1; i < partials.size(); ++i) acc = eft::expansion2_combine(acc, partials[i]);
  return acc.value();
}

double global_sum(const Partials& p, Mode mode, ReducePrecision precision, ArithmeticContext& ctx) {
  require(!p.values.empty(), "global_sum: no partials");
  switch (precision) {
    case ReducePrecision::fp32: return global_sum_plain<float>(p.values, mode, ctx);
    case ReducePrecision::fp64: return global_sum_plain<double>(p.values, mode, ctx);
    case ReducePrecision::compensated: {
      if (p.expansions.size() != p.values.size())
        throw ContractViolation("global_sum: compensated reduction needs expansion partials (local dot2)");
      ctx.tally(Op::add, p.expansions.size() - 1);
      if (p.working == Precision::fp32) {
        std::vector<eft::Expansion2<float>> e;
        for (auto x : p.expansions) e.push_back({static_cast<float>(x.hi), static_cast<float>(x.lo)});
        return global_sum_compensated<float>(e, mode);
      }
      return global_sum_compensated<double>(p.expansions, mode);
    }
  }
  return 0.0;
}

template void gather_scatter<float>(sem::Field<float>&, const GsPlan&, ArithmeticContext&);
template void gather_scatter<double>(sem::Field<double>&, const GsPlan&, ArithmeticContext&);
template void average<float>(sem::Field<float>&, std::span<const double>, const GsPlan&, ArithmeticContext&);
template void average<double>(sem::Field<double>&, std::span<const double>, const GsPlan&, ArithmeticContext&);
template float global_sum_plain<float>(std::span<const double>, Mode, ArithmeticContext&);
template double global_sum_plain<double>(std::span<const double>, Mode, ArithmeticContext&);
template float global_sum_compensated<float>(std::span<const eft::Expansion2<float>>, Mode);
template double global_sum_compensated<double>(std::span<const eft::Expansion2<double>>, Mode);

}  // namespace mplab::gs
