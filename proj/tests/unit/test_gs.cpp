#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "gen.hpp"
#include "mplab/gs.hpp"
#include "mplab/mesh.hpp"

using namespace mplab;
using sem::BoxMesh;
using sem::Field;

namespace {

constexpr gs::Mode kModes[] = {gs::Mode::sequential, gs::Mode::staged, gs::Mode::tree, gs::Mode::compensated};

BoxMesh mesh(int ex, int ey, int ez, int N) { return BoxMesh({ex, ey, ez, N}); }

template <class T>
Field<T> integer_field(const BoxMesh& m, testgen::Gen& g) {
  Field<T> f(m);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<T>(g.integer(-1000, 1000));
  return f;
}

template <class T>
Field<T> gathered(const Field<T>& f, const gs::GsPlan& plan, arith::ArithmeticContext& ctx) {
  return gs::gather_scatter(f, plan, ctx);
}

}  // namespace

TEST_CASE("build_plan: contributor lists") {
  SUBCASE("single element") {
    const auto m = mesh(1, 1, 1, 3);
    const auto plan = gs::build_plan(m, 1, gs::Mode::tree, Precision::fp64);
    for (std::size_t g = 0; g < m.global_size(); ++g) CHECK(plan.contributors(g).size() == 1);
  }
  SUBCASE("two elements sharing a face") {
    const auto m = mesh(2, 1, 1, 2);
    const auto plan = gs::build_plan(m, 2, gs::Mode::sequential, Precision::fp64);
    int shared = 0;
    for (std::size_t g = 0; g < m.global_size(); ++g) {
      const auto c = plan.contributors(g);
      if (c.size() > 1) {
        ++shared;
        CHECK(c.size() == 2);
        CHECK(plan.topology().entry_rank[plan.topology().offsets[g]] == 0);
        CHECK(plan.topology().entry_rank[plan.topology().offsets[g] + 1] == 1);
      }
    }
    CHECK(shared == 9);
  }
  SUBCASE("partition identity and ordering") {
    for (auto [ex, ey, ez, N, R] : {std::array{2, 2, 2, 3, 8}, std::array{3, 2, 1, 2, 4}, std::array{4, 4, 4, 2, 8},
                                    std::array{5, 1, 1, 4, 3}}) {
      const auto m = mesh(ex, ey, ez, N);
      const auto plan = gs::build_plan(m, R, gs::Mode::tree, Precision::fp64);
      const auto& t = plan.topology();
      CHECK(t.entries.size() == m.local_size());
      std::vector<int> seen(m.local_size(), 0);
      for (std::size_t g = 0; g < m.global_size(); ++g) {
        for (auto b = t.offsets[g]; b < t.offsets[g + 1]; ++b) {
          ++seen[t.entries[b]];
          CHECK(m.global_ids()[t.entries[b]] == static_cast<std::int64_t>(g));
          if (b > t.offsets[g]) {
            const bool ordered = t.entry_rank[b - 1] < t.entry_rank[b] ||
                                 (t.entry_rank[b - 1] == t.entry_rank[b] && t.entries[b - 1] < t.entries[b]);
            CHECK(ordered);
          }
        }
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
      int owned = 0;
      for (int r = 0; r < R; ++r) owned += static_cast<int>(t.elements_of_rank[r].size());
      CHECK(owned == m.elements());
    }
  }
  SUBCASE("errors") {
    const auto m = mesh(2, 1, 1, 2);
    CHECK_THROWS_AS(gs::build_plan(m, 3, gs::Mode::tree, Precision::fp64), gs::ConfigError);
    CHECK_THROWS_AS(gs::build_plan(m, 0, gs::Mode::tree, Precision::fp64), gs::ConfigError);
    CHECK(gs::parse_mode("pairwise") == gs::Mode::sequential);
    CHECK(gs::parse_mode("crystal") == gs::Mode::staged);
    CHECK(gs::parse_mode("allreduce") == gs::Mode::tree);
    CHECK_THROWS_AS(gs::parse_mode("ring"), gs::ConfigError);
  }
}

TEST_CASE("gather_scatter: single element is the identity") {
  const auto m = mesh(1, 1, 1, 4);
  testgen::Gen g(3);
  Field<double> f(m);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = g.log_uniform(-40, 40);
  for (auto mode : kModes) {
    const auto plan = gs::build_plan(m, 1, mode, Precision::fp64);
    arith::ArithmeticContext ctx;
    CHECK(gathered(f, plan, ctx) == f);
  }
}

TEST_CASE("gather_scatter: integer fields agree across modes, conserve and project") {
  testgen::Gen g(11);
  for (auto [ex, ey, ez, N, R] : {std::array{2, 1, 1, 2, 2}, std::array{2, 2, 2, 3, 8}, std::array{4, 2, 2, 2, 4}}) {
    const auto m = mesh(ex, ey, ez, N);
    const auto f = integer_field<float>(m, g);
    std::vector<Field<float>> outs;
    for (auto mode : kModes) {
      for (auto acc : {Precision::fp32, Precision::fp64}) {
        const auto plan = gs::build_plan(m, R, mode, acc);
        arith::ArithmeticContext ctx;
        outs.push_back(gathered(f, plan, ctx));
      }
    }
    for (const auto& o : outs) CHECK(o == outs.front());

    // Every copy carries the exact sum of its contributors.
    const auto ids = m.global_ids();
    std::vector<double> exact(m.global_size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) exact[ids[i]] += f[i];
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(outs[0][i] == exact[ids[i]]);

    // Conservation: sum_i c_i gs(f)_i == sum_i f_i.
    const auto c = m.mult_weights();
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      lhs += c[i] * outs[0][i];
      rhs += f[i];
    }
    CHECK(lhs == rhs);

    // average() is idempotent.
    for (auto mode : kModes) {
      const auto plan = gs::build_plan(m, R, mode, Precision::fp64);
      arith::ArithmeticContext ctx;
      auto once = f;
      gs::average(once, c, plan, ctx);
      auto twice = once;
      gs::average(twice, c, plan, ctx);
      CHECK(once == twice);
    }
  }
}

TEST_CASE("gather_scatter: accumulate precision on a 1e8 magnitude ratio") {
  // First contributor 1e8, the others 3: in rank order each binary32
  // addition of 3 is lost.
  const auto m = mesh(2, 2, 2, 2);
  for (auto mode : {gs::Mode::sequential, gs::Mode::staged}) {
    const auto plan32 = gs::build_plan(m, 8, mode, Precision::fp32);
    const auto plan64 = plan32.with_accumulate(Precision::fp64);
    const auto& t = plan32.topology();
    Field<float> f(m, 0.0f);
    for (std::size_t g = 0; g < m.global_size(); ++g) {
      for (auto b = t.offsets[g]; b < t.offsets[g + 1]; ++b) f[t.entries[b]] = b == t.offsets[g] ? 1e8f : 3.0f;
    }
    arith::ArithmeticContext ctx;
    const auto o32 = gathered(f, plan32, ctx);
    const auto o64 = gathered(f, plan64, ctx);
    int checked = 0;
    for (std::size_t g = 0; g < m.global_size(); ++g) {
      const auto n = t.offsets[g + 1] - t.offsets[g];
      if (n < 4) continue;
      const double oracle = 1e8 + 3.0 * static_cast<double>(n - 1);
      for (auto b = t.offsets[g]; b < t.offsets[g + 1]; ++b) {
        const auto i = t.entries[b];
        CHECK(o64[i] == static_cast<float>(oracle));
        CHECK(o32[i] == 1e8f);
        CHECK(o32[i] != o64[i]);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("gather_scatter: fp32 storage, fp64 accumulate matches the binary64 oracle") {
  testgen::Gen g(5);
  const auto m = mesh(2, 2, 2, 3);
  for (auto mode : kModes) {
    const auto plan64 = gs::build_plan(m, 8, mode, Precision::fp64);
    const auto plan32 = plan64.with_accumulate(Precision::fp32);
    Field<float> f(m);
    // Contributors differ by up to 1e8 in magnitude.
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(g.coin() ? g.uniform(-1, 1) * 1e8 : g.uniform(-1, 1));
    arith::ArithmeticContext ctx;
    const auto o64 = gathered(f, plan64, ctx);
    const auto o32 = gathered(f, plan32, ctx);
    const auto ids = m.global_ids();
    std::vector<double> exact(m.global_size(), 0.0);
    std::vector<int> mult(m.global_size(), 0);
    for (std::size_t i = 0; i < f.size(); ++i) {
      exact[ids[i]] += f[i];
      ++mult[ids[i]];
    }
    int differs = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(o64[i] == static_cast<float>(exact[ids[i]]));
      if (o32[i] != o64[i]) ++differs;
    }
    // The expansion chain is accurate whatever the accumulate tag says.
    if (mode != gs::Mode::compensated) CHECK(differs > 0);
  }
}

TEST_CASE("gather_scatter: compensated fp32 accumulate stays within 2 ulps of fp64 accumulate") {
  testgen::Gen g(17);
  const auto m = mesh(3, 3, 3, 2);
  const auto plan = gs::build_plan(m, 27, gs::Mode::compensated, Precision::fp32);
  const auto ref = plan.with_mode(gs::Mode::tree).with_accumulate(Precision::fp64);
  for (int trial = 0; trial < 20; ++trial) {
    Field<float> f(m);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(g.log_uniform(-12, 12));
    arith::ArithmeticContext ctx;
    const auto a = gathered(f, plan, ctx);
    const auto b = gathered(f, ref, ctx);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (a[i] == b[i]) continue;
      const float ulp = std::nextafter(std::fabs(b[i]), std::numeric_limits<float>::infinity()) - std::fabs(b[i]);
      CHECK(std::fabs(a[i] - b[i]) <= 2 * ulp);
    }
  }
}

TEST_CASE("gather_scatter: mode divergence within the ordered-summation bound") {
  testgen::Gen g(23);
  const auto m = mesh(4, 4, 2, 3);
  const int R = 8;
  const auto base = gs::build_plan(m, R, gs::Mode::tree, Precision::fp32);
  Field<float> f(m);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(g.uniform(-1, 1));
  const auto ids = m.global_ids();
  std::vector<double> exact(m.global_size(), 0.0), absum(m.global_size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    exact[ids[i]] += f[i];
    absum[ids[i]] += std::fabs(f[i]);
  }
  const double u = 0x1p-24;
  for (auto mode : kModes) {
    arith::ArithmeticContext ctx;
    const auto o = gathered(f, base.with_mode(mode), ctx);
    double lhs = 0, rhs = 0, budget = 0;
    const auto c = m.mult_weights();
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto n = base.contributors(ids[i]).size();
      CHECK(std::fabs(o[i] - exact[ids[i]]) <= (static_cast<double>(n) + 1) * u * absum[ids[i]]);
      lhs += c[i] * static_cast<double>(o[i]);
      rhs += f[i];
      budget += c[i] * R * u * absum[ids[i]];
    }
    CHECK(std::fabs(lhs - rhs) <= budget);
  }
}

TEST_CASE("gather_scatter: sequential fp32 copies may disagree, other modes never do") {
  testgen::Gen g(29);
  const auto m = mesh(4, 4, 4, 3);
  const auto plan = gs::build_plan(m, 8, gs::Mode::sequential, Precision::fp32);
  Field<float> f(m);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(g.uniform(-1, 1));
  auto disagreements = [&](gs::Mode mode) {
    arith::ArithmeticContext ctx;
    const auto o = gathered(f, plan.with_mode(mode), ctx);
    int n = 0;
    for (std::size_t gid = 0; gid < m.global_size(); ++gid) {
      const auto c = plan.contributors(gid);
      for (auto i : c) n += o[i] != o[c[0]];
    }
    return n;
  };
  CHECK(disagreements(gs::Mode::sequential) > 0);
  CHECK(disagreements(gs::Mode::staged) == 0);
  CHECK(disagreements(gs::Mode::tree) == 0);
  CHECK(disagreements(gs::Mode::compensated) == 0);
}

TEST_CASE("gather_scatter: Vprec(single) context on fp32 accumulate equals native") {
  testgen::Gen g(31);
  const auto m = mesh(2, 2, 2, 3);
  Field<float> f(m);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(g.uniform(-1, 1));
  for (auto mode : {gs::Mode::sequential, gs::Mode::staged, gs::Mode::tree}) {
    const auto plan = gs::build_plan(m, 8, mode, Precision::fp32);
    arith::ArithmeticContext native, vp(arith::Backend::vprec(arith::kSingle));
    CHECK(gathered(f, plan, native) == gathered(f, plan, vp));
    CHECK(native.count(arith::Op::add) == vp.count(arith::Op::add));
  }
}

TEST_CASE("global_sum examples") {
  arith::ArithmeticContext ctx;
  gs::Partials p;
  p.values = {1, 2, 3};
  for (auto mode : kModes) {
    CHECK(gs::global_sum(p, mode, gs::ReducePrecision::fp64, ctx) == 6.0);
    CHECK(gs::global_sum(p, mode, gs::ReducePrecision::fp32, ctx) == 6.0);
  }

  gs::Partials q;
  q.working = Precision::fp32;
  q.values = {1e8, 1, -1e8};
  for (double v : q.values) q.expansions.push_back({v, 0.0});
  CHECK(gs::global_sum(q, gs::Mode::sequential, gs::ReducePrecision::compensated, ctx) == 1.0);
  CHECK(gs::global_sum(q, gs::Mode::sequential, gs::ReducePrecision::fp32, ctx) == 0.0);
  CHECK(gs::global_sum(q, gs::Mode::sequential, gs::ReducePrecision::fp64, ctx) == 1.0);

  gs::Partials empty;
  CHECK_THROWS_AS(gs::global_sum(empty, gs::Mode::tree, gs::ReducePrecision::fp64, ctx), ContractViolation);
  gs::Partials noexp;
  noexp.values = {1.0};
  CHECK_THROWS_AS(gs::global_sum(noexp, gs::Mode::tree, gs::ReducePrecision::compensated, ctx), ContractViolation);
}

TEST_CASE("global_sum: tree vs sequential within R u sum|partials|") {
  testgen::Gen g(37);
  arith::ArithmeticContext ctx;
  for (int R : {2, 3, 8, 16, 64, 512}) {
    for (int trial = 0; trial < 50; ++trial) {
      gs::Partials p;
      double absum = 0;
      for (int r = 0; r < R; ++r) {
        p.values.push_back(g.log_uniform(-10, 10));
        absum += std::fabs(p.values.back());
      }
      const double a = gs::global_sum(p, gs::Mode::tree, gs::ReducePrecision::fp64, ctx);
      const double b = gs::global_sum(p, gs::Mode::sequential, gs::ReducePrecision::fp64, ctx);
      CHECK(std::fabs(a - b) <= R * 0x1p-52 * absum);
    }
  }
}

TEST_CASE("global_sum: compensated rounds once at the end") {
  testgen::Gen g(41);
  arith::ArithmeticContext ctx;
  for (int trial = 0; trial < 200; ++trial) {
    gs::Partials p;
    p.working = Precision::fp32;
    double exact = 0;  // 8 single-precision values with exponents in [-5, 5] sum exactly in binary64
    for (int r = 0; r < 8; ++r) {
      const float v = static_cast<float>(g.log_uniform(-5, 5));
      p.values.push_back(v);
      p.expansions.push_back({v, 0.0});
      exact += v;
    }
    for (auto mode : {gs::Mode::sequential, gs::Mode::tree}) {
      const double s = gs::global_sum(p, mode, gs::ReducePrecision::compensated, ctx);
      const float ulp = std::nextafter(std::fabs(static_cast<float>(exact)), 1e30f) - std::fabs(static_cast<float>(exact));
      CHECK(std::fabs(s - exact) <= ulp);
    }
  }
}

TEST_CASE("mode and reduce precision names round-trip") {
  for (auto mode : kModes) CHECK(gs::parse_mode(gs::to_string(mode)) == mode);
  for (auto p : {gs::ReducePrecision::fp32, gs::ReducePrecision::fp64, gs::ReducePrecision::compensated})
    CHECK(gs::parse_reduce_precision(gs::to_string(p)) == p);
}
