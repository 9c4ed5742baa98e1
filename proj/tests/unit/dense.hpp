#pragma once

// Dense assembled-operator oracle and field helpers shared by the solver-level tests.

#include <Eigen/Dense>
#include <vector>

#include "gen.hpp"
#include "mplab/gs.hpp"
#include "mplab/mesh.hpp"
#include "mplab/sem.hpp"

namespace testdense {

using mplab::sem::BoxMesh;
using mplab::sem::Field;
namespace gs = mplab::gs;
namespace sem = mplab::sem;
namespace arith = mplab::arith;
using mplab::Precision;

inline gs::GsPlan plan_for(const BoxMesh& m, int R = 1, gs::Mode mode = gs::Mode::tree) {
  return gs::build_plan(m, R, mode, Precision::fp64);
}

// Continuous field: one random value per global dof, copied to every local copy.
inline Field<double> continuous_random(const BoxMesh& m, testgen::Gen& g, bool masked) {
  std::vector<double> gv(m.global_size());
  for (auto& v : gv) v = g.uniform(-1, 1);
  Field<double> f(m);
  const auto ids = m.global_ids();
  const auto mask = m.mask();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = masked ? gv[ids[i]] * mask[i] : gv[ids[i]];
  return f;
}

// c-weighted global inner product in binary64.
inline double cdot(const BoxMesh& m, const Field<double>& a, const Field<double>& b) {
  const auto c = m.mult_weights();
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * c[i] * b[i];
  return s;
}

// Dense assembled operator restricted to unmasked global dofs, by probing.
struct Dense {
  Eigen::MatrixXd A;
  std::vector<std::int64_t> dofs;                // unmasked global ids
  std::vector<std::int64_t> first_copy;          // a local index per global dof
  std::vector<std::ptrdiff_t> index_of_global;   // -1 for masked
};

inline Dense assemble(const BoxMesh& m, const gs::GsPlan& plan) {
  Dense d;
  const auto ids = m.global_ids();
  const auto mask = m.mask();
  d.first_copy.assign(m.global_size(), -1);
  d.index_of_global.assign(m.global_size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (d.first_copy[ids[i]] < 0) d.first_copy[ids[i]] = static_cast<std::int64_t>(i);
  }
  for (std::size_t g = 0; g < m.global_size(); ++g) {
    if (mask[d.first_copy[g]] != 0.0) {
      d.index_of_global[g] = static_cast<std::ptrdiff_t>(d.dofs.size());
      d.dofs.push_back(static_cast<std::int64_t>(g));
    }
  }
  const auto k = static_cast<Eigen::Index>(d.dofs.size());
  d.A.resize(k, k);
  const auto op = sem::prepare_operator<double>(m);
  arith::ArithmeticContext ctx;
  Field<double> e(m), w(m);
  for (Eigen::Index col = 0; col < k; ++col) {
    e.fill(0.0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == d.dofs[col]) e[i] = 1.0;
    }
    sem::ax_apply(e, w, op, plan, ctx, ctx);
    for (Eigen::Index row = 0; row < k; ++row) d.A(row, col) = w[d.first_copy[d.dofs[row]]];
  }
  return d;
}

/// Gather the unmasked global dofs of a continuous field into a dense vector.
inline Eigen::VectorXd to_dense(const Dense& d, const Field<double>& f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d.dofs.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f[d.first_copy[d.dofs[i]]];
  return v;
}

}  // namespace testdense
