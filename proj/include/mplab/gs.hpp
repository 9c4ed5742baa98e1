#pragma once

// Simulated multi-rank direct-stiffness summation and global scalar
// reductions. Ranks live in-process; only the summation order and the
// accumulation precision of the real library are modelled.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mplab/arith.hpp"
#include "mplab/eft.hpp"
#include "mplab/mesh.hpp"

namespace mplab::gs {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// sequential ~ pairwise exchange, staged ~ crystal router, tree ~ allreduce.
enum class Mode { sequential, staged, tree, compensated };

std::string_view to_string(Mode m);
/// Accepts the mode names and their library aliases (pairwise, crystal, allreduce).
Mode parse_mode(std::string_view s);

/// Immutable shared-dof topology of a partitioned mesh.
struct Topology {
  int ranks = 1;
  std::array<int, 3> rank_grid{1, 1, 1};  // {0,0,0} when the block fallback is used
  std::vector<int> rank_of_element;
  std::vector<std::vector<int>> elements_of_rank;  // ascending element ids
  std::size_t local_size = 0;
  std::size_t global_size = 0;
  int nodes_per_element = 0;
  // Contributors of global dof g: entries[offsets[g] .. offsets[g+1]),
  // sorted by (rank, local index).
  std::vector<std::int64_t> offsets;
  std::vector<std::int64_t> entries;
  std::vector<int> entry_rank;
};

class GsPlan {
 public:
  GsPlan() = default;
  GsPlan(std::shared_ptr<const Topology> topo, Mode mode, Precision accumulate)
      : topo_(std::move(topo)), mode_(mode), accumulate_(accumulate) {}

  Mode mode() const { return mode_; }
  Precision accumulate() const { return accumulate_; }
  int ranks() const { return topo_->ranks; }
  const Topology& topology() const { return *topo_; }
  int rank_of_element(int e) const { return topo_->rank_of_element[e]; }

  std::span<const std::int64_t> contributors(std::int64_t gid) const {
    const auto b = topo_->offsets[gid], e = topo_->offsets[gid + 1];
    return {topo_->entries.data() + b, static_cast<std::size_t>(e - b)};
  }

  GsPlan with_accumulate(Precision p) const { return {topo_, mode_, p}; }
  GsPlan with_mode(Mode m) const { return {topo_, m, accumulate_}; }

 private:
  std::shared_ptr<const Topology> topo_;
  Mode mode_ = Mode::tree;
  Precision accumulate_ = Precision::fp64;
};

/// Partition E elements over R ranks. Uses a Px x Py x Pz rank grid dividing
/// the element grid (most cubic first); otherwise contiguous blocks in element
/// order, with the E mod R remainder elements handed out one each to the
/// first ranks. Throws ConfigError when R > E or R < 1.
GsPlan build_plan(const sem::BoxMesh& mesh, int ranks, Mode mode, Precision accumulate);

/// In-place direct-stiffness summation: every local copy of a global dof
/// receives the sum of all copies, cast in to the accumulate precision and
/// cast back out to T.
///
/// Summation order per mode, per global dof:
///   sequential   each rank adds its own copies, then the other ranks'
///                subtotals in ascending rank order, and keeps that total
///                for its own copies (ranks may disagree in the last bits)
///   staged       per-rank subtotals, combined in rank order; one total
///   tree         balanced binary tree over the contributor list; one total
///   compensated  expansion2_combine chain over contributors; one total
template <class T>
void gather_scatter(sem::Field<T>& f, const GsPlan& plan, arith::ArithmeticContext& ctx);

template <class T>
sem::Field<T> gather_scatter(const sem::Field<T>& f, const GsPlan& plan, arith::ArithmeticContext& ctx) {
  sem::Field<T> out = f;
  gather_scatter(out, plan, ctx);
  return out;
}

/// Multiplicity-weighted summation c*f followed by gather_scatter: an
/// idempotent projection onto continuous fields.
template <class T>
void average(sem::Field<T>& f, std::span<const double> mult_weights, const GsPlan& plan,
             arith::ArithmeticContext& ctx);

/// Precision of the global scalar reduction.
enum class ReducePrecision { fp32, fp64, compensated };
std::string_view to_string(ReducePrecision p);
ReducePrecision parse_reduce_precision(std::string_view s);

/// Per-rank partial results of a local reduction. `values` always holds one
/// entry per rank; `expansions` is filled only by compensated local dots and
/// then holds (hi, lo) pairs at the working precision, stored exactly.
struct Partials {
  Precision working = Precision::fp64;
  std::vector<double> values;
  std::vector<eft::Expansion2<double>> expansions;
};

/// Combine per-rank partials. Order: rank order for sequential / staged /
/// compensated modes, balanced tree for tree mode. fp32 / fp64 cast each
/// partial to that precision and add through `ctx`; compensated merges the
/// expansions at the working precision and rounds once at the end.
double global_sum(const Partials& partials, Mode mode, ReducePrecision precision, arith::ArithmeticContext& ctx);

/// Plain scalar sum of `values` at precision A in the given order.
template <class A>
A global_sum_plain(std::span<const double> values, Mode mode, arith::ArithmeticContext& ctx);

/// Compensated sum of expansion partials at working precision T.
template <class T>
T global_sum_compensated(std::span<const eft::Expansion2<T>> partials, Mode mode);

}  // namespace mplab::gs
