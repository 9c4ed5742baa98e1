#pragma once

// GLL basis, axis-aligned box meshes and per-element nodal fields.
//
// Local node layout inside an element is i + n*j + n*n*k (i fastest, r axis),
// with n = N+1. Elements are numbered ex + Ex*(ey + Ey*ez).

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mplab/precision.hpp"

namespace mplab::sem {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedDomain : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GllBasis {
  int degree = 0;
  std::vector<double> nodes;    // n, increasing
  std::vector<double> weights;  // n
  std::vector<double> deriv;    // n*n row-major: deriv[i*n + j] = l_j'(x_i)

  int n() const { return degree + 1; }
};

/// Nodes, weights and differentiation matrix for 1 <= N <= 16, in binary64.
GllBasis basis_setup(int N);

/// Legendre polynomial P_N(x), by recurrence.
double legendre(int N, double x);

struct MeshSpec {
  int ex = 1, ey = 1, ez = 1;
  int degree = 1;
  double lx = 1.0, ly = 1.0, lz = 1.0;
};

class BoxMesh {
 public:
  explicit BoxMesh(MeshSpec spec);

  const MeshSpec& spec() const { return spec_; }
  const GllBasis& basis() const { return basis_; }
  int degree() const { return spec_.degree; }
  int n() const { return spec_.degree + 1; }
  int nodes_per_element() const { return n() * n() * n(); }
  int elements() const { return spec_.ex * spec_.ey * spec_.ez; }
  std::size_t local_size() const { return static_cast<std::size_t>(elements()) * nodes_per_element(); }
  std::size_t global_size() const { return global_size_; }
  bool is_unit_cube() const { return spec_.lx == 1.0 && spec_.ly == 1.0 && spec_.lz == 1.0; }

  /// Element extents along x, y, z.
  double hx() const { return spec_.lx / spec_.ex; }
  double hy() const { return spec_.ly / spec_.ey; }
  double hz() const { return spec_.lz / spec_.ez; }

  /// Diagonal metric terms w_i w_j w_k J (dr/dx)^2 etc., per local node.
  std::span<const double> g_rr() const { return g_rr_; }
  std::span<const double> g_ss() const { return g_ss_; }
  std::span<const double> g_tt() const { return g_tt_; }
  /// Quadrature mass w_i w_j w_k J per local node.
  std::span<const double> mass() const { return mass_; }
  /// 0 on domain-boundary nodes, 1 elsewhere.
  std::span<const double> mask() const { return mask_; }
  /// Inverse multiplicity of each local node's global dof (a power of two).
  std::span<const double> mult_weights() const { return mult_weights_; }
  std::span<const std::int64_t> global_ids() const { return global_ids_; }
  std::span<const double> x() const { return x_; }
  std::span<const double> y() const { return y_; }
  std::span<const double> z() const { return z_; }

  /// Element coordinates (ex, ey, ez) of element e.
  void element_coords(int e, int& ex, int& ey, int& ez) const;

 private:
  MeshSpec spec_;
  GllBasis basis_;
  std::size_t global_size_ = 0;
  std::vector<double> g_rr_, g_ss_, g_tt_, mass_, mask_, mult_weights_;
  std::vector<std::int64_t> global_ids_;
  std::vector<double> x_, y_, z_;
};

/// Per-element nodal data at a fixed precision.
template <class T>
class Field {
 public:
  using value_type = T;

  Field() = default;
  explicit Field(std::size_t n, T v = T{0}) : data_(n, v) {}
  explicit Field(std::vector<T> v) : data_(std::move(v)) {}
  explicit Field(const BoxMesh& mesh, T v = T{0}) : data_(mesh.local_size(), v) {}

  static constexpr Precision precision() { return precision_of<T>; }

  std::size_t size() const { return data_.size(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::vector<T> data_;
};

/// Elementwise conversion (one-time precision cast).
template <class U, class T>
Field<U> field_cast(const Field<T>& f) {
  Field<U> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = static_cast<U>(f[i]);
  return out;
}

template <class U>
Field<U> field_cast(std::span<const double> v) {
  Field<U> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<U>(v[i]);
  return out;
}

}  // namespace mplab::sem
