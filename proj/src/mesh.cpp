#include "mplab/mesh.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace mplab::sem {

double legendre(int N, double x) {
  if (N == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= N; ++k) {
    const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

GllBasis basis_setup(int N) {
  if (N < 1 || N > 16) throw std::invalid_argument("basis_setup: degree must be in 1..16");
  const int n = N + 1;
  GllBasis b;
  b.degree = N;
  b.nodes.resize(n);
  b.weights.resize(n);

  // Newton on (1-x^2) P_N'(x) = N (P_{N-1} - x P_N) from Chebyshev-Lobatto
  // guesses; the update below is that Newton step rewritten with the
  // Legendre recurrence.
  for (int i = 0; i < n; ++i) {
    double x = -std::cos(std::numbers::pi * i / N);
    if (i == 0 || i == N) {
      b.nodes[i] = x < 0 ? -1.0 : 1.0;
      continue;
    }
    bool done = false;
    for (int it = 0; it < 100; ++it) {
      const double pn = legendre(N, x);
      const double pm = legendre(N - 1, x);
      const double dx = (x * pn - pm) / ((N + 1) * pn);
      x -= dx;
      if (std::fabs(dx) <= 1e-16 * std::max(1.0, std::fabs(x))) {
        done = true;
        break;
      }
    }
    if (!done) {
      // One last check: tiny oscillation around the root is acceptable.
      const double resid = N * (legendre(N - 1, x) - x * legendre(N, x));
      if (!(std::fabs(resid) < 1e-13)) throw NumericError("basis_setup: Newton did not converge");
    }
    b.nodes[i] = x;
  }
  for (int i = 0; i < n / 2; ++i) {
    const double v = 0.5 * (b.nodes[N - i] - b.nodes[i]);
    b.nodes[i] = -v;
    b.nodes[N - i] = v;
  }
  if (N % 2 == 0) b.nodes[N / 2] = 0.0;

  std::vector<double> pn(n);
  for (int i = 0; i < n; ++i) {
    pn[i] = legendre(N, b.nodes[i]);
    b.weights[i] = 2.0 / (N * (N + 1) * pn[i] * pn[i]);
  }
  b.deriv.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) b.deriv[i * n + j] = pn[i] / (pn[j] * (b.nodes[i] - b.nodes[j]));
    }
  }
  b.deriv[0] = -0.25 * N * (N + 1);
  b.deriv[static_cast<std::size_t>(n) * n - 1] = 0.25 * N * (N + 1);
  return b;
}

BoxMesh::BoxMesh(MeshSpec spec) : spec_(spec) {
  if (spec.ex < 1 || spec.ey < 1 || spec.ez < 1)
    throw std::invalid_argument("mesh: element counts must be >= 1");
  if (!(spec.lx > 0 && spec.ly > 0 && spec.lz > 0)) throw std::invalid_argument("mesh: extents must be > 0");
  basis_ = basis_setup(spec.degree);

  const int N = spec.degree;
  const int n = N + 1;
  const std::int64_t gx = static_cast<std::int64_t>(spec.ex) * N + 1;
  const std::int64_t gy = static_cast<std::int64_t>(spec.ey) * N + 1;
  const std::int64_t gz = static_cast<std::int64_t>(spec.ez) * N + 1;
  global_size_ = static_cast<std::size_t>(gx * gy * gz);

  // One coordinate per global grid line, so shared copies agree bitwise.
  auto line = [&](std::int64_t count, double h) {
    std::vector<double> c(count);
    for (std::int64_t g = 0; g < count; ++g) {
      const std::int64_t q = g / N;
      const int i = static_cast<int>(g % N);
      c[g] = h * (static_cast<double>(q) + 0.5 * (basis_.nodes[i] + 1.0));
    }
    return c;
  };
  const auto cx = line(gx, hx());
  const auto cy = line(gy, hy());
  const auto cz = line(gz, hz());

  const double jac = hx() * hy() * hz() / 8.0;
  const double rx = 2.0 / hx(), sy = 2.0 / hy(), tz = 2.0 / hz();
  const auto& w = basis_.weights;

  const std::size_t total = local_size();
  g_rr_.resize(total);
  g_ss_.resize(total);
  g_tt_.resize(total);
  mass_.resize(total);
  mask_.resize(total);
  mult_weights_.resize(total);
  global_ids_.resize(total);
  x_.resize(total);
  y_.resize(total);
  z_.resize(total);

  std::vector<std::uint8_t> mult(global_size_, 0);
  std::size_t idx = 0;
  for (int e = 0; e < elements(); ++e) {
    int ex, ey, ez;
    element_coords(e, ex, ey, ez);
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i, ++idx) {
          const std::int64_t gi = static_cast<std::int64_t>(ex) * N + i;
          const std::int64_t gj = static_cast<std::int64_t>(ey) * N + j;
          const std::int64_t gk = static_cast<std::int64_t>(ez) * N + k;
          const std::int64_t gid = gi + gx * (gj + gy * gk);
          global_ids_[idx] = gid;
          ++mult[gid];
          const double wq = w[i] * w[j] * w[k] * jac;
          mass_[idx] = wq;
          g_rr_[idx] = wq * rx * rx;
          g_ss_[idx] = wq * sy * sy;
          g_tt_[idx] = wq * tz * tz;
          const bool boundary =
              gi == 0 || gi == gx - 1 || gj == 0 || gj == gy - 1 || gk == 0 || gk == gz - 1;
          mask_[idx] = boundary ? 0.0 : 1.0;
          x_[idx] = cx[gi];
          y_[idx] = cy[gj];
          z_[idx] = cz[gk];
        }
      }
    }
  }
  for (std::size_t q = 0; q < total; ++q) mult_weights_[q] = 1.0 / mult[global_ids_[q]];
}

void BoxMesh::element_coords(int e, int& ex, int& ey, int& ez) const {
  ex = e % spec_.ex;
  ey = (e / spec_.ex) % spec_.ey;
  ez = e / (spec_.ex * spec_.ey);
}

}  // namespace mplab::sem
