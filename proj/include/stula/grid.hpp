#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "stula/potential.hpp"
#include "stula/rng.hpp"

namespace stula {

// Midpoint-rule discretization of pi_beta = e^{-beta u}/Z on a box, d <= 2.
// All mass arithmetic is done in log space relative to the peak cell, so
// large beta cannot underflow the normalization.
struct GridDensity {
  int dim = 1;
  double beta = 1.0;
  std::array<double, 2> lo{0, 0}, hi{0, 0};
  std::array<int, 2> n{1, 1};  // cells per axis; n[1] == 1 in one dimension
  std::vector<double> cell_mass;   // normalized probabilities, sum 1
  std::vector<double> log_unnorm;  // -beta*u at cell midpoints
  double log_Z = 0.0;       // log of the midpoint-rule integral of e^{-beta u}
  double log_mass_norm = 0.0;  // log_mass(i) = log_unnorm[i] - log_mass_norm

  double spacing(int axis) const { return (hi[axis] - lo[axis]) / n[axis]; }
  double cell_volume() const {
    return dim == 1 ? spacing(0) : spacing(0) * spacing(1);
  }
  double mid(int axis, int i) const { return lo[axis] + (i + 0.5) * spacing(axis); }
  std::int64_t cell_count() const {
    return static_cast<std::int64_t>(n[0]) * n[1];
  }
  std::int64_t index(int i0, int i1 = 0) const {
    return static_cast<std::int64_t>(i0) * n[1] + i1;
  }
  double log_mass(std::int64_t idx) const { return log_unnorm[idx] - log_mass_norm; }

  bool same_grid(const GridDensity& o) const {
    return dim == o.dim && lo == o.lo && hi == o.hi && n == o.n;
  }
};

inline GridDensity grid_reference(const PotentialSpec& p, double beta,
                                  std::span<const double> box_lo,
                                  std::span<const double> box_hi,
                                  std::span<const int> n_cells) {
  if (p.dim > 2) throw InvalidParameter("grid_reference: only d <= 2");
  if (beta <= 0) throw InvalidParameter("grid_reference: beta must be positive");
  if (static_cast<int>(box_lo.size()) != p.dim ||
      static_cast<int>(box_hi.size()) != p.dim ||
      static_cast<int>(n_cells.size()) != p.dim)
    throw InvalidInput("grid_reference: box/cell specs must match dim");

  GridDensity g;
  g.dim = p.dim;
  g.beta = beta;
  for (int a = 0; a < p.dim; ++a) {
    if (!(box_hi[a] > box_lo[a]))
      throw InvalidParameter("grid_reference: empty box on axis " + std::to_string(a));
    if (n_cells[a] < 32)
      throw InvalidParameter("grid_reference: need at least 32 cells per axis");
    g.lo[a] = box_lo[a];
    g.hi[a] = box_hi[a];
    g.n[a] = n_cells[a];
  }

  const std::int64_t total = g.cell_count();
  g.log_unnorm.resize(total);
  Vec x(p.dim);
  for (int i0 = 0; i0 < g.n[0]; ++i0) {
    x[0] = g.mid(0, i0);
    for (int i1 = 0; i1 < g.n[1]; ++i1) {
      if (p.dim == 2) x[1] = g.mid(1, i1);
      g.log_unnorm[g.index(i0, i1)] = -beta * p.u(x);
    }
  }

  double lmax = g.log_unnorm[0];
  for (double v : g.log_unnorm) lmax = std::max(lmax, v);
  if (!std::isfinite(lmax))
    throw NumericalFailure("grid_reference: non-finite potential value on the grid");

  // Tail containment before normalizing: the densest boundary cell must be
  // negligible against the densest interior cell.
  const bool two_d = (p.dim == 2);
  double interior_max = -std::numeric_limits<double>::infinity();
  std::array<double, 4> edge_max;
  edge_max.fill(-std::numeric_limits<double>::infinity());
  for (int i0 = 0; i0 < g.n[0]; ++i0)
    for (int i1 = 0; i1 < g.n[1]; ++i1) {
      const double v = g.log_unnorm[g.index(i0, i1)];
      bool boundary = false;
      if (i0 == 0) edge_max[0] = std::max(edge_max[0], v), boundary = true;
      if (i0 == g.n[0] - 1) edge_max[1] = std::max(edge_max[1], v), boundary = true;
      if (two_d && i1 == 0) edge_max[2] = std::max(edge_max[2], v), boundary = true;
      if (two_d && i1 == g.n[1] - 1)
        edge_max[3] = std::max(edge_max[3], v), boundary = true;
      if (!boundary) interior_max = std::max(interior_max, v);
    }
  static const char* edge_names[4] = {"x lower", "x upper", "y lower", "y upper"};
  const double log_gate = std::log(1e-12);
  int worst_edge = -1;
  double worst = -std::numeric_limits<double>::infinity();
  for (int e = 0; e < 4; ++e)
    if (edge_max[e] - interior_max > log_gate && edge_max[e] > worst) {
      worst = edge_max[e];
      worst_edge = e;
    }
  if (worst_edge >= 0)
    throw BoxTooSmall(
        std::string("grid_reference: tail mass at the ") + edge_names[worst_edge] +
            " edge exceeds 1e-12 of the interior peak; widen the box",
        edge_names[worst_edge]);

  g.cell_mass.resize(total);
  double S = 0.0;
  for (std::int64_t i = 0; i < total; ++i) {
    g.cell_mass[i] = std::exp(g.log_unnorm[i] - lmax);
    S += g.cell_mass[i];
  }
  const double inv = 1.0 / S;
  for (auto& m : g.cell_mass) m *= inv;
  g.log_mass_norm = lmax + std::log(S);
  g.log_Z = g.log_mass_norm + std::log(g.cell_volume());

  double sum = 0.0;
  for (double m : g.cell_mass) sum += m;
  if (std::abs(sum - 1.0) > 1e-12)
    throw NumericalFailure("grid_reference: normalization drifted beyond 1e-12");
  return g;
}

// Exact draws from the grid law: cell by inverse CDF, uniform inside the cell.
inline std::vector<double> sample_from_grid(const GridDensity& g, std::int64_t n,
                                            std::uint64_t seed) {
  if (seed == 0) throw InvalidParameter("sample_from_grid: seed 0 is reserved");
  if (n < 1) throw InvalidParameter("sample_from_grid: n >= 1");
  std::vector<double> cdf(g.cell_mass.size());
  double acc = 0;
  for (size_t i = 0; i < g.cell_mass.size(); ++i) {
    acc += g.cell_mass[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;
  RngStream rng(seed, 0);
  std::vector<double> rows(n * g.dim);
  for (std::int64_t k = 0; k < n; ++k) {
    const double u = rng.next_unit();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::int64_t idx = it - cdf.begin();
    const int i0 = static_cast<int>(idx / g.n[1]);
    const int i1 = static_cast<int>(idx % g.n[1]);
    rows[k * g.dim + 0] = g.lo[0] + (i0 + rng.next_unit()) * g.spacing(0);
    if (g.dim == 2)
      rows[k * g.dim + 1] = g.lo[1] + (i1 + rng.next_unit()) * g.spacing(1);
  }
  return rows;
}

// Quantile of the 1-D grid law, piecewise uniform within cells.
inline double grid_quantile(const GridDensity& g, double q) {
  if (g.dim != 1) throw InvalidParameter("grid_quantile: 1-D only");
  q = std::clamp(q, 0.0, 1.0);
  double acc = 0;
  for (int i = 0; i < g.n[0]; ++i) {
    const double m = g.cell_mass[i];
    if (acc + m >= q || i == g.n[0] - 1) {
      const double frac = (m > 0) ? std::clamp((q - acc) / m, 0.0, 1.0) : 0.5;
      return g.lo[0] + (i + frac) * g.spacing(0);
    }
    acc += m;
  }
  return g.hi[0];
}

// Sample histogram on a grid's cells. Out-of-box samples are not binned but
// are counted, so mass[] sums to (1 - out_of_box/n_samples).
struct Histogram {
  int dim = 1;
  std::array<double, 2> lo{0, 0}, hi{0, 0};
  std::array<int, 2> n{1, 1};
  std::vector<double> mass;
  std::int64_t n_samples = 0;
  std::int64_t out_of_box = 0;

  bool same_grid(const GridDensity& g) const {
    return dim == g.dim && lo == g.lo && hi == g.hi && n == g.n;
  }
};

// Cell index of a point, or -1 when it falls outside the box. The right edge
// of each axis belongs to the last cell so x == hi is not lost to rounding.
inline std::int64_t cell_index(const GridDensity& g, std::span<const double> x) {
  const double s0 = g.spacing(0);
  const double x0 = x[0];
  int i0 = static_cast<int>(std::floor((x0 - g.lo[0]) / s0));
  if (x0 == g.hi[0]) i0 = g.n[0] - 1;
  if (i0 < 0 || i0 >= g.n[0]) return -1;
  int i1 = 0;
  if (g.dim == 2) {
    const double s1 = g.spacing(1);
    const double x1 = x[1];
    i1 = static_cast<int>(std::floor((x1 - g.lo[1]) / s1));
    if (x1 == g.hi[1]) i1 = g.n[1] - 1;
    if (i1 < 0 || i1 >= g.n[1]) return -1;
  }
  return g.index(i0, i1);
}

inline Histogram bin_on_grid(const GridDensity& g, std::span<const double> rows,
                             std::int64_t n_rows) {
  if (n_rows < 1) throw InvalidInput("bin_on_grid: no samples");
  if (rows.size() != static_cast<size_t>(n_rows) * g.dim)
    throw InvalidInput("bin_on_grid: row buffer size mismatch");
  Histogram h;
  h.dim = g.dim;
  h.lo = g.lo;
  h.hi = g.hi;
  h.n = g.n;
  h.n_samples = n_rows;
  h.mass.assign(g.cell_count(), 0.0);
  for (std::int64_t k = 0; k < n_rows; ++k) {
    const std::int64_t idx = cell_index(g, rows.subspan(k * g.dim, g.dim));
    if (idx >= 0)
      h.mass[idx] += 1.0;
    else
      ++h.out_of_box;
  }
  const double inv = 1.0 / static_cast<double>(n_rows);
  for (auto& m : h.mass) m *= inv;
  return h;
}

}  // namespace stula
