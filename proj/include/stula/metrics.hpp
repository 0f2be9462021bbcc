#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "stula/grid.hpp"

namespace stula {

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::string estimator;
  std::int64_t n_samples_a = 0;
  std::int64_t n_samples_b = 0;
  std::array<int, 2> grid_cells{0, 0};
  std::int64_t empty_bins = 0;
  std::int64_t out_of_box = 0;
  int n_projections = 0;
};

// Total variation of a sample histogram against the grid reference. Mass that
// escaped the box has essentially nothing opposite it (the reference box
// contains all but <=1e-12 of pi), so it contributes its full half.
inline MetricReport tv_distance(const Histogram& a, const GridDensity& b) {
  if (!a.same_grid(b)) throw InvalidInput("tv_distance: histogram binned on a different grid");
  double s = 0;
  for (size_t i = 0; i < a.mass.size(); ++i) s += std::abs(a.mass[i] - b.cell_mass[i]);
  const double out_frac = static_cast<double>(a.out_of_box) / a.n_samples;
  MetricReport r;
  r.metric = "tv";
  r.estimator = "histogram-vs-grid";
  r.value = std::min(1.0, 0.5 * (s + out_frac));
  r.n_samples_a = a.n_samples;
  r.grid_cells = {b.n[0], b.n[1]};
  r.out_of_box = a.out_of_box;
  return r;
}

inline MetricReport tv_distance(const GridDensity& a, const GridDensity& b) {
  if (!a.same_grid(b)) throw InvalidInput("tv_distance: grids differ");
  double s = 0;
  for (size_t i = 0; i < a.cell_mass.size(); ++i)
    s += std::abs(a.cell_mass[i] - b.cell_mass[i]);
  MetricReport r;
  r.metric = "tv";
  r.estimator = "grid-vs-grid";
  r.value = std::min(1.0, 0.5 * s);
  r.grid_cells = {b.n[0], b.n[1]};
  return r;
}

// KL of a sample histogram against the grid reference, sum a log(a/b) with
// the 0 log 0 = 0 convention. The reference's log-mass is taken from the
// stored log-space form, so tail cells whose mass underflowed still divide
// cleanly. Out-of-box samples are excluded (and reported); empty bins are
// counted as diagnostics.
inline MetricReport kl_divergence(const Histogram& a, const GridDensity& b) {
  if (!a.same_grid(b)) throw InvalidInput("kl_divergence: histogram binned on a different grid");
  double kl = 0;
  std::int64_t empty = 0;
  for (size_t i = 0; i < a.mass.size(); ++i) {
    const double ai = a.mass[i];
    if (ai == 0.0) {
      ++empty;
      continue;
    }
    kl += ai * (std::log(ai) - b.log_mass(static_cast<std::int64_t>(i)));
  }
  MetricReport r;
  r.metric = "kl";
  r.estimator = "histogram-vs-grid";
  r.value = std::max(0.0, kl);
  r.n_samples_a = a.n_samples;
  r.grid_cells = {b.n[0], b.n[1]};
  r.empty_bins = empty;
  r.out_of_box = a.out_of_box;
  return r;
}

namespace detail {

inline double w2_sorted(std::vector<double>& a, std::vector<double>& b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / a.size());
}

}  // namespace detail

// 1-D Wasserstein-2 by quantile coupling: in one dimension the optimal
// transport pairs order statistics, so this is exact for empirical measures.
inline MetricReport w2_1d(std::span<const double> sa, std::span<const double> sb) {
  if (sa.size() < 2 || sb.size() < 2)
    throw InvalidInput("w2_1d: need at least 2 samples per side");
  if (sa.size() != sb.size())
    throw InvalidInput("w2_1d: sample-vs-sample coupling needs equal counts");
  std::vector<double> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
  MetricReport r;
  r.metric = "w2";
  r.estimator = "quantile-coupling";
  r.value = detail::w2_sorted(a, b);
  r.n_samples_a = static_cast<std::int64_t>(sa.size());
  r.n_samples_b = static_cast<std::int64_t>(sb.size());
  return r;
}

// Samples against the grid law: order statistic i pairs with the grid
// quantile at (i - 1/2)/n.
inline MetricReport w2_1d(std::span<const double> sa, const GridDensity& g) {
  if (sa.size() < 2) throw InvalidInput("w2_1d: need at least 2 samples");
  if (g.dim != 1) throw InvalidParameter("w2_1d: grid must be 1-D");
  std::vector<double> a(sa.begin(), sa.end());
  std::sort(a.begin(), a.end());
  const std::int64_t n = static_cast<std::int64_t>(a.size());
  // One cumulative sweep over cells instead of n independent quantile calls.
  double s = 0;
  double acc = 0;
  int cell = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double q = (i + 0.5) / n;
    while (cell < g.n[0] - 1 && acc + g.cell_mass[cell] < q) acc += g.cell_mass[cell++];
    const double m = g.cell_mass[cell];
    const double frac = (m > 0) ? std::clamp((q - acc) / m, 0.0, 1.0) : 0.5;
    const double xq = g.lo[0] + (cell + frac) * g.spacing(0);
    s += (a[i] - xq) * (a[i] - xq);
  }
  MetricReport r;
  r.metric = "w2";
  r.estimator = "quantile-coupling-vs-grid";
  r.value = std::sqrt(s / n);
  r.n_samples_a = n;
  r.grid_cells = {g.n[0], g.n[1]};
  return r;
}

// Sliced surrogate for W2 in d >= 2: root mean of squared 1-D W2 over seeded
// random directions. Reported as "sliced", never as exact W2.
inline MetricReport sliced_w2(std::span<const double> rows_a,
                              std::span<const double> rows_b, int dim,
                              int n_projections, std::uint64_t seed) {
  if (dim < 2) throw InvalidParameter("sliced_w2: use w2_1d in one dimension");
  if (n_projections < 8)
    throw InvalidParameter("sliced_w2: need at least 8 projections");
  if (seed == 0) throw InvalidParameter("sliced_w2: seed 0 is reserved");
  const std::int64_t na = rows_a.size() / dim, nb = rows_b.size() / dim;
  if (na < 2 || nb < 2) throw InvalidInput("sliced_w2: need at least 2 samples per side");
  if (na != nb) throw InvalidInput("sliced_w2: equal sample counts required");
  RngStream rng(seed, 0);
  std::vector<double> dir(dim), pa(na), pb(nb);
  double mean_sq = 0;
  for (int k = 0; k < n_projections; ++k) {
    double nrm = 0;
    do {
      for (auto& v : dir) v = rng.next_gaussian();
      nrm = norm2(dir);
    } while (nrm == 0);
    for (auto& v : dir) v /= nrm;
    for (std::int64_t i = 0; i < na; ++i) {
      double s = 0;
      for (int j = 0; j < dim; ++j) s += dir[j] * rows_a[i * dim + j];
      pa[i] = s;
    }
    for (std::int64_t i = 0; i < nb; ++i) {
      double s = 0;
      for (int j = 0; j < dim; ++j) s += dir[j] * rows_b[i * dim + j];
      pb[i] = s;
    }
    const double w = detail::w2_sorted(pa, pb);
    mean_sq += w * w;
  }
  MetricReport r;
  r.metric = "sliced_w2";
  r.estimator = "sliced";
  r.value = std::sqrt(mean_sq / n_projections);
  r.n_samples_a = na;
  r.n_samples_b = nb;
  r.n_projections = n_projections;
  return r;
}

// Mean of u over samples minus the declared minimum value.
inline MetricReport excess_risk(std::span<const double> rows, std::int64_t n_rows,
                                const PotentialSpec& p) {
  if (!p.known_minimum)
    throw MissingMetadata("excess_risk: potential '" + p.id +
                          "' has no known minimum");
  if (n_rows < 1) throw InvalidInput("excess_risk: no samples");
  double s = 0;
  for (std::int64_t i = 0; i < n_rows; ++i)
    s += p.u(rows.subspan(i * p.dim, p.dim));
  MetricReport r;
  r.metric = "excess_risk";
  r.estimator = "sample-mean";
  r.value = s / n_rows - p.known_minimum->value;
  r.n_samples_a = n_rows;
  return r;
}

// Quadrature oracle: integral of u against the grid law, minus u*.
inline double excess_risk_quadrature(const GridDensity& g, const PotentialSpec& p) {
  if (!p.known_minimum)
    throw MissingMetadata("excess_risk_quadrature: no known minimum");
  double s = 0;
  Vec x(g.dim);
  for (int i0 = 0; i0 < g.n[0]; ++i0) {
    x[0] = g.mid(0, i0);
    for (int i1 = 0; i1 < g.n[1]; ++i1) {
      if (g.dim == 2) x[1] = g.mid(1, i1);
      s += g.cell_mass[g.index(i0, i1)] * p.u(x);
    }
  }
  return s - p.known_minimum->value;
}

}  // namespace stula
