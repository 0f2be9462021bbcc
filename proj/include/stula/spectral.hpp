#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stula/grid.hpp"

namespace stula {

// Finite-volume discretization of the diffusion generator
//   L f = (1/beta) lap f - <grad u, grad f>
// on the cells of a reference grid. Adjacent cells i,j are coupled by the
// conductance w_ij = (1/beta) sqrt(pi_i pi_j) / s^2, and the spectrum is that
// of the generalized pair (graph Laplacian K, diag(pi)). We work in the
// symmetrized variable g = sqrt(pi) f, where the pair turns into the dense-
// free symmetric matrix
//   B_ij = -1/(beta s^2)                   for neighbors (exactly),
//   B_ii = 1/(beta s^2) sum_j exp((l_j - l_i)/2),   l = log pi.
// Assembling from log-mass differences keeps deep tails exact where pi
// itself underflows, and makes B symmetric by construction.
struct GeneratorOperator {
  std::optional<PotentialSpec> p;  // retained so spectral_gap can refine
  GridDensity grid;
  double beta = 1.0;
  std::array<double, 2> c{0, 0};  // 1/(beta s_a^2) per axis
  std::vector<double> diag;
  std::vector<double> sqrt_mass;  // exp((l_i - l_max)/2), kernel of B

  std::int64_t size() const { return static_cast<std::int64_t>(diag.size()); }

  // Scale against which residuals and tolerances are measured.
  double norm_scale() const {
    double m = 0;
    for (double d : diag) m = std::max(m, d);
    return m + 2 * (c[0] + c[1]);
  }

  // y = B x (symmetrized operator).
  void apply(std::span<const double> x, std::span<double> y) const {
    const int n0 = grid.n[0], n1 = grid.n[1];
    for (int i0 = 0; i0 < n0; ++i0)
      for (int i1 = 0; i1 < n1; ++i1) {
        const std::int64_t i = grid.index(i0, i1);
        double v = diag[i] * x[i];
        if (i0 > 0) v -= c[0] * x[grid.index(i0 - 1, i1)];
        if (i0 < n0 - 1) v -= c[0] * x[grid.index(i0 + 1, i1)];
        if (i1 > 0) v -= c[1] * x[grid.index(i0, i1 - 1)];
        if (i1 < n1 - 1) v -= c[1] * x[grid.index(i0, i1 + 1)];
        y[i] = v;
      }
  }

  // Laplacian half of the pair applied to a plain function: sum of
  // w_ij (f_i - f_j) over neighbors j, with weights normalized by the peak
  // mass. Constants are annihilated term by term.
  void apply_laplacian(std::span<const double> f, std::span<double> out) const {
    const int n0 = grid.n[0], n1 = grid.n[1];
    auto lm = [&](std::int64_t i) { return grid.log_unnorm[i]; };
    double lmax = lm(0);
    for (std::int64_t i = 1; i < size(); ++i) lmax = std::max(lmax, lm(i));
    auto w = [&](std::int64_t i, std::int64_t j, double ca) {
      return ca * std::exp(0.5 * (lm(i) + lm(j)) - lmax);
    };
    for (int i0 = 0; i0 < n0; ++i0)
      for (int i1 = 0; i1 < n1; ++i1) {
        const std::int64_t i = grid.index(i0, i1);
        double v = 0;
        if (i0 > 0) v += w(i, grid.index(i0 - 1, i1), c[0]) * (f[i] - f[grid.index(i0 - 1, i1)]);
        if (i0 < n0 - 1) v += w(i, grid.index(i0 + 1, i1), c[0]) * (f[i] - f[grid.index(i0 + 1, i1)]);
        if (i1 > 0) v += w(i, grid.index(i0, i1 - 1), c[1]) * (f[i] - f[grid.index(i0, i1 - 1)]);
        if (i1 < n1 - 1) v += w(i, grid.index(i0, i1 + 1), c[1]) * (f[i] - f[grid.index(i0, i1 + 1)]);
        out[i] = v;
      }
  }

  // max |(B sqrt_mass)_i|, relative to the operator scale. Zero in exact
  // arithmetic: sqrt(pi) spans the kernel.
  double kernel_residual() const {
    std::vector<double> r(size());
    apply(sqrt_mass, r);
    double m = 0;
    for (double v : r) m = std::max(m, std::abs(v));
    return m / norm_scale();
  }
};

inline GeneratorOperator discretize_generator(const GridDensity& g) {
  GeneratorOperator op;
  op.grid = g;
  op.beta = g.beta;
  for (int a = 0; a < g.dim; ++a) {
    const double s = g.spacing(a);
    op.c[a] = 1.0 / (g.beta * s * s);
  }
  const std::int64_t n = g.cell_count();
  op.diag.assign(n, 0.0);
  op.sqrt_mass.assign(n, 0.0);
  double lmax = g.log_unnorm[0];
  for (std::int64_t i = 1; i < n; ++i) lmax = std::max(lmax, g.log_unnorm[i]);
  auto accum = [&](std::int64_t i, std::int64_t j, double ca) {
    const double d = 0.5 * (g.log_unnorm[j] - g.log_unnorm[i]);
    if (d > 700.0)
      throw NumericalFailure(
          "discretize_generator: adjacent cells differ by more than 1400 in "
          "log-mass; refine the grid");
    op.diag[i] += ca * std::exp(d);
  };
  for (int i0 = 0; i0 < g.n[0]; ++i0)
    for (int i1 = 0; i1 < g.n[1]; ++i1) {
      const std::int64_t i = g.index(i0, i1);
      op.sqrt_mass[i] = std::exp(0.5 * (g.log_unnorm[i] - lmax));
      if (i0 > 0) accum(i, g.index(i0 - 1, i1), op.c[0]);
      if (i0 < g.n[0] - 1) accum(i, g.index(i0 + 1, i1), op.c[0]);
      if (i1 > 0) accum(i, g.index(i0, i1 - 1), op.c[1]);
      if (i1 < g.n[1] - 1) accum(i, g.index(i0, i1 + 1), op.c[1]);
    }
  return op;
}

inline GeneratorOperator discretize_generator(const PotentialSpec& p, double beta,
                                              std::span<const double> box_lo,
                                              std::span<const double> box_hi,
                                              std::span<const int> n_cells) {
  auto op = discretize_generator(grid_reference(p, beta, box_lo, box_hi, n_cells));
  op.p = p;
  return op;
}

struct SpectrumResult {
  double beta = 1.0;
  std::array<double, 2> box_lo{0, 0}, box_hi{0, 0};
  std::array<int, 2> n_cells{0, 0};
  std::vector<double> eigenvalues;  // k+1 values, ascending, [0] ~ 0
  double gap = 0.0;                 // eigenvalues[1]
  bool converged = false;  // gap within 5% of the doubled-resolution gap
  double refined_gap = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

namespace detail {

// Number of eigenvalues of the symmetric tridiagonal matrix (diag d,
// constant off-diagonal -c) strictly below x, by Sturm sequence count.
inline int sturm_count_below(const std::vector<double>& d, double c, double x) {
  constexpr double pivmin = 1e-290;
  int cnt = 0;
  double q = d[0] - x;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0) ++cnt;
  const double c2 = c * c;
  for (size_t i = 1; i < d.size(); ++i) {
    q = d[i] - x - c2 / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0) ++cnt;
  }
  return cnt;
}

// k+1 smallest eigenvalues of the 1-D operator by bisection.
inline std::vector<double> tridiag_smallest(const GeneratorOperator& op, int k) {
  const auto& d = op.diag;
  const double c = op.c[0];
  double gersh = 0;
  for (double v : d) gersh = std::max(gersh, v);
  gersh += 2 * c + 1.0;
  std::vector<double> eig(k + 1);
  for (int j = 0; j <= k; ++j) {
    double lo = -1e-8 * gersh, hi = gersh;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (sturm_count_below(d, c, mid) >= j + 1)
        hi = mid;
      else
        lo = mid;
    }
    eig[j] = 0.5 * (lo + hi);
  }
  return eig;
}

// Blocked preconditioned eigensolver for the 2-D operator: smallest m
// eigenpairs of B via Rayleigh-Ritz over [X, W, P] with Jacobi
// preconditioning. The kernel vector sqrt(pi) seeds the first column.
inline std::vector<double> lobpcg_smallest(const GeneratorOperator& op, int m,
                                           int& iterations) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const std::int64_t n = op.size();
  if (m >= n) throw InvalidParameter("spectral_gap: k too large for the grid");
  const double scale = op.norm_scale();
  const double tol = 1e-7 * scale;

  auto apply_block = [&](const MatrixXd& V) {
    MatrixXd AV(n, V.cols());
    for (int j = 0; j < V.cols(); ++j) {
      std::span<const double> x(V.col(j).data(), static_cast<size_t>(n));
      std::span<double> y(AV.col(j).data(), static_cast<size_t>(n));
      op.apply(x, y);
    }
    return AV;
  };
  auto orthonormal = [&](const MatrixXd& V) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(V);
    qr.setThreshold(1e-12);
    const int r = static_cast<int>(qr.rank());
    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, r);
    return Q;
  };

  MatrixXd X(n, m);
  for (std::int64_t i = 0; i < n; ++i) X(i, 0) = op.sqrt_mass[i];
  RngStream rng(0x5eedu, 0);
  for (int j = 1; j < m; ++j)
    for (std::int64_t i = 0; i < n; ++i) X(i, j) = rng.next_gaussian();
  X = orthonormal(X);
  if (X.cols() < m) throw NumericalFailure("spectral_gap: degenerate start basis");

  MatrixXd P(n, 0);
  VectorXd theta = VectorXd::Zero(m);
  std::vector<double> resid(m, 0.0);
  const int max_iter = 600;
  for (int iter = 0; iter < max_iter; ++iter) {
    iterations = iter + 1;
    MatrixXd AX = apply_block(X);
    MatrixXd G = X.transpose() * AX;
    Eigen::SelfAdjointEigenSolver<MatrixXd> small(0.5 * (G + G.transpose()));
    X = X * small.eigenvectors();
    AX = AX * small.eigenvectors();
    theta = small.eigenvalues();

    MatrixXd R = AX - X * theta.asDiagonal();
    bool done = true;
    for (int j = 0; j < m; ++j) {
      resid[j] = R.col(j).norm();
      if (resid[j] > tol) done = false;
    }
    if (done) {
      std::vector<double> eig(theta.data(), theta.data() + m);
      return eig;
    }

    MatrixXd W = R;
    for (int j = 0; j < m; ++j)
      for (std::int64_t i = 0; i < n; ++i) W(i, j) /= op.diag[i];

    MatrixXd S(n, m + W.cols() + P.cols());
    S.leftCols(m) = X;
    S.middleCols(m, W.cols()) = W;
    if (P.cols() > 0) S.rightCols(P.cols()) = P;
    MatrixXd Q = orthonormal(S);
    MatrixXd AQ = apply_block(Q);
    MatrixXd H = Q.transpose() * AQ;
    Eigen::SelfAdjointEigenSolver<MatrixXd> rr(0.5 * (H + H.transpose()));
    MatrixXd V = rr.eigenvectors().leftCols(m);
    MatrixXd Xnew = Q * V;
    P = Xnew - X * (X.transpose() * Xnew);
    // Keep only the directions P actually added.
    if (P.norm() > 1e-14) {
      P = orthonormal(P);
    } else {
      P.resize(n, 0);
    }
    X = Xnew;
  }
  std::string msg = "spectral_gap: eigensolver did not converge; residuals";
  for (int j = 0; j < m; ++j) msg += " " + std::to_string(resid[j]);
  throw NumericalFailure(msg);
}

inline std::vector<double> smallest_eigenvalues(const GeneratorOperator& op, int k,
                                                int& iterations) {
  if (op.grid.dim == 1) {
    iterations = 0;
    return tridiag_smallest(op, k);
  }
  return lobpcg_smallest(op, k + 1, iterations);
}

}  // namespace detail

inline SpectrumResult spectral_gap(const GeneratorOperator& op, int k = 6) {
  if (k < 1) throw InvalidParameter("spectral_gap: k >= 1");
  if (k + 1 >= op.size())
    throw InvalidParameter("spectral_gap: k must be below the cell count");
  SpectrumResult r;
  r.beta = op.beta;
  r.box_lo = op.grid.lo;
  r.box_hi = op.grid.hi;
  r.n_cells = op.grid.n;
  r.eigenvalues = detail::smallest_eigenvalues(op, k, r.iterations);
  if (r.eigenvalues[0] > 1e-8)
    throw NumericalFailure(
        "spectral_gap: kernel eigenvalue " + std::to_string(r.eigenvalues[0]) +
        " exceeds 1e-8; discretization is inconsistent");
  r.gap = r.eigenvalues[1];
  if (r.gap <= 0)
    throw NumericalFailure("spectral_gap: nonpositive gap " + std::to_string(r.gap));

  if (op.p) {
    std::array<int, 2> n2{2 * op.grid.n[0], op.grid.dim == 2 ? 2 * op.grid.n[1] : 1};
    auto fine = discretize_generator(
        *op.p, op.beta, std::span<const double>(op.grid.lo.data(), op.grid.dim),
        std::span<const double>(op.grid.hi.data(), op.grid.dim),
        std::span<const int>(n2.data(), op.grid.dim));
    int it2 = 0;
    // Only the gap is needed for the flag; a slim block keeps 2-D cheap.
    auto fine_eigs = op.grid.dim == 1 ? detail::tridiag_smallest(fine, 1)
                                      : detail::lobpcg_smallest(fine, 3, it2);
    r.refined_gap = fine_eigs[1];
    r.converged = std::abs(r.refined_gap - r.gap) <= 0.05 * std::abs(r.gap);
  }
  return r;
}

// Box wide enough that the reference mass is contained for every beta at or
// above beta_min: expand from the declared minimum until the potential rises
// by margin/beta_min at both walls, then pad the width. One shared box keeps
// a sweep's grids comparable.
inline std::array<Vec, 2> suggest_box(const PotentialSpec& p, double beta_min,
                                      double margin = 40.0, double pad = 0.10) {
  if (beta_min <= 0) throw InvalidParameter("suggest_box: beta_min must be positive");
  if (p.non_confining)
    throw InvalidInput("suggest_box: '" + p.id + "' is analysis-only, not a target");
  if (!p.known_minimum)
    throw MissingMetadata("suggest_box: potential '" + p.id + "' has no known minimum");
  if (p.dim > 2) throw InvalidParameter("suggest_box: dim <= 2");
  const Vec& loc = p.known_minimum->location;
  const double ustar = p.known_minimum->value;
  const double rise = margin / beta_min;
  Vec lo(p.dim), hi(p.dim);
  Vec x(loc);
  for (int a = 0; a < p.dim; ++a) {
    const double step = 1e-3 * std::max(1.0, std::abs(loc[a]));
    for (int dir : {-1, +1}) {
      double t = loc[a];
      while (true) {
        t += dir * step;
        if (std::abs(t) > 1e6)
          throw NumericalFailure("suggest_box: no containment within |x| <= 1e6 on axis " +
                                 std::to_string(a));
        x[a] = t;
        if (p.u(x) - ustar >= rise) break;
      }
      (dir < 0 ? lo[a] : hi[a]) = t;
    }
    x[a] = loc[a];
    const double w = hi[a] - lo[a];
    lo[a] -= 0.5 * pad * w;
    hi[a] += 0.5 * pad * w;
  }
  return {lo, hi};
}

}  // namespace stula
