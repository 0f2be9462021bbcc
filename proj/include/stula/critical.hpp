#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stula/potential.hpp"
#include "stula/rng.hpp"

namespace stula {

enum class CriticalKind { minimum, saddle, maximum, degenerate };

inline std::string to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::minimum: return "minimum";
    case CriticalKind::saddle: return "saddle";
    case CriticalKind::maximum: return "maximum";
    default: return "degenerate";
  }
}

struct CriticalPoint {
  Vec location;
  double residual = 0.0;         // |h| at the reported point
  Vec hessian_eigenvalues;       // ascending
  CriticalKind classification = CriticalKind::degenerate;
  double morse_margin = 0.0;     // min |eigenvalue|
};

struct SearchDiagnostics {
  std::int64_t n_seeds = 0;
  std::int64_t n_converged = 0;
  std::int64_t n_dropped = 0;  // non-converged or escaped seeds
};

namespace detail {

inline CriticalPoint classify_point(const PotentialSpec& p, const Vec& x,
                                    double residual, double degenerate_tol) {
  const int d = p.dim;
  const Vec hbuf = hessian_at(p, x);
  Eigen::Map<const Eigen::MatrixXd> H(hbuf.data(), d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  CriticalPoint cp;
  cp.location = x;
  cp.residual = residual;
  cp.hessian_eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + d);
  cp.morse_margin = std::abs(cp.hessian_eigenvalues[0]);
  for (double e : cp.hessian_eigenvalues)
    cp.morse_margin = std::min(cp.morse_margin, std::abs(e));
  if (cp.morse_margin < degenerate_tol) {
    cp.classification = CriticalKind::degenerate;
  } else if (cp.hessian_eigenvalues.front() > 0) {
    cp.classification = CriticalKind::minimum;
  } else if (cp.hessian_eigenvalues.back() < 0) {
    cp.classification = CriticalKind::maximum;
  } else {
    cp.classification = CriticalKind::saddle;
  }
  return cp;
}

}  // namespace detail

// Newton iteration on the gradient from every seed of a rectangular grid,
// with a damped gradient-descent step wherever the Hessian is singular.
// Converged points are deduplicated; seeds that fail to converge are dropped
// and counted, never fatal.
inline std::vector<CriticalPoint> find_critical_points(
    const PotentialSpec& p, std::span<const double> seed_lo,
    std::span<const double> seed_hi, std::span<const int> seeds_per_axis,
    double tol = 1e-10, double degenerate_tol = 1e-6,
    SearchDiagnostics* diag = nullptr) {
  const int d = p.dim;
  if (d > 3) throw InvalidParameter("find_critical_points: dim <= 3");
  if (static_cast<int>(seed_lo.size()) != d ||
      static_cast<int>(seed_hi.size()) != d ||
      static_cast<int>(seeds_per_axis.size()) != d)
    throw InvalidInput("find_critical_points: seed grid specs must match dim");
  if (tol <= 0) throw InvalidParameter("find_critical_points: tol must be positive");
  std::int64_t total = 1;
  for (int a = 0; a < d; ++a) {
    if (seeds_per_axis[a] < 1 || seed_hi[a] < seed_lo[a])
      throw InvalidInput("find_critical_points: bad seed grid on axis " +
                         std::to_string(a));
    total *= seeds_per_axis[a];
    if (total > 1000000)
      throw InvalidParameter("find_critical_points: more than 1e6 seeds");
  }

  SearchDiagnostics local;
  local.n_seeds = total;
  std::vector<CriticalPoint> found;
  Vec x(d), g(d);

  for (std::int64_t s = 0; s < total; ++s) {
    std::int64_t rem = s;
    for (int a = 0; a < d; ++a) {
      const int na = seeds_per_axis[a];
      const int ia = static_cast<int>(rem % na);
      rem /= na;
      x[a] = (na == 1) ? 0.5 * (seed_lo[a] + seed_hi[a])
                       : seed_lo[a] + ia * (seed_hi[a] - seed_lo[a]) / (na - 1);
    }

    bool ok = false;
    for (int iter = 0; iter < 200; ++iter) {
      p.h(x, g);
      if (!all_finite(g) || norm2(x) > 1e6) break;
      const double res = norm2(g);
      // Polish well below tol so duplicates land within the dedup radius.
      if (res <= 1e-3 * tol || (res <= tol && iter > 0)) {
        ok = true;
        break;
      }
      const Vec hbuf = hessian_at(p, x);
      Eigen::Map<const Eigen::MatrixXd> H(hbuf.data(), d, d);
      Eigen::Map<const Eigen::VectorXd> gv(g.data(), d);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
      lu.setThreshold(1e-10);
      if (lu.isInvertible()) {
        Eigen::VectorXd step = lu.solve(gv);
        for (int a = 0; a < d; ++a) x[a] -= step[a];
      } else {
        const double eta = 0.05 * (1.0 + norm2(x)) / (1.0 + res);
        for (int a = 0; a < d; ++a) x[a] -= eta * g[a];
      }
    }
    if (!ok) {
      ++local.n_dropped;
      continue;
    }
    ++local.n_converged;

    p.h(x, g);
    const double res = norm2(g);
    bool dup = false;
    for (const auto& cp : found) {
      double dist2 = 0;
      for (int a = 0; a < d; ++a)
        dist2 += (cp.location[a] - x[a]) * (cp.location[a] - x[a]);
      if (std::sqrt(dist2) < 10 * tol) {
        dup = true;
        break;
      }
    }
    if (!dup) found.push_back(detail::classify_point(p, x, res, degenerate_tol));
  }

  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
    return a.location < b.location;
  });
  if (diag) *diag = local;
  return found;
}

struct MorseReport {
  double l_star = 0.0;
  double saddle_max_eigenvalue_bound = 0.0;  // max over non-minima of lowest eigenvalue
  bool pass = false;
};

inline MorseReport morse_report(const PotentialSpec&,
                                const std::vector<CriticalPoint>& points) {
  if (points.empty()) throw InvalidInput("morse_report: empty critical-point list");
  MorseReport r;
  r.l_star = std::numeric_limits<double>::infinity();
  r.pass = true;
  bool any_saddle = false;
  double bound = -std::numeric_limits<double>::infinity();
  for (const auto& cp : points) {
    r.l_star = std::min(r.l_star, cp.morse_margin);
    if (cp.classification == CriticalKind::degenerate) r.pass = false;
  }
  for (const auto& cp : points) {
    if (cp.classification == CriticalKind::minimum) continue;
    any_saddle = true;
    bound = std::max(bound, cp.hessian_eigenvalues.front());
    if (!(cp.hessian_eigenvalues.front() <= -r.l_star)) r.pass = false;
  }
  r.saddle_max_eigenvalue_bound = any_saddle ? bound : 0.0;
  return r;
}

struct CurvatureReport {
  double K_estimate = 0.0;        // max(0, -lowest sampled Hessian eigenvalue)
  double C_prime_estimate = 0.0;  // max sampled |H| / (1 + |h|)
  double c_H = 0.0;               // min |h| on the sphere of radius R
  double R = 0.0;
  std::int64_t n_tested = 0;
  std::string label = "sampled evidence";
};

// Samples curvature lower bounds, Hessian-vs-gradient growth, and the
// gradient floor outside a ball. Evidence, not proof: reports extremes over
// a deterministic axis sweep plus a seeded cloud.
inline CurvatureReport check_C_assumptions(const PotentialSpec& p,
                                           std::int64_t n_samples, double radius,
                                           std::uint64_t seed) {
  if (n_samples < 1000)
    throw InvalidParameter("check_C_assumptions: sampling budget >= 1000");
  if (radius <= 0) throw InvalidParameter("check_C_assumptions: radius > 0");
  if (seed == 0) throw InvalidParameter("check_C_assumptions: seed 0 is reserved");
  const int d = p.dim;
  CurvatureReport rep;
  rep.R = radius;
  RngStream rng(seed, 0);
  Vec x(d, 0.0), g(d);
  double min_eig = std::numeric_limits<double>::infinity();
  double cprime = 0.0;

  auto visit = [&](const Vec& pt) {
    const Vec hbuf = hessian_at(p, pt);
    Eigen::Map<const Eigen::MatrixXd> H(hbuf.data(), d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    min_eig = std::min(min_eig, es.eigenvalues()[0]);
    const double hnorm = std::max(std::abs(es.eigenvalues()[0]),
                                  std::abs(es.eigenvalues()[d - 1]));
    p.h(pt, g);
    cprime = std::max(cprime, hnorm / (1.0 + norm2(g)));
    ++rep.n_tested;
  };

  // Origin and axis-aligned radial lines catch symmetric extremes exactly.
  visit(x);
  const int n_rad = 64;
  for (int a = 0; a < d; ++a) {
    for (int i = 1; i <= n_rad; ++i) {
      const double r = radius * i / n_rad;
      for (int sgn : {-1, +1}) {
        Vec pt(d, 0.0);
        pt[a] = sgn * r;
        visit(pt);
      }
    }
  }
  const std::int64_t n_ball = n_samples;
  for (std::int64_t i = 0; i < n_ball; ++i) visit(detail::ball_point(rng, d, radius));

  rep.K_estimate = std::max(0.0, -min_eig);
  rep.C_prime_estimate = cprime;

  // Gradient floor on the sphere |x| = R.
  double chb = std::numeric_limits<double>::infinity();
  auto sphere_visit = [&](const Vec& pt) {
    p.h(pt, g);
    chb = std::min(chb, norm2(g));
  };
  if (d == 1) {
    sphere_visit({radius});
    sphere_visit({-radius});
  } else {
    const std::int64_t n_sph = std::max<std::int64_t>(n_samples, 1000);
    for (std::int64_t i = 0; i < n_sph; ++i) {
      Vec pt(d);
      double nr = 0;
      do {
        for (auto& v : pt) v = rng.next_gaussian();
        nr = norm2(pt);
      } while (nr == 0);
      for (auto& v : pt) v *= radius / nr;
      sphere_visit(pt);
    }
  }
  rep.c_H = chb;
  return rep;
}

}  // namespace stula
