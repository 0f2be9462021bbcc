#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "stula/potential.hpp"

namespace stula {

enum class Scheme { stula, ula, tula };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::stula: return "stula";
    case Scheme::ula: return "ula";
    default: return "tula";
  }
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "stula") return Scheme::stula;
  if (s == "ula") return Scheme::ula;
  if (s == "tula") return Scheme::tula;
  throw InvalidParameter("unknown scheme '" + s + "' (stula|ula|tula)");
}

// Largest stepsize the split-taming theory covers: the scheme cap
// min{1, 1/(4(2a+4L)^2)} intersected with the moment-bound requirement
// lambda < min{1, 1/(4a)}.
inline double lambda_max(const PotentialSpec& p) {
  if (!p.dissipativity)
    throw MissingMetadata("lambda_max: potential '" + p.id +
                          "' declares no dissipativity constant a");
  const double a = p.dissipativity->a;
  const double L = p.growth.L;
  const double c = 2.0 * a + 4.0 * L;
  return std::min({1.0, 1.0 / (4.0 * c * c), 1.0 / (4.0 * a)});
}

namespace detail {

// Shared by step() and the chain runner so both produce bit-identical
// arithmetic. Writes the scheme's drift evaluated at x into out.
//   stula: a x + (h(x) - a x)/(1 + sqrt(lambda)|x|^{2l})
//   ula:   h(x)
//   tula:  h(x)/(1 + lambda|h(x)|)
inline void drift_into(Scheme scheme, const PotentialSpec& p, double a,
                       double two_l, double lambda, std::span<const double> x,
                       std::span<double> out) {
  p.h(x, out);
  switch (scheme) {
    case Scheme::stula: {
      const double denom = 1.0 + std::sqrt(lambda) * pow_abs(norm2(x), two_l);
      for (size_t j = 0; j < x.size(); ++j) {
        const double ax = a * x[j];
        out[j] = ax + (out[j] - ax) / denom;
      }
      break;
    }
    case Scheme::ula:
      break;
    case Scheme::tula: {
      const double denom = 1.0 + lambda * norm2(out);
      for (size_t j = 0; j < x.size(); ++j) out[j] /= denom;
      break;
    }
  }
}

}  // namespace detail

// The split tamed drift h_lambda. Only the superlinear remainder f = h - ax
// is tamed; the linear dissipative part passes through untouched, which is
// what preserves the a/2 dissipativity at every stepsize.
inline Vec tamed_drift(const PotentialSpec& p, double lambda,
                       std::span<const double> x) {
  if (lambda <= 0) throw InvalidParameter("tamed_drift: lambda must be positive");
  if (!p.dissipativity)
    throw MissingMetadata("tamed_drift: potential '" + p.id +
                          "' declares no dissipativity constant a");
  if (static_cast<int>(x.size()) != p.dim || !all_finite(x))
    throw InvalidInput("tamed_drift: bad input point");
  Vec out(p.dim);
  detail::drift_into(Scheme::stula, p, p.dissipativity->a, 2.0 * p.growth.l,
                     lambda, x, out);
  return out;
}

namespace detail {

template <typename MarginFn>
inline SampledCheck sampled_drift_check(const PotentialSpec& p, double lambda,
                                        long n_samples, double radius,
                                        std::uint64_t seed, std::uint64_t stream,
                                        MarginFn margin_at) {
  if (lambda <= 0) throw InvalidParameter("drift check: lambda must be positive");
  if (n_samples < 1) throw InvalidParameter("drift check: n_samples >= 1");
  if (!(radius > 0)) throw InvalidParameter("drift check: radius must be positive");
  if (!p.dissipativity)
    throw MissingMetadata("drift check: potential '" + p.id +
                          "' declares no dissipativity pair");
  SampledCheck out;
  RngStream rng(seed, stream);
  // Radial sweep along each +/- axis first: the taming denominator depends
  // only on |x|, so the worst points tend to be axis-aligned and far out.
  const int n_radial = 64;
  for (int k = 1; k <= n_radial; ++k)
    for (int j = 0; j < p.dim; ++j)
      for (double s : {-1.0, 1.0}) {
        Vec x(p.dim, 0.0);
        x[j] = s * radius * k / n_radial;
        detail::track_worst(out, margin_at(x), x, [] { return Vec{}; });
      }
  for (long i = 0; i < n_samples; ++i) {
    Vec x = detail::ball_point(rng, p.dim, radius);
    detail::track_worst(out, margin_at(x), x, [] { return Vec{}; });
  }
  // Tiny negative tolerance absorbs rounding in the margin arithmetic; the
  // underlying real-number inequalities are not tight on generic points.
  out.holds = out.worst_margin >= -1e-9;
  return out;
}

}  // namespace detail

// |h_lambda(x) - h(x)| <= sqrt(lambda) (|h(x)| + a|x|) |x|^{2l} on sampled
// points. The taming perturbation vanishes as lambda -> 0 at this rate.
inline SampledCheck check_taming_bound(const PotentialSpec& p, double lambda,
                                       long n_samples, double radius,
                                       std::uint64_t seed) {
  Vec g(p.dim);
  return detail::sampled_drift_check(
      p, lambda, n_samples, radius, seed, 10, [&](const Vec& x) {
        const double a = p.dissipativity->a;
        const Vec hl = tamed_drift(p, lambda, x);
        p.h(x, g);
        double diff2 = 0;
        for (int j = 0; j < p.dim; ++j) diff2 += (hl[j] - g[j]) * (hl[j] - g[j]);
        const double rhs = std::sqrt(lambda) * (norm2(g) + a * norm2(x)) *
                           pow_abs(norm2(x), 2.0 * p.growth.l);
        return rhs - std::sqrt(diff2);
      });
}

// <h_lambda(x), x> >= (a/2)|x|^2 - b on sampled points: the split drift keeps
// at least half of the original dissipativity at every stepsize.
inline SampledCheck check_half_dissipativity(const PotentialSpec& p, double lambda,
                                             long n_samples, double radius,
                                             std::uint64_t seed) {
  return detail::sampled_drift_check(
      p, lambda, n_samples, radius, seed, 11, [&](const Vec& x) {
        const auto [a, b] = *p.dissipativity;
        const Vec hl = tamed_drift(p, lambda, x);
        double hx = 0, xx = 0;
        for (int j = 0; j < p.dim; ++j) {
          hx += hl[j] * x[j];
          xx += x[j] * x[j];
        }
        return hx - 0.5 * a * xx + b;
      });
}

// |h_lambda(x)| <= a|x| + (L + a)/sqrt(lambda) on sampled points: the tamed
// drift grows at most linearly, with the superlinear part capped at a
// lambda-dependent constant.
inline SampledCheck check_linear_growth(const PotentialSpec& p, double lambda,
                                        long n_samples, double radius,
                                        std::uint64_t seed) {
  return detail::sampled_drift_check(
      p, lambda, n_samples, radius, seed, 12, [&](const Vec& x) {
        const double a = p.dissipativity->a;
        const Vec hl = tamed_drift(p, lambda, x);
        const double cap = a * norm2(x) + (p.growth.L + a) / std::sqrt(lambda);
        return cap - norm2(hl);
      });
}

// One Euler update x - lambda*drift + sqrt(2 lambda / beta) * noise.
// Never throws on blow-up: a non-finite result is returned as-is and the
// caller records the divergence.
inline Vec step(Scheme scheme, const PotentialSpec& p, double beta, double lambda,
                std::span<const double> state, std::span<const double> noise) {
  if (lambda <= 0 || beta <= 0)
    throw InvalidParameter("step: beta and lambda must be positive");
  if (state.size() != noise.size() || static_cast<int>(state.size()) != p.dim)
    throw InvalidInput("step: state/noise length mismatch");
  const double a = p.dissipativity ? p.dissipativity->a : 0.0;
  if (scheme == Scheme::stula && !p.dissipativity)
    throw MissingMetadata("step: stula needs a dissipativity constant");
  Vec g(p.dim);
  detail::drift_into(scheme, p, a, 2.0 * p.growth.l, lambda, state, g);
  const double sigma = std::sqrt(2.0 * lambda / beta);
  Vec out(p.dim);
  for (int j = 0; j < p.dim; ++j)
    out[j] = state[j] - lambda * g[j] + sigma * noise[j];
  return out;
}

}  // namespace stula
