#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "stula/rng.hpp"
#include "stula/taming.hpp"

namespace stula {

struct InitLaw {
  enum class Kind { point, gaussian } kind = Kind::point;
  Vec center;          // point location, or gaussian mean
  double scale = 1.0;  // gaussian only
};

struct ChainConfig {
  double beta = 1.0;
  double lambda = 0.01;
  std::int64_t n_steps = 0;
  int n_chains = 1;
  std::int64_t burn_in = -1;  // -1: default n_steps/2
  std::int64_t thin = 1;
  std::uint64_t seed = 0;  // 0 is rejected: seeds must be chosen deliberately
  InitLaw init;
  Scheme scheme = Scheme::stula;
  bool lambda_override = false;  // skip the stula stepsize guard (stress runs)
};

struct MomentPoint {
  double mean_sq;      // mean over live chains of |theta_n|^2
  double mean_fourth;  // and of |theta_n|^4
};

struct SampleBatch {
  int dim = 1;
  std::int64_t n_rows = 0;
  std::vector<double> samples;  // row-major n_rows x dim, post-burn-in draws
  std::vector<std::int64_t> rows_per_chain;  // samples are grouped by chain
  std::vector<MomentPoint> moment_trace;  // length n_steps + 1
  bool diverged = false;
  std::optional<std::int64_t> first_nonfinite_step;
  int n_chains_diverged = 0;

  std::span<const double> row(std::int64_t i) const {
    return {samples.data() + i * dim, static_cast<size_t>(dim)};
  }
};

namespace detail {

inline bool state_ok(std::span<const double> x) {
  double n2 = 0;
  for (double v : x) {
    if (!std::isfinite(v)) return false;
    n2 += v * v;
  }
  // 1e150 squared is still finite, so the norm guard is itself finite.
  return n2 <= 1e300;
}

}  // namespace detail

// Runs n_chains independent chains. Chain k draws from RngStream(seed, k),
// so its trajectory depends only on (seed, k): results are bit-identical no
// matter how chains would be scheduled. Moment traces are accumulated in
// fixed chunks of 16 chains combined in index order, which pins the floating
// point summation order for any execution plan.
inline SampleBatch run_chains(const PotentialSpec& p, const ChainConfig& cfg) {
  if (cfg.seed == 0)
    throw InvalidParameter("run_chains: seed 0 is reserved; pick a real seed");
  if (cfg.n_chains < 1) throw InvalidParameter("run_chains: n_chains >= 1");
  if (cfg.n_steps < 0) throw InvalidParameter("run_chains: n_steps >= 0");
  if (cfg.beta <= 0 || cfg.lambda <= 0)
    throw InvalidParameter("run_chains: beta and lambda must be positive");
  if (cfg.thin < 1) throw InvalidParameter("run_chains: thin >= 1");
  const std::int64_t burn = (cfg.burn_in < 0) ? cfg.n_steps / 2 : cfg.burn_in;
  if (burn > cfg.n_steps)
    throw InvalidParameter("run_chains: burn_in exceeds n_steps");
  if (cfg.init.kind == InitLaw::Kind::point &&
      static_cast<int>(cfg.init.center.size()) != p.dim)
    throw InvalidInput("run_chains: init point has wrong dimension");
  if (cfg.scheme == Scheme::stula && !cfg.lambda_override) {
    const double lmax = lambda_max(p);
    if (cfg.lambda > lmax)
      throw InvalidParameter("run_chains: lambda " + std::to_string(cfg.lambda) +
                             " exceeds lambda_max " + std::to_string(lmax) +
                             " (set lambda_override to force)");
  }

  const int d = p.dim;
  const std::int64_t N = cfg.n_steps;
  const double a = p.dissipativity ? p.dissipativity->a : 0.0;
  const double two_l = 2.0 * p.growth.l;
  const double sigma = std::sqrt(2.0 * cfg.lambda / cfg.beta);

  // Per-chain sample slots: step burn + k*thin for k = 0..S-1.
  const std::int64_t S = (N >= burn) ? (N - burn) / cfg.thin + 1 : 0;

  SampleBatch out;
  out.dim = d;
  out.moment_trace.assign(N + 1, MomentPoint{0, 0});
  std::vector<double> slot_rows(static_cast<size_t>(cfg.n_chains) * S * d);
  std::vector<char> slot_filled(static_cast<size_t>(cfg.n_chains) * S, 0);

  constexpr int kChunk = 16;
  std::vector<double> acc_sq(N + 1, 0.0), acc_4(N + 1, 0.0);
  std::vector<std::int64_t> acc_n(N + 1, 0);
  std::vector<double> chunk_sq(N + 1), chunk_4(N + 1);
  std::vector<std::int64_t> chunk_n(N + 1);

  std::int64_t first_bad = -1;
  int n_dead = 0;

  Vec state(d), noise(d), drift(d);
  for (int c0 = 0; c0 < cfg.n_chains; c0 += kChunk) {
    const int c1 = std::min(cfg.n_chains, c0 + kChunk);
    std::fill(chunk_sq.begin(), chunk_sq.end(), 0.0);
    std::fill(chunk_4.begin(), chunk_4.end(), 0.0);
    std::fill(chunk_n.begin(), chunk_n.end(), std::int64_t{0});

    for (int c = c0; c < c1; ++c) {
      RngStream rng(cfg.seed, static_cast<std::uint64_t>(c));
      if (cfg.init.kind == InitLaw::Kind::point) {
        for (int j = 0; j < d; ++j) state[j] = cfg.init.center[j];
      } else {
        for (int j = 0; j < d; ++j) {
          const double mean = (j < static_cast<int>(cfg.init.center.size()))
                                  ? cfg.init.center[j]
                                  : 0.0;
          state[j] = mean + cfg.init.scale * rng.next_gaussian();
        }
      }

      bool alive = detail::state_ok(state);
      if (!alive) {
        if (first_bad < 0 || 0 < first_bad) first_bad = 0;
        ++n_dead;
      }
      for (std::int64_t n = 0; n <= N && alive; ++n) {
        double n2 = 0;
        for (int j = 0; j < d; ++j) n2 += state[j] * state[j];
        chunk_sq[n] += n2;
        chunk_4[n] += n2 * n2;
        chunk_n[n] += 1;
        if (n >= burn && (n - burn) % cfg.thin == 0) {
          const std::int64_t k = (n - burn) / cfg.thin;
          const std::int64_t row = static_cast<std::int64_t>(c) * S + k;
          for (int j = 0; j < d; ++j) slot_rows[row * d + j] = state[j];
          slot_filled[row] = 1;
        }
        if (n == N) break;
        for (int j = 0; j < d; ++j) noise[j] = rng.next_gaussian();
        detail::drift_into(cfg.scheme, p, a, two_l, cfg.lambda, state, drift);
        for (int j = 0; j < d; ++j)
          state[j] += -cfg.lambda * drift[j] + sigma * noise[j];
        if (!detail::state_ok(state)) {
          // Freeze the chain: nothing from step n+1 on enters traces/samples.
          alive = false;
          ++n_dead;
          if (first_bad < 0 || n + 1 < first_bad) first_bad = n + 1;
        }
      }
    }

    for (std::int64_t n = 0; n <= N; ++n) {
      acc_sq[n] += chunk_sq[n];
      acc_4[n] += chunk_4[n];
      acc_n[n] += chunk_n[n];
    }
  }

  if (n_dead == cfg.n_chains)
    throw DivergenceError("run_chains: every chain diverged (first non-finite at step " +
                              std::to_string(first_bad) + ")",
                          first_bad);

  for (std::int64_t n = 0; n <= N; ++n) {
    const double cnt = static_cast<double>(acc_n[n]);
    out.moment_trace[n] =
        (acc_n[n] > 0)
            ? MomentPoint{acc_sq[n] / cnt, acc_4[n] / cnt}
            : MomentPoint{std::numeric_limits<double>::quiet_NaN(),
                          std::numeric_limits<double>::quiet_NaN()};
  }

  // Compact filled slots in (chain, slot) order.
  const std::int64_t total_slots = static_cast<std::int64_t>(cfg.n_chains) * S;
  std::int64_t rows = 0;
  for (std::int64_t i = 0; i < total_slots; ++i) rows += slot_filled[i];
  out.samples.resize(rows * d);
  out.rows_per_chain.assign(cfg.n_chains, 0);
  std::int64_t w = 0;
  for (std::int64_t i = 0; i < total_slots; ++i)
    if (slot_filled[i]) {
      for (int j = 0; j < d; ++j) out.samples[w * d + j] = slot_rows[i * d + j];
      ++out.rows_per_chain[i / S];
      ++w;
    }
  out.n_rows = rows;
  out.diverged = n_dead > 0;
  out.n_chains_diverged = n_dead;
  if (n_dead > 0) out.first_nonfinite_step = first_bad;
  return out;
}

}  // namespace stula
