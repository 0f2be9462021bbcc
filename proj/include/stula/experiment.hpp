#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stula/chains.hpp"
#include "stula/critical.hpp"
#include "stula/csv.hpp"
#include "stula/metrics.hpp"
#include "stula/spectral.hpp"

namespace stula {

inline constexpr const char* kLibraryVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config

// Flat JSON experiment description. Every key is top-level, every value is a
// scalar or an array of numbers; anything unknown or misapplied is rejected
// by name so a typo cannot silently fall back to a default.
struct ExperimentConfig {
  nlohmann::json raw;

  std::string kind, potential, name;
  std::string scheme = "stula";
  std::string init_kind = "point";
  int dim = 1;
  double beta = 1.0, lambda = 0.0;
  double init_scale = 1.0;
  double radius = 3.0;
  std::vector<double> lambdas, betas, init_center, box_lo, box_hi;
  std::vector<int> n_cells;
  std::int64_t n_steps = 0, burn_in = -1, thin = 1, n_samples = 4096;
  int n_chains = 1, k = 6, n_projections = 64, max_doublings = 4;
  std::uint64_t seed = 0;
};

namespace detail {

enum class KeyType { str, pos_num, pos_int, nonneg_int, seed, num_array, int_array };

struct KeySpec {
  const char* key;
  KeyType type;
};

inline const std::vector<KeySpec>& config_key_table() {
  static const std::vector<KeySpec> t = {
      {"kind", KeyType::str},          {"potential", KeyType::str},
      {"name", KeyType::str},          {"scheme", KeyType::str},
      {"init_kind", KeyType::str},     {"dim", KeyType::pos_int},
      {"beta", KeyType::pos_num},      {"lambda", KeyType::pos_num},
      {"init_scale", KeyType::pos_num},{"radius", KeyType::pos_num},
      {"lambdas", KeyType::num_array}, {"betas", KeyType::num_array},
      {"init_center", KeyType::num_array},
      {"box_lo", KeyType::num_array},  {"box_hi", KeyType::num_array},
      {"n_cells", KeyType::int_array}, {"n_steps", KeyType::pos_int},
      {"burn_in", KeyType::nonneg_int},{"thin", KeyType::pos_int},
      {"n_samples", KeyType::pos_int}, {"n_chains", KeyType::pos_int},
      {"k", KeyType::pos_int},         {"n_projections", KeyType::pos_int},
      {"max_doublings", KeyType::nonneg_int},
      {"seed", KeyType::seed},
  };
  return t;
}

inline const KeySpec* find_key_spec(const std::string& key) {
  for (const auto& s : config_key_table())
    if (key == s.key) return &s;
  return nullptr;
}

// Keys each kind accepts beyond {kind, potential, name, seed, dim, scheme}.
inline std::vector<std::string> kind_keys(const std::string& kind) {
  if (kind == "sample")
    return {"beta", "lambda", "n_steps", "n_chains", "burn_in", "thin",
            "init_kind", "init_center", "init_scale", "box_lo", "box_hi",
            "n_cells", "n_projections"};
  if (kind == "lambda_sweep")
    return {"beta", "lambdas", "n_steps", "n_chains", "init_kind", "init_center",
            "init_scale", "box_lo", "box_hi", "n_cells", "max_doublings"};
  if (kind == "beta_sweep_sampling")
    return {"betas", "lambda", "n_steps", "n_chains", "burn_in", "thin",
            "init_kind", "init_center", "init_scale", "box_lo", "box_hi",
            "n_cells"};
  if (kind == "spectrum_sweep") return {"betas", "k", "box_lo", "box_hi", "n_cells"};
  if (kind == "excess_risk_vs_beta")
    return {"betas", "lambda", "n_steps", "n_chains", "burn_in", "thin",
            "init_kind", "init_center", "init_scale"};
  if (kind == "validate") return {"n_samples", "radius"};
  throw ConfigError("unknown experiment kind '" + kind +
                    "' (expected sample, lambda_sweep, beta_sweep_sampling, "
                    "spectrum_sweep, excess_risk_vs_beta, or validate)");
}

inline std::vector<std::string> kind_required(const std::string& kind) {
  if (kind == "sample") return {"beta", "lambda", "n_steps", "n_chains"};
  if (kind == "lambda_sweep") return {"beta", "lambdas", "n_steps", "n_chains"};
  if (kind == "beta_sweep_sampling") return {"betas", "lambda", "n_steps", "n_chains"};
  if (kind == "spectrum_sweep") return {"betas"};
  if (kind == "excess_risk_vs_beta") return {"betas", "lambda", "n_steps", "n_chains"};
  return {};
}

inline void check_value_type(const std::string& key, KeyType type,
                             const nlohmann::json& v) {
  auto fail = [&](const std::string& want) {
    throw ConfigError("config key '" + key + "' must be " + want);
  };
  switch (type) {
    case KeyType::str:
      if (!v.is_string() || v.get<std::string>().empty()) fail("a non-empty string");
      break;
    case KeyType::pos_num:
      if (!v.is_number() || !(v.get<double>() > 0)) fail("a positive number");
      break;
    case KeyType::pos_int:
      if (!v.is_number_integer() ||
          (v.is_number_unsigned() && v.get<std::uint64_t>() > (1ull << 62)) ||
          v.get<std::int64_t>() < 1)
        fail("a positive integer");
      break;
    case KeyType::nonneg_int:
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
        fail("a non-negative integer");
      break;
    case KeyType::seed: {
      bool ok = false;
      if (v.is_number_unsigned())
        ok = v.get<std::uint64_t>() >= 1;
      else if (v.is_number_integer())
        ok = v.get<std::int64_t>() >= 1;
      if (!ok)
        fail("a nonzero positive integer (seeds are chosen deliberately, 0 is "
             "reserved)");
      break;
    }
    case KeyType::num_array: {
      if (!v.is_array() || v.empty()) fail("a non-empty array of numbers");
      for (const auto& e : v)
        if (!e.is_number()) fail("a non-empty array of numbers");
      break;
    }
    case KeyType::int_array: {
      if (!v.is_array() || v.empty()) fail("a non-empty array of integers");
      for (const auto& e : v)
        if (!e.is_number_integer() || e.get<std::int64_t>() < 1)
          fail("a non-empty array of positive integers");
      break;
    }
  }
}

inline std::string default_run_name(const std::string& potential) {
  std::string n = potential;
  for (char& c : n)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      c = '_';
  return n;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("kind")) throw ConfigError("config is missing required key 'kind'");
  detail::check_value_type("kind", detail::KeyType::str, j.at("kind"));
  const std::string kind = j.at("kind").get<std::string>();

  std::vector<std::string> allowed = {"kind", "potential", "name",
                                      "seed", "dim",       "scheme"};
  for (auto& k : detail::kind_keys(kind)) allowed.push_back(k);

  for (const auto& [key, value] : j.items()) {
    const detail::KeySpec* spec = detail::find_key_spec(key);
    if (!spec) throw ConfigError("unknown config key '" + key + "'");
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("config key '" + key + "' does not apply to kind '" +
                        kind + "'");
    detail::check_value_type(key, spec->type, value);
  }
  for (const char* req : {"potential", "seed"})
    if (!j.contains(req))
      throw ConfigError(std::string("config is missing required key '") + req + "'");
  for (const auto& req : detail::kind_required(kind))
    if (!j.contains(req))
      throw ConfigError("kind '" + kind + "' requires config key '" + req + "'");

  ExperimentConfig c;
  c.raw = j;
  c.kind = kind;
  c.potential = j.at("potential").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  auto opt_str = [&](const char* k, std::string& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::string>();
  };
  auto opt_num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = j.at(k).get<double>();
  };
  auto opt_i64 = [&](const char* k, std::int64_t& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::int64_t>();
  };
  auto opt_int = [&](const char* k, int& dst) {
    if (j.contains(k)) {
      const std::int64_t v = j.at(k).get<std::int64_t>();
      if (v > std::numeric_limits<int>::max())
        throw ConfigError(std::string("config key '") + k + "' is too large");
      dst = static_cast<int>(v);
    }
  };
  auto opt_vec = [&](const char* k, std::vector<double>& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::vector<double>>();
  };
  opt_str("name", c.name);
  opt_str("scheme", c.scheme);
  opt_str("init_kind", c.init_kind);
  opt_int("dim", c.dim);
  opt_num("beta", c.beta);
  opt_num("lambda", c.lambda);
  opt_num("init_scale", c.init_scale);
  opt_num("radius", c.radius);
  opt_vec("lambdas", c.lambdas);
  opt_vec("betas", c.betas);
  opt_vec("init_center", c.init_center);
  opt_vec("box_lo", c.box_lo);
  opt_vec("box_hi", c.box_hi);
  if (j.contains("n_cells")) {
    for (const auto& e : j.at("n_cells")) {
      const std::int64_t v = e.get<std::int64_t>();
      if (v < 2 || v > 1 << 20)
        throw ConfigError("config key 'n_cells' entries must be in [2, 2^20]");
      c.n_cells.push_back(static_cast<int>(v));
    }
    if (c.n_cells.size() > 2)
      throw ConfigError("config key 'n_cells' takes at most two axes");
  }
  opt_i64("n_steps", c.n_steps);
  opt_i64("burn_in", c.burn_in);
  opt_i64("thin", c.thin);
  opt_i64("n_samples", c.n_samples);
  opt_int("n_chains", c.n_chains);
  opt_int("k", c.k);
  opt_int("n_projections", c.n_projections);
  opt_int("max_doublings", c.max_doublings);

  scheme_from_string(c.scheme);  // reject bad names early
  if (c.init_kind != "point" && c.init_kind != "gaussian")
    throw ConfigError("config key 'init_kind' must be 'point' or 'gaussian'");
  if (c.box_lo.size() != c.box_hi.size())
    throw ConfigError("config keys 'box_lo' and 'box_hi' must have equal length");
  for (const auto& arr : {&c.lambdas, &c.betas})
    for (double v : *arr)
      if (!(v > 0))
        throw ConfigError(arr == &c.lambdas
                              ? "config key 'lambdas' entries must be positive"
                              : "config key 'betas' entries must be positive");
  if (kind == "lambda_sweep" && c.lambdas.size() < 2)
    throw ConfigError("kind 'lambda_sweep' needs at least two entries in 'lambdas'");
  if (kind == "excess_risk_vs_beta" && c.betas.size() < 2)
    throw ConfigError("kind 'excess_risk_vs_beta' needs at least two entries in "
                      "'betas'");
  if (c.name.empty()) c.name = detail::default_run_name(c.potential);
  for (char ch : c.name)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-' &&
        ch != '.')
      throw ConfigError("config key 'name' may only use [A-Za-z0-9._-]");
  return c;
}

// ---------------------------------------------------------------------------
// Result record

struct MomentSummary {
  double final_mean_sq = std::numeric_limits<double>::quiet_NaN();
  double final_mean_fourth = std::numeric_limits<double>::quiet_NaN();
  double max_mean_sq = std::numeric_limits<double>::quiet_NaN();
  int n_chains_diverged = 0;
  bool present = false;
};

// Everything needed to interpret or repeat a run: the config is echoed in
// full, outputs are listed by basename, and metric reports carry their own
// sample counts and binning diagnostics. Wall-clock time is kept in memory
// for the CLI to print but never serialized, so identical runs produce
// identical files.
struct ResultRecord {
  std::string kind;
  nlohmann::json config;
  std::string config_hash;
  std::vector<std::string> outputs;
  std::vector<MetricReport> metrics;
  MomentSummary moments;
  nlohmann::json summary = nlohmann::json::object();
  double wall_clock_seconds = 0.0;
  std::string library_version = kLibraryVersion;
};

namespace detail {

inline std::string fnv1a64_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline nlohmann::json metric_to_json(const MetricReport& m) {
  return {{"metric", m.metric},
          {"value", m.value},
          {"estimator", m.estimator},
          {"n_samples_a", m.n_samples_a},
          {"n_samples_b", m.n_samples_b},
          {"grid_cells_0", m.grid_cells[0]},
          {"grid_cells_1", m.grid_cells[1]},
          {"empty_bins", m.empty_bins},
          {"out_of_box", m.out_of_box},
          {"n_projections", m.n_projections}};
}

}  // namespace detail

inline nlohmann::json record_to_json(const ResultRecord& r) {
  nlohmann::json j;
  j["library_version"] = r.library_version;
  j["kind"] = r.kind;
  j["config"] = r.config;
  j["config_hash"] = r.config_hash;
  j["outputs"] = r.outputs;
  auto metrics = nlohmann::json::array();
  for (const auto& m : r.metrics) metrics.push_back(detail::metric_to_json(m));
  j["metrics"] = metrics;
  if (r.moments.present) {
    j["moments"] = {{"final_mean_sq", r.moments.final_mean_sq},
                    {"final_mean_fourth", r.moments.final_mean_fourth},
                    {"max_mean_sq", r.moments.max_mean_sq},
                    {"n_chains_diverged", r.moments.n_chains_diverged}};
  } else {
    j["moments"] = nullptr;
  }
  j["summary"] = r.summary;
  return j;
}

// ---------------------------------------------------------------------------
// Instantaneous-distance traces

struct KlTracePoint {
  std::int64_t step = 0;
  double kl = 0.0, tv = 0.0;
};

struct KlTrace {
  std::vector<KlTracePoint> points;  // instantaneous, ~200 stride steps
  double pooled_kl = std::numeric_limits<double>::quiet_NaN();
  double pooled_tv = std::numeric_limits<double>::quiet_NaN();
  std::int64_t n_pooled = 0;  // (chain, step) pairs pooled for the plateau
  int n_chains_diverged = 0;
  double final_mean_sq = std::numeric_limits<double>::quiet_NaN();
  double final_mean_fourth = std::numeric_limits<double>::quiet_NaN();
  double max_mean_sq = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Runs n_chains in lockstep and measures the distance to the grid law as the
// ensemble evolves. Instantaneous KL/TV come from binning the live chains at
// ~200 geometrically spaced steps: dense early points resolve a decay that
// finishes within a small fraction of the budget (a uniform stride would step
// straight over it), while the wide late spacing decorrelates the snapshots
// that the plateau test compares. The reported plateau instead pools every
// state from the trailing quarter of the run, which shrinks the finite-sample
// KL floor of a single snapshot by orders of magnitude.
inline KlTrace kl_trace_run(const PotentialSpec& p, const GridDensity& g,
                            const ChainConfig& cfg) {
  if (cfg.seed == 0) throw InvalidParameter("kl_trace_run: seed 0 is reserved");
  if (cfg.n_chains < 1) throw InvalidParameter("kl_trace_run: n_chains >= 1");
  if (cfg.n_steps < 0) throw InvalidParameter("kl_trace_run: n_steps >= 0");
  if (cfg.beta <= 0 || cfg.lambda <= 0)
    throw InvalidParameter("kl_trace_run: beta and lambda must be positive");
  if (cfg.scheme == Scheme::stula && !cfg.lambda_override) {
    const double lmax = lambda_max(p);
    if (cfg.lambda > lmax)
      throw InvalidParameter("kl_trace_run: lambda " + std::to_string(cfg.lambda) +
                             " exceeds lambda_max " + std::to_string(lmax));
  }
  if (cfg.init.kind == InitLaw::Kind::point &&
      static_cast<int>(cfg.init.center.size()) != p.dim)
    throw InvalidInput("kl_trace_run: point init needs a center of length dim");

  const int d = p.dim;
  const int M = cfg.n_chains;
  const std::int64_t N = cfg.n_steps;
  const double a = p.dissipativity ? p.dissipativity->a : 0.0;
  const double two_l = 2.0 * p.growth.l;
  const double sigma = std::sqrt(2.0 * cfg.lambda / cfg.beta);
  const std::int64_t pool_start = N - std::max<std::int64_t>(1, N / 4);

  // Geometric ladder of snapshot steps: ~200 values of round(N^(k/200)),
  // deduplicated, always starting at 0 and ending at N. For N <= 200 this
  // degenerates to every step.
  std::vector<std::int64_t> trace_steps{0};
  if (N >= 1) {
    constexpr int kTraceBudget = 200;
    const double log_n = std::log(static_cast<double>(N));
    for (int k = 1; k <= kTraceBudget && trace_steps.back() < N; ++k) {
      auto v = static_cast<std::int64_t>(
          std::llround(std::exp(log_n * k / kTraceBudget)));
      v = std::clamp(v, trace_steps.back() + 1, N);
      trace_steps.push_back(v);
    }
    if (trace_steps.back() != N) trace_steps.push_back(N);
  }

  std::vector<RngStream> rng;
  rng.reserve(M);
  for (int c = 0; c < M; ++c) rng.emplace_back(cfg.seed, static_cast<std::uint64_t>(c));

  std::vector<double> states(static_cast<size_t>(M) * d);
  std::vector<char> alive(M, 1);
  int n_live = M;
  for (int c = 0; c < M; ++c) {
    std::span<double> x(states.data() + static_cast<size_t>(c) * d, d);
    if (cfg.init.kind == InitLaw::Kind::point) {
      for (int j = 0; j < d; ++j) x[j] = cfg.init.center[j];
    } else {
      for (int j = 0; j < d; ++j) {
        const double mean =
            (j < static_cast<int>(cfg.init.center.size())) ? cfg.init.center[j] : 0.0;
        x[j] = mean + cfg.init.scale * rng[c].next_gaussian();
      }
    }
    if (!state_ok(x)) {
      alive[c] = 0;
      --n_live;
    }
  }

  KlTrace out;
  std::vector<std::int64_t> pool_counts(g.cell_count(), 0);
  std::int64_t pool_total = 0, pool_out = 0;
  std::vector<double> live_rows;
  live_rows.reserve(static_cast<size_t>(M) * d);
  Vec noise(d), drift(d);
  double max_sq = -1.0, last_sq = std::numeric_limits<double>::quiet_NaN();
  double last_4 = std::numeric_limits<double>::quiet_NaN();
  size_t next_trace = 0;

  for (std::int64_t n = 0; n <= N; ++n) {
    if (n_live == 0)
      throw DivergenceError("kl_trace_run: every chain diverged by step " +
                                std::to_string(n),
                            n);
    double sum_sq = 0, sum_4 = 0;
    for (int c = 0; c < M; ++c) {
      if (!alive[c]) continue;
      std::span<const double> x(states.data() + static_cast<size_t>(c) * d, d);
      double n2 = 0;
      for (int j = 0; j < d; ++j) n2 += x[j] * x[j];
      sum_sq += n2;
      sum_4 += n2 * n2;
      if (n > pool_start) {
        const std::int64_t idx = cell_index(g, x);
        if (idx >= 0)
          ++pool_counts[idx];
        else
          ++pool_out;
        ++pool_total;
      }
    }
    last_sq = sum_sq / n_live;
    last_4 = sum_4 / n_live;
    max_sq = std::max(max_sq, last_sq);

    if (next_trace < trace_steps.size() && n == trace_steps[next_trace]) {
      ++next_trace;
      live_rows.clear();
      for (int c = 0; c < M; ++c) {
        if (!alive[c]) continue;
        for (int j = 0; j < d; ++j)
          live_rows.push_back(states[static_cast<size_t>(c) * d + j]);
      }
      const Histogram h = bin_on_grid(g, live_rows, n_live);
      out.points.push_back(
          {n, kl_divergence(h, g).value, tv_distance(h, g).value});
    }
    if (n == N) break;

    for (int c = 0; c < M; ++c) {
      if (!alive[c]) continue;
      std::span<double> x(states.data() + static_cast<size_t>(c) * d, d);
      for (int j = 0; j < d; ++j) noise[j] = rng[c].next_gaussian();
      drift_into(cfg.scheme, p, a, two_l, cfg.lambda, x, drift);
      for (int j = 0; j < d; ++j) x[j] += -cfg.lambda * drift[j] + sigma * noise[j];
      if (!state_ok(x)) {
        alive[c] = 0;
        --n_live;
      }
    }
  }

  out.n_chains_diverged = M - n_live;
  out.final_mean_sq = last_sq;
  out.final_mean_fourth = last_4;
  out.max_mean_sq = max_sq;
  out.n_pooled = pool_total;
  if (pool_total > 0) {
    Histogram h;
    h.dim = g.dim;
    h.lo = g.lo;
    h.hi = g.hi;
    h.n = g.n;
    h.n_samples = pool_total;
    h.out_of_box = pool_out;
    h.mass.resize(pool_counts.size());
    for (size_t i = 0; i < pool_counts.size(); ++i)
      h.mass[i] = static_cast<double>(pool_counts[i]) / pool_total;
    out.pooled_kl = kl_divergence(h, g).value;
    out.pooled_tv = tv_distance(h, g).value;
  }
  return out;
}

// Trailing 10% of the trace vs the 10% before it: relative change under 10%
// counts as settled. Short traces (under 20 points) never qualify.
inline bool trace_plateaued(const std::vector<KlTracePoint>& pts) {
  const std::int64_t n = static_cast<std::int64_t>(pts.size());
  const std::int64_t w = std::max<std::int64_t>(1, n / 10);
  if (n < 2 * w || n < 20) return false;
  double tail = 0, prev = 0;
  for (std::int64_t i = n - w; i < n; ++i) tail += pts[i].kl;
  for (std::int64_t i = n - 2 * w; i < n - w; ++i) prev += pts[i].kl;
  tail /= w;
  prev /= w;
  const double scale = std::max(tail, 1e-300);
  return std::abs(tail - prev) / scale < 0.10;
}

}  // namespace detail

struct RateFit {
  double rate = std::numeric_limits<double>::quiet_NaN();
  double plateau = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  int n_points = 0;  // trace entries the slope was fitted on
};

// Exponential-decay rate of a KL trace. The trailing tenth of the trace
// estimates the plateau (the finite-sample floor plus discretization bias);
// entries at least three times that level form the decaying segment, and the
// rate is the least-squares slope of log(KL - plateau) against elapsed time
// n * lambda. Fewer than three qualifying entries, or a non-positive fitted
// rate, mark the fit as failed rather than guessing.
inline RateFit kl_decay_rate_fit(std::span<const KlTracePoint> trace, double lambda) {
  if (lambda <= 0) throw InvalidParameter("kl_decay_rate_fit: lambda must be positive");
  if (trace.empty()) throw InvalidInput("kl_decay_rate_fit: empty trace");
  RateFit fit;
  const std::int64_t n = static_cast<std::int64_t>(trace.size());
  const std::int64_t w = std::max<std::int64_t>(1, n / 10);
  double plateau = 0;
  for (std::int64_t i = n - w; i < n; ++i) plateau += trace[i].kl;
  plateau /= w;
  fit.plateau = plateau;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& pt : trace) {
    const double excess = pt.kl - plateau;
    if (!(pt.kl >= 3.0 * plateau) || !(excess > 0)) continue;
    const double x = static_cast<double>(pt.step) * lambda;
    const double y = std::log(excess);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  fit.n_points = m;
  if (m < 3) return fit;
  const double denom = m * sxx - sx * sx;
  if (!(std::abs(denom) > 0)) return fit;
  const double slope = (m * sxy - sx * sy) / denom;
  fit.rate = -slope;
  fit.ok = std::isfinite(fit.rate) && fit.rate > 0;
  return fit;
}

// ---------------------------------------------------------------------------
// Shared runner plumbing

namespace detail {

inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t salt) {
  const std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return s ? s : 0x9e3779b97f4a7c15ull;
}

inline PotentialSpec config_potential(const ExperimentConfig& c) {
  return make_potential(c.potential, c.dim);
}

inline ChainConfig chain_config(const ExperimentConfig& c, const PotentialSpec& p) {
  ChainConfig cc;
  cc.beta = c.beta;
  cc.lambda = c.lambda;
  cc.n_steps = c.n_steps;
  cc.n_chains = c.n_chains;
  cc.burn_in = c.burn_in;
  cc.thin = c.thin;
  cc.seed = c.seed;
  cc.scheme = scheme_from_string(c.scheme);
  cc.init.kind = (c.init_kind == "point") ? InitLaw::Kind::point
                                          : InitLaw::Kind::gaussian;
  cc.init.center = c.init_center.empty() ? Vec(p.dim, 0.0) : c.init_center;
  cc.init.scale = c.init_scale;
  return cc;
}

// Box for grid references: explicit config values win, otherwise expand from
// the known minimum until the tails are negligible at the smallest beta used.
inline void resolve_box(const ExperimentConfig& c, const PotentialSpec& p,
                        double beta_min, Vec& lo, Vec& hi) {
  if (!c.box_lo.empty()) {
    if (static_cast<int>(c.box_lo.size()) != p.dim)
      throw ConfigError("config keys 'box_lo'/'box_hi' must match the potential "
                        "dimension");
    lo = c.box_lo;
    hi = c.box_hi;
    return;
  }
  const auto box = suggest_box(p, beta_min);
  lo = box[0];
  hi = box[1];
}

inline std::vector<int> resolve_cells(const ExperimentConfig& c, int dim,
                                      int default_1d, int default_2d) {
  if (!c.n_cells.empty()) {
    if (static_cast<int>(c.n_cells.size()) != dim)
      throw ConfigError("config key 'n_cells' must match the potential dimension");
    return c.n_cells;
  }
  if (dim == 1) return {default_1d};
  return std::vector<int>(dim, default_2d);
}

inline void fill_moments(MomentSummary& m, const SampleBatch& b) {
  m.present = true;
  m.n_chains_diverged = b.n_chains_diverged;
  if (!b.moment_trace.empty()) {
    m.final_mean_sq = b.moment_trace.back().mean_sq;
    m.final_mean_fourth = b.moment_trace.back().mean_fourth;
    double mx = -1;
    for (const auto& pt : b.moment_trace)
      if (std::isfinite(pt.mean_sq)) mx = std::max(mx, pt.mean_sq);
    m.max_mean_sq = mx;
  }
}

inline std::vector<csv::Field> metric_row(const MetricReport& m) {
  return {m.metric,
          m.value,
          m.estimator,
          m.n_samples_a,
          m.n_samples_b,
          static_cast<std::int64_t>(m.grid_cells[0]),
          static_cast<std::int64_t>(m.grid_cells[1]),
          m.empty_bins,
          m.out_of_box,
          static_cast<std::int64_t>(m.n_projections)};
}

inline const std::vector<std::string>& metrics_csv_header() {
  static const std::vector<std::string> h = {
      "metric",      "value",        "estimator", "n_samples_a",
      "n_samples_b", "grid_cells_0", "grid_cells_1", "empty_bins",
      "out_of_box",  "n_projections"};
  return h;
}

// ---------------------------------------------------------------------------
// Kind runners. Each returns the data table and fills the record in place.

inline csv::Writer run_sample(const ExperimentConfig& c, ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  const SampleBatch batch = run_chains(p, chain_config(c, p));
  fill_moments(rec.moments, batch);

  if (p.dim <= 2) {
    Vec lo, hi;
    resolve_box(c, p, c.beta, lo, hi);
    const std::vector<int> cells = resolve_cells(c, p.dim, 2048, 128);
    const GridDensity g = grid_reference(p, c.beta, lo, hi, cells);
    const Histogram h = bin_on_grid(g, batch.samples, batch.n_rows);
    rec.metrics.push_back(tv_distance(h, g));
    rec.metrics.push_back(kl_divergence(h, g));
    if (p.dim == 1) {
      rec.metrics.push_back(w2_1d(batch.samples, g));
    } else {
      const std::vector<double> ref = sample_from_grid(
          g, batch.n_rows, derived_seed(c.seed, 1));
      rec.metrics.push_back(sliced_w2(batch.samples, ref, p.dim,
                                      c.n_projections, derived_seed(c.seed, 2)));
    }
  }
  if (p.known_minimum)
    rec.metrics.push_back(excess_risk(batch.samples, batch.n_rows, p));
  if (rec.metrics.empty())
    throw InvalidInput("sample: potential '" + p.id +
                       "' supports no distance metrics (dim > 2) and declares no "
                       "known minimum");

  csv::Writer w(metrics_csv_header());
  for (const auto& m : rec.metrics) w.row(metric_row(m));
  rec.summary["n_rows"] = batch.n_rows;
  rec.summary["diverged"] = batch.diverged;
  return w;
}

inline csv::Writer run_lambda_sweep(const ExperimentConfig& c, ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  const double lmax = lambda_max(p);
  std::vector<double> lams = c.lambdas;
  std::sort(lams.begin(), lams.end(), std::greater<>());
  for (double l : lams)
    if (l > lmax)
      throw ConfigError("lambda_sweep: stepsize " + std::to_string(l) +
                        " exceeds lambda_max " + std::to_string(lmax) +
                        " for potential '" + p.id + "'");

  Vec lo, hi;
  resolve_box(c, p, c.beta, lo, hi);
  const std::vector<int> cells = resolve_cells(c, p.dim, 128, 64);
  const GridDensity g = grid_reference(p, c.beta, lo, hi, cells);

  struct Row {
    double lambda;
    std::int64_t n_steps;
    double plateau_kl, plateau_tv, rate;
    bool fit_ok, plateaued;
  };
  std::vector<Row> rows;
  rec.moments.present = true;
  rec.moments.max_mean_sq = -1;
  int n_flagged = 0;

  for (double lam : lams) {
    ChainConfig cc = chain_config(c, p);
    cc.lambda = lam;
    std::int64_t n = c.n_steps;
    KlTrace trace;
    RateFit fit;
    bool settled = false;
    for (int attempt = 0; attempt <= c.max_doublings; ++attempt) {
      cc.n_steps = n;
      trace = kl_trace_run(p, g, cc);
      fit = kl_decay_rate_fit(trace.points, lam);
      const bool flat = trace_plateaued(trace.points);
      const bool long_enough = fit.ok && n >= 5.0 / (lam * fit.rate);
      if (flat && long_enough) {
        settled = true;
        break;
      }
      n *= 2;
    }
    if (!settled) ++n_flagged;
    rows.push_back({lam, cc.n_steps, trace.pooled_kl, trace.pooled_tv, fit.rate,
                    fit.ok, settled});
    rec.moments.n_chains_diverged += trace.n_chains_diverged;
    rec.moments.final_mean_sq = trace.final_mean_sq;
    rec.moments.final_mean_fourth = trace.final_mean_fourth;
    rec.moments.max_mean_sq = std::max(rec.moments.max_mean_sq, trace.max_mean_sq);
  }

  csv::Writer w({"lambda", "n_steps", "plateau_kl", "plateau_tv", "fitted_rate",
                 "fit_ok", "plateaued", "plateau_ratio_next"});
  for (size_t i = 0; i < rows.size(); ++i) {
    const double ratio = (i + 1 < rows.size())
                             ? rows[i].plateau_kl / rows[i + 1].plateau_kl
                             : std::numeric_limits<double>::quiet_NaN();
    w.row({rows[i].lambda, rows[i].n_steps, rows[i].plateau_kl, rows[i].plateau_tv,
           rows[i].rate, rows[i].fit_ok, rows[i].plateaued, ratio});
  }
  rec.summary["lambda_max"] = lmax;
  rec.summary["n_flagged_rows"] = n_flagged;
  return w;
}

inline csv::Writer run_beta_sweep_sampling(const ExperimentConfig& c,
                                           ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  if (p.dim > 2)
    throw InvalidParameter("beta_sweep_sampling: grid references need dim <= 2");
  csv::Writer w({"beta", "lambda", "n_samples", "tv", "kl"});
  rec.moments.present = true;
  rec.moments.max_mean_sq = -1;
  std::vector<double> betas = c.betas;
  std::sort(betas.begin(), betas.end());
  for (double beta : betas) {
    ChainConfig cc = chain_config(c, p);
    cc.beta = beta;
    const SampleBatch batch = run_chains(p, cc);
    Vec lo, hi;
    resolve_box(c, p, beta, lo, hi);
    const GridDensity g =
        grid_reference(p, beta, lo, hi, resolve_cells(c, p.dim, 2048, 128));
    const Histogram h = bin_on_grid(g, batch.samples, batch.n_rows);
    const MetricReport tv = tv_distance(h, g);
    const MetricReport kl = kl_divergence(h, g);
    rec.metrics.push_back(tv);
    rec.metrics.push_back(kl);
    w.row({beta, c.lambda, batch.n_rows, tv.value, kl.value});
    rec.moments.n_chains_diverged += batch.n_chains_diverged;
    MomentSummary m;
    fill_moments(m, batch);
    rec.moments.final_mean_sq = m.final_mean_sq;
    rec.moments.final_mean_fourth = m.final_mean_fourth;
    rec.moments.max_mean_sq = std::max(rec.moments.max_mean_sq, m.max_mean_sq);
  }
  return w;
}

inline csv::Writer run_spectrum_sweep(const ExperimentConfig& c, ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  if (p.dim > 2)
    throw InvalidParameter("spectrum_sweep: generator grids need dim <= 2");
  std::vector<double> betas = c.betas;
  std::sort(betas.begin(), betas.end());
  Vec lo, hi;
  resolve_box(c, p, betas.front(), lo, hi);
  const std::vector<int> cells = resolve_cells(c, p.dim, 2048, 128);

  std::vector<std::string> header = {"beta", "n_cells", "gap"};
  for (int i = 0; i <= c.k; ++i) header.push_back("eig_" + std::to_string(i));
  header.push_back("converged");
  csv::Writer w(header);

  int n_unconverged = 0;
  for (double beta : betas) {
    const GeneratorOperator op = discretize_generator(p, beta, lo, hi, cells);
    const SpectrumResult r = spectral_gap(op, c.k);
    std::vector<csv::Field> row = {beta, static_cast<std::int64_t>(op.size()),
                                   r.gap};
    for (double e : r.eigenvalues) row.emplace_back(e);
    row.emplace_back(r.converged);
    w.row(row);
    if (!r.converged) ++n_unconverged;
  }
  rec.summary["k"] = c.k;
  rec.summary["box_lo"] = lo;
  rec.summary["box_hi"] = hi;
  rec.summary["n_unconverged"] = n_unconverged;
  return w;
}

inline csv::Writer run_excess_risk_vs_beta(const ExperimentConfig& c,
                                           ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  if (!p.known_minimum)
    throw MissingMetadata("excess_risk_vs_beta: potential '" + p.id +
                          "' declares no known minimum");
  std::vector<double> betas = c.betas;
  std::sort(betas.begin(), betas.end());
  csv::Writer w({"beta", "lambda", "n_samples", "excess_risk", "std_error"});
  rec.moments.present = true;
  rec.moments.max_mean_sq = -1;

  std::vector<double> risks, ses;
  for (double beta : betas) {
    ChainConfig cc = chain_config(c, p);
    cc.beta = beta;
    const SampleBatch batch = run_chains(p, cc);
    // Between-chain spread: each chain contributes one mean, so the standard
    // error is honest about autocorrelation within a chain.
    std::vector<double> chain_means;
    std::int64_t row0 = 0;
    for (std::int64_t rc : batch.rows_per_chain) {
      if (rc > 0) {
        double s = 0;
        for (std::int64_t r = row0; r < row0 + rc; ++r) s += p.u(batch.row(r));
        chain_means.push_back(s / rc);
      }
      row0 += rc;
    }
    const double m = static_cast<double>(chain_means.size());
    double mean = 0;
    for (double v : chain_means) mean += v;
    mean /= m;
    double var = 0;
    for (double v : chain_means) var += (v - mean) * (v - mean);
    const double se = (m > 1) ? std::sqrt(var / (m - 1) / m)
                              : std::numeric_limits<double>::quiet_NaN();
    const double risk = mean - p.known_minimum->value;
    risks.push_back(risk);
    ses.push_back(se);
    w.row({beta, c.lambda, batch.n_rows, risk, se});

    MetricReport mr;
    mr.metric = "excess_risk";
    mr.value = risk;
    mr.estimator = "chain_mean_beta_" + csv::fmt_double(beta);
    mr.n_samples_a = batch.n_rows;
    rec.metrics.push_back(mr);
    rec.moments.n_chains_diverged += batch.n_chains_diverged;
    MomentSummary ms;
    fill_moments(ms, batch);
    rec.moments.final_mean_sq = ms.final_mean_sq;
    rec.moments.final_mean_fourth = ms.final_mean_fourth;
    rec.moments.max_mean_sq = std::max(rec.moments.max_mean_sq, ms.max_mean_sq);
  }

  // Largest rise between consecutive betas in units of its own standard
  // error. Values around 1 are noise; a decisively non-monotone profile
  // scores much higher.
  double trend = 0;
  for (size_t i = 0; i + 1 < risks.size(); ++i) {
    const double denom = std::sqrt(ses[i] * ses[i] + ses[i + 1] * ses[i + 1]);
    if (denom > 0)
      trend = std::max(trend, (risks[i + 1] - risks[i]) / denom);
  }
  rec.summary["trend_statistic"] = trend;
  rec.summary["monotone_within_noise"] = trend <= 1.0;
  return w;
}

inline void validate_row(csv::Writer& w, ResultRecord& rec, const std::string& check,
                         double lambda, bool holds, double margin,
                         std::int64_t n_tested) {
  w.row({check, lambda, holds, margin, n_tested});
  if (!holds) rec.summary["all_hold"] = false;
}

inline csv::Writer run_validate(const ExperimentConfig& c, ResultRecord& rec) {
  const PotentialSpec p = config_potential(c);
  csv::Writer w({"check", "lambda", "holds", "worst_margin", "n_tested"});
  rec.summary["all_hold"] = true;

  if (p.dissipativity) {
    const auto d = verify_dissipativity(p, c.n_samples, c.radius, c.seed);
    validate_row(w, rec, "dissipativity", 0.0, d.holds, d.worst_margin, d.n_tested);
    const auto gr = verify_growth(p, c.n_samples, c.radius, c.seed);
    validate_row(w, rec, "gradient_growth", 0.0, gr.holds, gr.worst_margin,
                 gr.n_tested);
    const auto li = verify_local_lipschitz(p, c.n_samples, c.radius, c.seed);
    validate_row(w, rec, "local_lipschitz", 0.0, li.holds, li.worst_margin,
                 li.n_tested);
    const double lmax = lambda_max(p);
    for (double lam : {lmax, lmax / 10.0, lmax / 100.0}) {
      const auto tb = check_taming_bound(p, lam, c.n_samples, c.radius, c.seed);
      validate_row(w, rec, "taming_bound", lam, tb.holds, tb.worst_margin,
                   tb.n_tested);
      const auto hd = check_half_dissipativity(p, lam, c.n_samples, c.radius, c.seed);
      validate_row(w, rec, "half_dissipativity", lam, hd.holds, hd.worst_margin,
                   hd.n_tested);
      const auto lg = check_linear_growth(p, lam, c.n_samples, c.radius, c.seed);
      validate_row(w, rec, "linear_growth", lam, lg.holds, lg.worst_margin,
                   lg.n_tested);
    }
    rec.summary["lambda_max"] = lmax;
  } else {
    // Analysis-only landscapes: report the critical-point structure instead
    // of sampling bounds that need a dissipativity pair.
    Vec lo(p.dim, -8.0), hi(p.dim, 8.0);
    const std::vector<int> seeds(p.dim, 17);
    SearchDiagnostics diag;
    const auto pts = find_critical_points(p, lo, hi, seeds, 1e-10, 1e-6, &diag);
    for (const auto& cp : pts)
      validate_row(w, rec, std::string("critical_") + to_string(cp.classification),
                   0.0, cp.classification != CriticalKind::degenerate,
                   cp.morse_margin, 1);
    const auto morse = morse_report(p, pts);
    validate_row(w, rec, "morse_nondegenerate", 0.0, morse.pass, morse.l_star,
                 static_cast<std::int64_t>(pts.size()));
    const auto curv = check_C_assumptions(p, c.n_samples, c.radius, c.seed);
    validate_row(w, rec, "curvature_K", 0.0, true, curv.K_estimate, curv.n_tested);
    validate_row(w, rec, "curvature_C_prime", 0.0, true, curv.C_prime_estimate,
                 curv.n_tested);
    validate_row(w, rec, "hessian_floor_c_H", 0.0, true, curv.c_H, curv.n_tested);
    rec.summary["n_critical_points"] = pts.size();
    rec.summary["l_star"] = morse.l_star;
  }
  return w;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry points

inline std::string resolve_out_dir(const std::string& cli_override = "") {
  if (!cli_override.empty()) return cli_override;
  if (const char* env = std::getenv("STULA_OUT_DIR"); env && *env) return env;
  return ".";
}

inline const char* table_suffix(const std::string& kind) {
  if (kind == "sample") return "metrics";
  if (kind == "lambda_sweep") return "lambda_sweep";
  if (kind == "beta_sweep_sampling") return "beta_sweep";
  if (kind == "spectrum_sweep") return "spectrum";
  if (kind == "excess_risk_vs_beta") return "excess_risk";
  return "validate";
}

// Runs one experiment and writes <name>_<table>.csv plus
// <name>_<table>_result.json into out_dir. The table suffix is fixed per
// kind, so runs of different kinds on the same target never collide; repeat
// runs of the same kind overwrite unless the config sets a distinct name.
// The returned record mirrors what was written, with the wall-clock time
// filled in for display.
inline ResultRecord run_experiment(const nlohmann::json& config_json,
                                   const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = parse_experiment_config(config_json);

  ResultRecord rec;
  rec.kind = c.kind;
  rec.config = c.raw;
  rec.config_hash = detail::fnv1a64_hex(c.raw.dump());

  csv::Writer table = [&] {
    if (c.kind == "sample") return detail::run_sample(c, rec);
    if (c.kind == "lambda_sweep") return detail::run_lambda_sweep(c, rec);
    if (c.kind == "beta_sweep_sampling")
      return detail::run_beta_sweep_sampling(c, rec);
    if (c.kind == "spectrum_sweep") return detail::run_spectrum_sweep(c, rec);
    if (c.kind == "excess_risk_vs_beta")
      return detail::run_excess_risk_vs_beta(c, rec);
    return detail::run_validate(c, rec);
  }();

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string base = c.name + "_" + table_suffix(c.kind);
  const std::string csv_name = base + ".csv";
  const std::string json_name = base + "_result.json";
  rec.outputs = {csv_name};
  table.save((fs::path(out_dir) / csv_name).string());

  std::ofstream out(fs::path(out_dir) / json_name, std::ios::binary);
  if (!out)
    throw InvalidInput("run_experiment: cannot write '" + json_name + "'");
  out << record_to_json(rec).dump(2) << "\n";

  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

inline ResultRecord run_experiment_file(const std::string& config_path,
                                        const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in)
    throw InvalidInput("run: cannot open config file '" + config_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + config_path + "' is not valid JSON: " +
                      e.what());
  }
  return run_experiment(j, out_dir);
}

}  // namespace stula
