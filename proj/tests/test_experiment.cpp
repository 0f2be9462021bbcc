#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "stula/experiment.hpp"
#include "stula/svg.hpp"

using namespace stula;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string first_line(const std::string& text) {
  const auto pos = text.find("\r\n");
  REQUIRE(pos != std::string::npos);
  return text.substr(0, pos);
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path d = fs::temp_directory_path() / ("stula_exp_" + leaf);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

nlohmann::json small_sample_config() {
  return nlohmann::json::parse(R"({
    "kind": "sample", "potential": "quadratic", "seed": 7,
    "beta": 1.0, "lambda": 0.005, "n_steps": 400, "n_chains": 8,
    "box_lo": [-8.0], "box_hi": [8.0], "n_cells": [256]
  })");
}

}  // namespace

TEST_CASE("csv writer and parser round-trip, including quoting") {
  csv::Writer w({"name", "value", "count", "flag"});
  w.row({std::string("plain"), 0.1, std::int64_t{3}, true});
  w.row({std::string("comma, inside"), -1.5e-300, std::int64_t{-2}, false});
  w.row({std::string("quote \" and\nnewline"), 1.0 / 3.0, std::int64_t{0}, true});

  const csv::Table t = csv::parse(w.str());
  REQUIRE(t.header == std::vector<std::string>{"name", "value", "count", "flag"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[1][0] == "comma, inside");
  CHECK(t.rows[2][0] == "quote \" and\nnewline");
  CHECK(t.rows[0][3] == "true");

  // 17 significant digits means doubles survive the trip bit-for-bit.
  const auto vals = t.numeric_column("value");
  CHECK(vals[0] == 0.1);
  CHECK(vals[1] == -1.5e-300);
  CHECK(vals[2] == 1.0 / 3.0);

  // A second serialization of the parsed table would need a writer; instead
  // confirm the raw text already uses CRLF and a mandatory header.
  CHECK(w.str().substr(0, 22) == "name,value,count,flag\r");
}

TEST_CASE("csv diagnostics name the problem") {
  CHECK_THROWS_AS(csv::parse(""), SchemaError);
  CHECK_THROWS_WITH(csv::parse("a,b\r\n1\r\n"), ContainsSubstring("header"));
  CHECK_THROWS_AS(csv::parse("a,b\r\n\"unterminated"), SchemaError);

  const csv::Table t = csv::parse("alpha,beta\r\n1,x\r\n");
  CHECK_THROWS_WITH(t.column("gamma"), ContainsSubstring("gamma"));
  CHECK_THROWS_WITH(t.numeric_column("beta"),
                    ContainsSubstring("row 1"));
  CHECK_THROWS_AS(csv::Writer({}), InvalidInput);
  csv::Writer w({"a", "b"});
  CHECK_THROWS_WITH(w.row({1.0}), ContainsSubstring("width"));
}

TEST_CASE("grid export carries positions, mass, and log density") {
  const PotentialSpec p = quadratic(1);
  const Vec lo{-8.0}, hi{8.0};
  const std::vector<int> cells{64};
  const GridDensity g = grid_reference(p, 1.0, lo, hi, cells);
  const csv::Writer w = grid_to_csv(g);
  const csv::Table t = csv::parse(w.str());
  REQUIRE(t.header == std::vector<std::string>{"i0", "x0", "mass", "log_density"});
  REQUIRE(t.rows.size() == 64);
  const auto mass = t.numeric_column("mass");
  double s = 0;
  for (double m : mass) s += m;
  CHECK(s == Approx(1.0).margin(1e-12));
  // log_density integrates the mass back: mass = exp(log_density) * cell size.
  const auto ld = t.numeric_column("log_density");
  CHECK(mass[32] == Approx(std::exp(ld[32]) * g.cell_volume()).epsilon(1e-12));
}

TEST_CASE("rate fit recovers a synthetic exponential decay") {
  std::vector<KlTracePoint> trace;
  const double lambda = 0.01;
  for (int i = 0; i <= 200; ++i) {
    const std::int64_t step = i * 50;
    const double t = step * lambda;
    trace.push_back({step, std::exp(-0.3 * t) + 0.01, 0.0});
  }
  const RateFit fit = kl_decay_rate_fit(trace, lambda);
  CHECK(fit.ok);
  CHECK(fit.rate == Approx(0.3).epsilon(0.05));
  CHECK(fit.plateau == Approx(0.01).epsilon(0.02));
  CHECK(fit.n_points >= 5);
}

TEST_CASE("rate fit flags traces it cannot use") {
  std::vector<KlTracePoint> flat;
  for (int i = 0; i < 50; ++i) flat.push_back({i * 10, 0.05, 0.0});
  const RateFit fit = kl_decay_rate_fit(flat, 0.01);
  CHECK_FALSE(fit.ok);
  CHECK(fit.n_points == 0);
  CHECK(std::isnan(fit.rate));
  CHECK(fit.plateau == Approx(0.05));

  CHECK_THROWS_AS(kl_decay_rate_fit(std::vector<KlTracePoint>{}, 0.01), InvalidInput);
  CHECK_THROWS_AS(kl_decay_rate_fit(flat, 0.0), InvalidParameter);

  // A rising trace has no decaying segment either.
  std::vector<KlTracePoint> rising;
  for (int i = 0; i < 50; ++i) rising.push_back({i * 10, 0.001 * (i + 1), 0.0});
  CHECK_FALSE(kl_decay_rate_fit(rising, 0.01).ok);
}

TEST_CASE("config validation rejects malformed or misapplied keys by name") {
  auto cfg = small_sample_config();

  auto expect_config_error = [](nlohmann::json j, const std::string& needle) {
    try {
      parse_experiment_config(j);
      FAIL("expected ConfigError for " + needle);
    } catch (const ConfigError& e) {
      CHECK_THAT(e.what(), ContainsSubstring(needle));
    }
  };

  {
    auto j = cfg;
    j["lamda"] = 0.1;
    expect_config_error(j, "lamda");
  }
  {
    auto j = cfg;
    j["seed"] = 0;
    expect_config_error(j, "seed");
  }
  {
    auto j = cfg;
    j.erase("seed");
    expect_config_error(j, "seed");
  }
  {
    auto j = cfg;
    j.erase("kind");
    expect_config_error(j, "kind");
  }
  {
    auto j = cfg;
    j["kind"] = "meditate";
    expect_config_error(j, "meditate");
  }
  {
    auto j = cfg;
    j["beta"] = "one";
    expect_config_error(j, "beta");
  }
  {
    auto j = cfg;
    j["lambdas"] = {0.1, 0.2};  // not a sample-kind key
    expect_config_error(j, "lambdas");
  }
  {
    auto j = cfg;
    j["n_cells"] = {64, 64, 64};
    expect_config_error(j, "n_cells");
  }
  {
    auto j = cfg;
    j["init_kind"] = "delta";
    expect_config_error(j, "init_kind");
  }
  {
    auto j = cfg;
    j["name"] = "bad name with spaces";
    expect_config_error(j, "name");
  }
  {
    nlohmann::json j = nlohmann::json::parse(R"({
      "kind": "lambda_sweep", "potential": "quadratic", "seed": 3,
      "beta": 1.0, "lambdas": [0.005], "n_steps": 100, "n_chains": 4
    })");
    expect_config_error(j, "lambdas");
  }
  expect_config_error(nlohmann::json::array(), "object");

  // Stepsizes above the scheme cap are refused at run time with the cap named.
  {
    nlohmann::json j = nlohmann::json::parse(R"({
      "kind": "lambda_sweep", "potential": "quadratic", "seed": 3,
      "beta": 1.0, "lambdas": [0.5, 0.25], "n_steps": 100, "n_chains": 4
    })");
    CHECK_THROWS_WITH(run_experiment(j, fresh_dir("lamcap").string()),
                      ContainsSubstring("lambda_max"));
  }
}

TEST_CASE("sample experiment is deterministic down to the file bytes") {
  const auto cfg = small_sample_config();
  const fs::path da = fresh_dir("det_a"), db = fresh_dir("det_b");
  const ResultRecord ra = run_experiment(cfg, da.string());
  const ResultRecord rb = run_experiment(cfg, db.string());

  REQUIRE(ra.outputs.size() == 1);
  const std::string csv_a = slurp(da / ra.outputs[0]);
  const std::string csv_b = slurp(db / rb.outputs[0]);
  CHECK(csv_a == csv_b);
  const std::string rec_a = slurp(da / "quadratic_metrics_result.json");
  const std::string rec_b = slurp(db / "quadratic_metrics_result.json");
  CHECK(rec_a == rec_b);

  // Wall clock stays in memory for display; the serialized record and hence
  // the hash-equality guarantee never see it.
  CHECK(ra.wall_clock_seconds > 0.0);
  CHECK(rec_a.find("wall_clock") == std::string::npos);

  CHECK(ra.config_hash.size() == 16);
  CHECK(ra.config_hash == rb.config_hash);
  auto other = cfg;
  other["seed"] = 8;
  const ResultRecord rc = run_experiment(other, fresh_dir("det_c").string());
  CHECK(rc.config_hash != ra.config_hash);

  // The record knows its moments and metrics.
  CHECK(ra.moments.present);
  CHECK(ra.moments.final_mean_sq > 0);
  CHECK(ra.moments.max_mean_sq >= ra.moments.final_mean_sq);
  REQUIRE(ra.metrics.size() == 4);  // tv, kl, w2, excess risk
  CHECK(ra.metrics[0].metric == "tv");
  CHECK(ra.metrics[1].metric == "kl");
  CHECK(ra.metrics[2].metric == "w2");
  CHECK(ra.metrics[3].metric == "excess_risk");
}

TEST_CASE("result record re-runs to identical outputs") {
  const auto cfg = small_sample_config();
  const fs::path da = fresh_dir("rt_a");
  run_experiment(cfg, da.string());

  const nlohmann::json rec = nlohmann::json::parse(slurp(da / "quadratic_metrics_result.json"));
  REQUIRE(rec.contains("config"));
  CHECK(rec.at("library_version").get<std::string>() == kLibraryVersion);
  CHECK(rec.at("kind").get<std::string>() == "sample");
  CHECK(rec.at("moments").is_object());

  const fs::path db = fresh_dir("rt_b");
  run_experiment(rec.at("config"), db.string());
  CHECK(slurp(da / "quadratic_metrics.csv") ==
        slurp(db / "quadratic_metrics.csv"));
}

TEST_CASE("metrics table uses the pinned header") {
  const fs::path d = fresh_dir("hdr_metrics");
  run_experiment(small_sample_config(), d.string());
  CHECK(first_line(slurp(d / "quadratic_metrics.csv")) ==
        "metric,value,estimator,n_samples_a,n_samples_b,grid_cells_0,"
        "grid_cells_1,empty_bins,out_of_box,n_projections");
}

TEST_CASE("lambda sweep reports a plateau, a rate, and a ratio per stepsize") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "lambda_sweep", "potential": "quadratic", "seed": 41,
    "beta": 1.0, "lambdas": [0.006, 0.003], "n_steps": 4000, "n_chains": 64,
    "init_kind": "point", "init_center": [3.0],
    "box_lo": [-8.0], "box_hi": [8.0], "n_cells": [128]
  })");
  const fs::path d = fresh_dir("lsweep");
  const ResultRecord rec = run_experiment(cfg, d.string());

  const std::string text = slurp(d / "quadratic_lambda_sweep.csv");
  CHECK(first_line(text) ==
        "lambda,n_steps,plateau_kl,plateau_tv,fitted_rate,fit_ok,plateaued,"
        "plateau_ratio_next");
  const csv::Table t = csv::parse(text);
  REQUIRE(t.rows.size() == 2);
  const auto lambdas = t.numeric_column("lambda");
  CHECK(lambdas[0] > lambdas[1]);  // sorted by decreasing stepsize

  const auto plateau = t.numeric_column("plateau_kl");
  CHECK(plateau[0] > 0);
  CHECK(plateau[1] > 0);
  const auto ratio = t.numeric_column("plateau_ratio_next");
  CHECK(ratio[0] == Approx(plateau[0] / plateau[1]));
  CHECK(std::isnan(ratio[1]));  // last row has no successor

  // Quadratic at these stepsizes settles well inside the starting budget.
  CHECK(t.rows[0][t.column("plateaued")] == "true");
  CHECK(t.rows[1][t.column("plateaued")] == "true");
  CHECK(rec.summary.at("n_flagged_rows").get<int>() == 0);
  const auto rates = t.numeric_column("fitted_rate");
  CHECK(rates[0] > 0);
  CHECK(rates[1] > 0);
}

TEST_CASE("lambda sweep flags a budget too small to settle") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "lambda_sweep", "potential": "quadratic", "seed": 42,
    "beta": 1.0, "lambdas": [0.006, 0.003], "n_steps": 8, "n_chains": 16,
    "box_lo": [-8.0], "box_hi": [8.0], "n_cells": [64], "max_doublings": 1
  })");
  const fs::path d = fresh_dir("lsweep_flag");
  const ResultRecord rec = run_experiment(cfg, d.string());
  CHECK(rec.summary.at("n_flagged_rows").get<int>() == 2);
  const csv::Table t =
      csv::parse(slurp(d / "quadratic_lambda_sweep.csv"));
  CHECK(t.rows[0][t.column("plateaued")] == "false");
  // The doubling still ran: 8 steps doubled once is 16.
  CHECK(t.numeric_column("n_steps")[0] == 16);
}

TEST_CASE("spectrum sweep writes one eigenvalue ladder per beta") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "spectrum_sweep", "potential": "quadratic", "seed": 5,
    "betas": [10.0, 1.0], "k": 2,
    "box_lo": [-10.0], "box_hi": [10.0], "n_cells": [256]
  })");
  const fs::path d = fresh_dir("spectrum");
  const ResultRecord rec = run_experiment(cfg, d.string());
  const std::string text = slurp(d / "quadratic_spectrum.csv");
  CHECK(first_line(text) == "beta,n_cells,gap,eig_0,eig_1,eig_2,converged");

  const csv::Table t = csv::parse(text);
  REQUIRE(t.rows.size() == 2);
  const auto betas = t.numeric_column("beta");
  CHECK(betas[0] == 1.0);  // ascending
  CHECK(betas[1] == 10.0);
  // The quadratic generator has unit gap at every temperature.
  for (double g : t.numeric_column("gap")) CHECK(g == Approx(1.0).margin(0.02));
  for (double e : t.numeric_column("eig_0")) CHECK(std::abs(e) < 1e-8);
  for (const auto& row : t.rows) CHECK(row[t.column("converged")] == "true");
  CHECK(rec.summary.at("n_unconverged").get<int>() == 0);
}

TEST_CASE("excess risk sweep reports between-chain error bars and a trend") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "excess_risk_vs_beta", "potential": "quadratic", "seed": 17,
    "betas": [1.0, 4.0], "lambda": 0.005, "n_steps": 4000, "n_chains": 32
  })");
  const fs::path d = fresh_dir("risk");
  const ResultRecord rec = run_experiment(cfg, d.string());
  const std::string text =
      slurp(d / "quadratic_excess_risk.csv");
  CHECK(first_line(text) == "beta,lambda,n_samples,excess_risk,std_error");

  const csv::Table t = csv::parse(text);
  REQUIRE(t.rows.size() == 2);
  const auto risk = t.numeric_column("excess_risk");
  const auto se = t.numeric_column("std_error");
  // Quadratic in one dimension: E[u] - u* = 1/(2 beta), up to stepsize bias.
  CHECK(risk[0] == Approx(0.5).epsilon(0.2));
  CHECK(risk[1] == Approx(0.125).epsilon(0.3));
  CHECK(se[0] > 0);
  CHECK(se[0] < risk[0]);
  // Risk falls with beta, so the largest signed rise is negative or noise.
  CHECK(rec.summary.at("trend_statistic").get<double>() <= 1.0);
  CHECK(rec.summary.at("monotone_within_noise").get<bool>());
}

TEST_CASE("beta sweep sampling reports tv and kl per temperature") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "beta_sweep_sampling", "potential": "quadratic", "seed": 19,
    "betas": [1.0, 2.0], "lambda": 0.005, "n_steps": 800, "n_chains": 16,
    "box_lo": [-8.0], "box_hi": [8.0], "n_cells": [128]
  })");
  const fs::path d = fresh_dir("bsweep");
  run_experiment(cfg, d.string());
  const std::string text =
      slurp(d / "quadratic_beta_sweep.csv");
  CHECK(first_line(text) == "beta,lambda,n_samples,tv,kl");
  const csv::Table t = csv::parse(text);
  REQUIRE(t.rows.size() == 2);
  for (double tv : t.numeric_column("tv")) {
    CHECK(tv >= 0.0);
    CHECK(tv < 0.5);
  }
  for (double kl : t.numeric_column("kl")) CHECK(kl >= 0.0);
}

TEST_CASE("validate reports drift laws for dissipative targets") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "validate", "potential": "double_well", "seed": 23
  })");
  const fs::path d = fresh_dir("val_dw");
  const ResultRecord rec = run_experiment(cfg, d.string());
  const std::string text = slurp(d / "double_well_validate.csv");
  CHECK(first_line(text) == "check,lambda,holds,worst_margin,n_tested");

  const csv::Table t = csv::parse(text);
  // 3 assumption suites + 3 drift laws at 3 stepsizes each.
  REQUIRE(t.rows.size() == 12);
  for (const auto& row : t.rows) CHECK(row[t.column("holds")] == "true");
  CHECK(rec.summary.at("all_hold").get<bool>());
  for (double m : t.numeric_column("worst_margin")) CHECK(m >= -1e-9);

  int n_taming = 0;
  for (const auto& row : t.rows)
    if (row[t.column("check")] == "taming_bound") ++n_taming;
  CHECK(n_taming == 3);
}

TEST_CASE("validate falls back to landscape structure without dissipativity") {
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "validate", "potential": "example1", "seed": 29
  })");
  const fs::path d = fresh_dir("val_ex1");
  const ResultRecord rec = run_experiment(cfg, d.string());
  CHECK(rec.summary.at("n_critical_points").get<int>() == 2);
  CHECK(rec.summary.at("l_star").get<double>() ==
        Approx(4.0 - 2.0 * std::sqrt(2.0)).margin(1e-6));
  CHECK(rec.summary.at("all_hold").get<bool>());

  const csv::Table t = csv::parse(slurp(d / "example1_validate.csv"));
  int n_saddle = 0, n_min = 0;
  for (const auto& row : t.rows) {
    if (row[t.column("check")] == "critical_saddle") ++n_saddle;
    if (row[t.column("check")] == "critical_minimum") ++n_min;
  }
  CHECK(n_saddle == 1);
  CHECK(n_min == 1);
}

TEST_CASE("output directory resolution prefers explicit over environment") {
  unsetenv("STULA_OUT_DIR");
  CHECK(resolve_out_dir() == ".");
  setenv("STULA_OUT_DIR", "/tmp/stula_env_dir", 1);
  CHECK(resolve_out_dir() == "/tmp/stula_env_dir");
  CHECK(resolve_out_dir("/tmp/explicit") == "/tmp/explicit");
  unsetenv("STULA_OUT_DIR");
}

TEST_CASE("config files that do not parse are refused with context") {
  CHECK_THROWS_AS(run_experiment_file("/nonexistent/cfg.json", "."),
                  InvalidInput);
  const fs::path d = fresh_dir("badjson");
  const fs::path bad = d / "bad.json";
  std::ofstream(bad) << "{ not json";
  CHECK_THROWS_AS(run_experiment_file(bad.string(), d.string()), ConfigError);
}

TEST_CASE("plots are deterministic and complain about missing columns") {
  const fs::path d = fresh_dir("plot");
  nlohmann::json cfg = nlohmann::json::parse(R"({
    "kind": "spectrum_sweep", "potential": "quadratic", "seed": 5,
    "betas": [1.0, 4.0], "k": 1, "box_lo": [-9.0], "box_hi": [9.0],
    "n_cells": [128]
  })");
  run_experiment(cfg, d.string());
  const csv::Table t =
      csv::load((d / "quadratic_spectrum.csv").string());

  const std::string svg1 = plot_csv(t, "spectrum");
  const std::string svg2 = plot_csv(t, "spectrum");
  CHECK(svg1 == svg2);
  CHECK_THAT(svg1, ContainsSubstring("<svg"));
  CHECK_THAT(svg1, ContainsSubstring("</svg>"));

  csv::Table missing;
  missing.header = {"beta"};
  missing.rows = {{"1.0"}};
  CHECK_THROWS_WITH(plot_csv(missing, "spectrum"), ContainsSubstring("gap"));

  csv::Table empty;
  empty.header = {"beta", "gap"};
  CHECK_THROWS_WITH(plot_csv(empty, "spectrum"), ContainsSubstring("no data"));

  CHECK_THROWS_AS(plot_csv(t, "sonogram"), InvalidParameter);

  // Log-scale axes refuse non-positive values instead of silently clipping.
  csv::Table zero;
  zero.header = {"beta", "gap"};
  zero.rows = {{"1.0", "0.0"}, {"2.0", "1.0"}};
  CHECK_THROWS_AS(plot_csv(zero, "spectrum"), InvalidInput);

  // Error-bar rendering path.
  csv::Table er;
  er.header = {"beta", "excess_risk", "std_error"};
  er.rows = {{"1", "0.5", "0.05"}, {"2", "0.25", "0.02"}, {"4", "0.12", "0.01"}};
  const std::string svg3 = plot_csv(er, "excess_risk");
  CHECK_THAT(svg3, ContainsSubstring("circle"));
}

TEST_CASE("trace runner matches the chain runner's per-chain streams") {
  // The same (seed, chain) pair must generate the same path in both runners:
  // one chain, no burn-in, compare the final state against the last sample.
  const PotentialSpec p = quadratic(1);
  ChainConfig cc;
  cc.beta = 1.0;
  cc.lambda = 0.005;
  cc.n_steps = 50;
  cc.n_chains = 1;
  cc.burn_in = 50;  // keep only the final state
  cc.seed = 99;
  cc.init = InitLaw{InitLaw::Kind::point, {1.0}, 1.0};
  const SampleBatch batch = run_chains(p, cc);
  REQUIRE(batch.n_rows == 1);

  const Vec lo{-8.0}, hi{8.0};
  const std::vector<int> cells{64};
  const GridDensity g = grid_reference(p, 1.0, lo, hi, cells);
  const KlTrace trace = detail::kl_trace_run(p, g, cc);
  CHECK(trace.final_mean_sq ==
        Approx(batch.samples[0] * batch.samples[0]).epsilon(1e-15));
  CHECK(trace.n_chains_diverged == 0);
  CHECK(trace.points.size() >= 2);
  CHECK(trace.n_pooled > 0);
}
