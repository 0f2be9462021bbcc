// Command-line front end. Three subcommands:
//
//   stula run <config.json> [--out-dir DIR]
//   stula validate <potential-id> [--seed N] [--out-dir DIR]
//   stula plot <results.csv> --kind <spectrum|lambda|excess_risk> -o <out.svg>
//
// Output directory resolution: --out-dir flag, then the STULA_OUT_DIR
// environment variable, then the current directory.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "stula/experiment.hpp"
#include "stula/svg.hpp"

namespace {

using namespace stula;
namespace fs = std::filesystem;

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void print_record(const ResultRecord& rec, const std::string& out_dir) {
  std::cout << "kind: " << rec.kind << "  (config hash " << rec.config_hash
            << ")\n";
  for (const auto& name : rec.outputs) {
    std::cout << "wrote " << (fs::path(out_dir) / name).string() << "\n";
    if (name.size() > 4 && name.ends_with(".csv")) {
      const std::string json_name =
          name.substr(0, name.size() - 4) + "_result.json";
      std::cout << "wrote " << (fs::path(out_dir) / json_name).string() << "\n";
    }
  }
  for (const auto& m : rec.metrics)
    std::cout << "  " << m.metric << " = " << short_num(m.value) << "  ("
              << m.estimator << ", n=" << m.n_samples_a << ")\n";
  if (rec.moments.present) {
    std::cout << "  final mean |x|^2 = " << short_num(rec.moments.final_mean_sq)
              << ", running max = " << short_num(rec.moments.max_mean_sq);
    if (rec.moments.n_chains_diverged > 0)
      std::cout << ", diverged chains: " << rec.moments.n_chains_diverged;
    std::cout << "\n";
  }
  if (!rec.summary.empty())
    std::cout << "summary: " << rec.summary.dump() << "\n";
  std::printf("wall clock: %.3f s\n", rec.wall_clock_seconds);
}

int cmd_run(const std::string& config_path, const std::string& out_dir_flag) {
  const std::string out_dir = resolve_out_dir(out_dir_flag);
  const ResultRecord rec = run_experiment_file(config_path, out_dir);
  print_record(rec, out_dir);
  return 0;
}

int cmd_validate(const std::string& potential, std::uint64_t seed,
                 const std::string& out_dir_flag) {
  const std::string out_dir = resolve_out_dir(out_dir_flag);
  const nlohmann::json cfg = {
      {"kind", "validate"}, {"potential", potential}, {"seed", seed}};
  const ResultRecord rec = run_experiment(cfg, out_dir);

  const csv::Table t =
      csv::load((fs::path(out_dir) / rec.outputs.at(0)).string());
  const int ci_check = t.column("check");
  const int ci_lambda = t.column("lambda");
  const int ci_holds = t.column("holds");
  const int ci_margin = t.column("worst_margin");
  const int ci_n = t.column("n_tested");

  std::printf("%-24s %-12s %-6s %-14s %s\n", "check", "lambda", "holds",
              "worst_margin", "n_tested");
  for (const auto& r : t.rows) {
    const double lam = std::stod(r[ci_lambda]);
    const std::string lam_str = lam > 0.0 ? short_num(lam) : "-";
    std::printf("%-24s %-12s %-6s %-14s %s\n", r[ci_check].c_str(),
                lam_str.c_str(), r[ci_holds].c_str(),
                short_num(std::stod(r[ci_margin])).c_str(), r[ci_n].c_str());
  }

  const bool all_hold = rec.summary.value("all_hold", false);
  if (rec.summary.contains("lambda_max"))
    std::cout << "lambda_max = "
              << short_num(rec.summary["lambda_max"].get<double>()) << "\n";
  if (rec.summary.contains("l_star"))
    std::cout << "l_star = " << short_num(rec.summary["l_star"].get<double>())
              << "\n";
  std::cout << "wrote " << (fs::path(out_dir) / rec.outputs.at(0)).string()
            << "\n";
  if (!all_hold) {
    std::cerr << "validate: one or more checks are violated (see rows above)\n";
    return 1;
  }
  std::cout << "all checks hold\n";
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& kind,
             const std::string& out_path) {
  const csv::Table t = csv::load(csv_path);
  const std::string image = plot_csv(t, kind);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw InvalidInput("plot: cannot open '" + out_path + "' for writing");
  out.write(image.data(), static_cast<std::streamsize>(image.size()));
  if (!out) throw InvalidInput("plot: write to '" + out_path + "' failed");
  std::cout << "wrote " << out_path << " (" << image.size() << " bytes)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Langevin sampling and optimization experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir_flag;
  auto* run = app.add_subcommand(
      "run", "Run an experiment described by a JSON config file");
  run->add_option("config", config_path, "path to the experiment config (JSON)")
      ->required();
  run->add_option("--out-dir", out_dir_flag,
                  "output directory (overrides STULA_OUT_DIR)");

  std::string potential;
  std::uint64_t seed = 1;
  std::string val_out_dir;
  auto* val = app.add_subcommand(
      "validate", "Check drift and regularity properties of a catalog potential");
  val->add_option("potential", potential,
                  "catalog id, e.g. double_well or quadratic")
      ->required();
  val->add_option("--seed", seed, "seed for the sampled point sets (default 1)");
  val->add_option("--out-dir", val_out_dir,
                  "output directory (overrides STULA_OUT_DIR)");

  std::string csv_path, plot_kind, plot_out;
  auto* plot =
      app.add_subcommand("plot", "Render a results CSV to an SVG chart");
  plot->add_option("csv", csv_path, "results CSV produced by run")->required();
  plot->add_option("--kind", plot_kind,
                   "chart type: spectrum, lambda, or excess_risk")
      ->required();
  plot->add_option("-o,--output", plot_out, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir_flag);
    if (val->parsed()) return cmd_validate(potential, seed, val_out_dir);
    return cmd_plot(csv_path, plot_kind, plot_out);
  } catch (const stula::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "hint: the chains blew up. Reduce lambda (run validate "
                 "<potential> to see lambda_max), shorten the first step by "
                 "starting nearer the well, or switch scheme to stula.\n";
    return 1;
  } catch (const stula::BoxTooSmall& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "hint: the reference box clips visible probability mass. "
                 "Widen box_lo/box_hi (or raise beta) until the density at "
                 "every edge is negligible.\n";
    return 1;
  } catch (const stula::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
