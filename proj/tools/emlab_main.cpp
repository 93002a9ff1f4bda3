// Command-line front end for the experiment harness.
//
// Subcommands:
//   run <config-file>   execute a key-value experiment config
//   canned <name>       execute a canned experiment from the built-in catalogue
//   list                list the canned experiments
//   validate <file>     parse and validate a config, print its fingerprint
//   report <dir>        summarize the result CSVs found in a directory
//
// Exit codes: 0 success, 2 validation failure, 3 budget exceeded,
// 4 acceptance-band miss (canned runs with --assert).

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emlab/experiments.hpp"

namespace {

void print_record(const emlab::ResultRecord& rec) {
  std::cout << "experiment " << rec.name << " (" << emlab::to_string(rec.kind)
            << ")\n";
  std::cout << "  fingerprint " << rec.fingerprint << "  version "
            << rec.version << "  seed " << rec.seed << "\n";
  if (!rec.claim.empty()) std::cout << "  claim: " << rec.claim << "\n";
  std::cout << "  level        n             error      batch_stderr\n";
  for (const emlab::ResultRow& r : rec.rows) {
    std::printf("  %5d  %10llu  %16.8g  %12.4g\n", r.level,
                static_cast<unsigned long long>(r.n), r.error, r.batch_stderr);
  }
  if (rec.fit) {
    std::printf("  fitted order %.4f  (95%% ci halfwidth %.4f)\n",
                rec.fit->order, rec.fit->ci_halfwidth);
  }
  for (const std::string& note : rec.notes) {
    std::cout << "  note: " << note << "\n";
  }
  if (!rec.band_description.empty()) {
    std::cout << "  band: " << rec.band_description;
    if (rec.within_band) {
      std::cout << " -> " << (*rec.within_band ? "PASS" : "MISS");
    } else {
      std::cout << " (report only)";
    }
    std::cout << "\n";
  }
  std::printf("  wall %.2fs  workers %d", rec.wall_seconds, rec.workers);
  if (rec.budget_seconds > 0.0) {
    std::printf("  budget %.0fs%s", rec.budget_seconds,
                rec.budget_exceeded ? "  EXCEEDED" : "");
  }
  std::cout << "\n";
  if (!rec.csv_path.empty()) {
    std::cout << "  wrote " << rec.csv_path << "\n";
    std::cout << "  wrote " << rec.plot_path << "\n";
    std::cout << "  wrote " << rec.manifest_path << "\n";
  }
}

int finish(const emlab::ResultRecord& rec, bool assert_band) {
  print_record(rec);
  if (rec.budget_exceeded) {
    std::cerr << "budget exceeded: " << rec.wall_seconds << "s against "
              << rec.budget_seconds << "s\n";
    return 3;
  }
  if (assert_band && rec.within_band && !*rec.within_band) {
    std::cerr << "acceptance band missed: " << rec.band_description << "\n";
    return 4;
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    std::cerr << "error: '" << dir << "' is not a directory\n";
    return 2;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() != ".csv") continue;
    const std::string stem = p.stem().string();
    if (stem.size() >= 5 && stem.substr(stem.size() - 5) == "_plot") continue;
    files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cout << "no result tables in " << dir << "\n";
    return 0;
  }
  std::cout << "name                        rows   finest_error      order"
               "   ci_halfwidth\n";
  for (const fs::path& p : files) {
    try {
      const emlab::ParsedCsv parsed = emlab::parse_result_csv(p.string());
      std::printf("%-26s  %5zu  %13.6g  %9.4f  %13.4f\n",
                  p.stem().string().c_str(), parsed.rows.size(),
                  parsed.rows.empty() ? 0.0 : parsed.rows.back().error,
                  parsed.order, parsed.ci_halfwidth);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << p.string() << ": " << e.what()
                << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Monte Carlo laboratory for the Euler-Maruyama scheme on dyadic "
      "Brownian lattices"};
  app.require_subcommand(1);

  int workers = 1;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool assert_band = false;
  std::string config_path, canned_name, results_dir;

  CLI::Option* seed_opt_run = nullptr;
  CLI::Option* seed_opt_canned = nullptr;
  CLI::Option* out_opt_run = nullptr;
  CLI::Option* out_opt_canned = nullptr;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", config_path, "key-value config file")->required();
  run->add_option("--workers", workers, "worker thread count")
      ->check(CLI::PositiveNumber);
  seed_opt_run = run->add_option("--seed", seed, "override the config seed");
  out_opt_run = run->add_option("--out", out_dir, "output directory override");

  CLI::App* canned =
      app.add_subcommand("canned", "execute a canned experiment");
  canned->add_option("name", canned_name, "canned experiment name")
      ->required();
  canned->add_option("--workers", workers, "worker thread count")
      ->check(CLI::PositiveNumber);
  seed_opt_canned = canned->add_option("--seed", seed, "override the seed");
  out_opt_canned =
      canned->add_option("--out", out_dir, "output directory override");
  canned->add_flag("--assert", assert_band,
                   "exit 4 when the acceptance band is missed");

  CLI::App* list = app.add_subcommand("list", "list canned experiments");

  CLI::App* validate =
      app.add_subcommand("validate", "validate a config file");
  validate->add_option("config", config_path, "key-value config file")
      ->required();

  CLI::App* report =
      app.add_subcommand("report", "summarize result CSVs in a directory");
  report->add_option("dir", results_dir, "results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list->parsed()) {
      for (const emlab::CannedExperiment& ce : emlab::canned_catalogue()) {
        std::printf("%-26s %-19s budget %5.0fs  %s\n",
                    ce.config.name.c_str(),
                    emlab::to_string(ce.config.kind).c_str(),
                    ce.config.budget_seconds, ce.config.claim.c_str());
      }
      return 0;
    }
    if (validate->parsed()) {
      const emlab::ExperimentConfig cfg = emlab::load_config(config_path);
      emlab::validate_experiment(cfg);
      std::cout << "valid: " << cfg.name << " ("
                << emlab::to_string(cfg.kind) << "), fingerprint "
                << emlab::fingerprint_config(cfg) << "\n";
      return 0;
    }
    if (report->parsed()) {
      return cmd_report(results_dir);
    }
    if (run->parsed()) {
      const emlab::ExperimentConfig cfg = emlab::load_config(config_path);
      emlab::RunOptions opt;
      opt.workers = workers;
      if (seed_opt_run->count() > 0) opt.seed_override = seed;
      if (out_opt_run->count() > 0) opt.out_dir_override = out_dir;
      return finish(emlab::run_experiment(cfg, opt), /*assert_band=*/false);
    }
    if (canned->parsed()) {
      emlab::RunOptions opt;
      opt.workers = workers;
      if (seed_opt_canned->count() > 0) opt.seed_override = seed;
      if (out_opt_canned->count() > 0) opt.out_dir_override = out_dir;
      return finish(emlab::run_canned(canned_name, opt), assert_band);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
