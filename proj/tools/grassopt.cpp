// grassopt simulate|covtable|optimize|evaluate|ratecheck --config <path>
//          [--out <dir>] [--seed <u64>] [--threads <k>]
//
// Exit codes: 0 success, 2 config error, 3 numerical failure,
// 4 ratecheck outside its band.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "grassopt/experiment.hpp"

namespace ex = grassopt::experiment;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitRateCheck = 4;

int run(const std::string& command, const std::string& config_path, const std::string& out_dir,
        const std::optional<std::uint64_t>& seed, int threads) {
  nlohmann::json input;
  try {
    input = nlohmann::json::parse(grassopt::io::read_file(config_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw grassopt::ConfigError(config_path + ": " + e.what());
  }
  if (!out_dir.empty()) input["out"] = out_dir;
  if (seed) {
    input["seeds"] = {*seed};
    if (input.contains("dataset_seeds")) input.erase("dataset_seeds");
    input["dataset_seeds"] = {*seed};
    input["ratecheck"]["seeds"] = {*seed};
  }
  if (const char* env = std::getenv("GRASSOPT_THREADS")) {
    try {
      threads = std::stoi(env);
    } catch (const std::exception&) {
      throw grassopt::ConfigError("GRASSOPT_THREADS must be an integer");
    }
  }
  input["threads"] = threads;
  const ex::ExperimentConfig cfg = ex::parse_config(input);

  if (command == "simulate") {
    ex::cmd_simulate(cfg);
  } else if (command == "covtable") {
    ex::cmd_covtable(cfg);
  } else if (command == "optimize") {
    ex::cmd_optimize(cfg);
  } else if (command == "evaluate") {
    ex::cmd_evaluate(cfg);
  } else {
    const auto res = ex::cmd_ratecheck(cfg);
    std::cout << "corollary1 slope " << res.corollary1.slope << " band [" << cfg.ratecheck.band_lo << ", "
              << cfg.ratecheck.band_hi << "] exact " << res.exact.slope << " constant-error "
              << res.constant_error.slope << (res.pass ? " PASS" : " FAIL") << "\n";
    if (!res.pass) return kExitRateCheck;
  }
  std::cout << command << ": wrote " << cfg.out << " (config " << ex::config_hash(cfg) << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inexact Riemannian gradient experiments on the Grassmannian"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_value = 0;
  int threads = 1;
  for (const char* name : {"simulate", "covtable", "optimize", "evaluate", "ratecheck"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seed_value, "run a single seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  std::optional<std::uint64_t> seed;
  if (chosen->count("--seed")) seed = seed_value;
  try {
    return run(chosen->get_name(), config_path, out_dir, seed, threads);
  } catch (const grassopt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const grassopt::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const grassopt::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitConfig;
  }
}
