// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nasq/error.hpp"
#include "nasq/harness.hpp"
#include "nasq/json_util.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInfeasible = 2;
constexpr int kConfigError = 3;
constexpr int kIoError = 4;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<std::string> out;
  std::optional<std::string> mode;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "run configuration (JSON)");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--episodes", f.episodes, "episodes to run in total");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--mode", f.mode, "joint, quant_only, arch_only, hw_only or oracle");
}

nasq::RunConfig resolve_config(const RunFlags& f) {
  nlohmann::json j = f.config.empty() ? nlohmann::json::object() : nasq::read_json_file(f.config);
  if (!j.is_object()) throw nasq::ConfigError(f.config + ": top level must be an object");
  if (f.seed) j["seed"] = *f.seed;
  if (f.episodes) j["episodes"] = *f.episodes;
  if (f.out) j["out"] = *f.out;
  if (f.mode) j["mode"] = *f.mode;
  return nasq::run_config_from_json(j);
}

void print_summary(const nasq::SearchSummary& s) {
  nlohmann::json j = {{"episodes", s.episodes},
                      {"feasible_episodes", s.feasible_episodes},
                      {"evaluator_failures", s.evaluator_failures},
                      {"best_reward", s.best_reward},
                      {"best_episode", s.best_episode},
                      {"best_network", s.best_network ? nasq::to_json(*s.best_network)
                                                      : nlohmann::json(nullptr)},
                      {"best_hw", s.best_hw}};
  if (s.resumed_noop) j["resumed_noop"] = true;
  std::cout << j.dump(2) << "\n";
}

struct HwFlags {
  RunFlags run;
  std::string network;
  std::string spec;
  std::string library;
  std::optional<std::int64_t> rl;
  std::optional<double> rt;
  std::optional<double> clock;
  std::string output;
};

void add_hw_flags(CLI::App* cmd, HwFlags& f) {
  cmd->add_option("--network", f.network, "network JSON (defaults to the config's fixed_network)");
  cmd->add_option("--spec", f.spec, "specification JSON {rL, rT, clock_hz}");
  cmd->add_option("--rL", f.rl, "LUT budget");
  cmd->add_option("--rT", f.rt, "minimum throughput in frames/s");
  cmd->add_option("--clock", f.clock, "clock rate in Hz");
  cmd->add_option("--library", f.library, "QCE cost library JSON");
  cmd->add_option("--config", f.run.config, "run configuration supplying defaults");
  cmd->add_option("--out", f.output, "write the solutions JSON here instead of stdout");
}

int run_hw(const HwFlags& f, bool oracle) {
  nasq::RunConfig config;
  if (!f.run.config.empty()) config = resolve_config(f.run);
  std::optional<nasq::ChildNetwork> net = config.fixed_network;
  if (!f.network.empty()) net = nasq::network_from_json(nasq::read_json_file(f.network));
  if (!net) throw nasq::ConfigError("no network given (use --network or a config fixed_network)");
  nasq::Specification spec = config.spec;
  if (!f.spec.empty()) spec = nasq::spec_from_json(nasq::read_json_file(f.spec));
  if (f.rl) spec.max_luts = *f.rl;
  if (f.rt) spec.min_fps = *f.rt;
  if (f.clock) spec.clock_hz = *f.clock;
  spec.validate();
  nasq::QceCostLibrary lib = config.cost_library;
  if (!f.library.empty()) lib = nasq::QceCostLibrary::load(f.library);

  const auto result = nasq::run_hw_only(*net, spec, lib, oracle);
  const std::string text = result.solutions.dump(2) + "\n";
  if (f.output.empty()) {
    std::cout << text;
  } else {
    nasq::write_text_file(f.output, text);
  }
  if (!result.feasible()) {
    std::cerr << "infeasible: no implementation meets rL=" << spec.max_luts
              << " rT=" << spec.min_fps << "\n";
    return kInfeasible;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint architecture, quantization and hardware search"};
  app.require_subcommand(1);

  RunFlags search_flags;
  auto* search = app.add_subcommand("search", "run the controller search");
  add_run_flags(search, search_flags);

  RunFlags resume_flags;
  std::string checkpoint;
  auto* resume = app.add_subcommand("resume", "continue a search from its checkpoint");
  add_run_flags(resume, resume_flags);
  resume->add_option("--checkpoint", checkpoint, "checkpoint file (default <out>/checkpoint.json)");

  HwFlags hw_flags;
  auto* hw = app.add_subcommand("hw", "search the hardware space of one network");
  add_hw_flags(hw, hw_flags);

  HwFlags oracle_flags;
  auto* oracle = app.add_subcommand("oracle", "enumerate the hardware space exhaustively");
  add_hw_flags(oracle, oracle_flags);

  std::string log_path;
  std::string csv_path;
  auto* report = app.add_subcommand("report", "convert an episode log to CSV");
  report->add_option("--log", log_path, "episodes.jsonl")->required();
  report->add_option("--out", csv_path, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (search->parsed()) {
      const auto config = resolve_config(search_flags);
      if (config.mode == nasq::SearchMode::hw_only || config.mode == nasq::SearchMode::oracle) {
        HwFlags f;
        f.run = search_flags;
        return run_hw(f, config.mode == nasq::SearchMode::oracle);
      }
      print_summary(nasq::run_search(config));
    } else if (resume->parsed()) {
      const auto config = resolve_config(resume_flags);
      const std::filesystem::path ck =
          checkpoint.empty() ? config.out_dir / "checkpoint.json" : std::filesystem::path(checkpoint);
      print_summary(nasq::resume(ck, config));
    } else if (hw->parsed()) {
      return run_hw(hw_flags, false);
    } else if (oracle->parsed()) {
      return run_hw(oracle_flags, true);
    } else if (report->parsed()) {
      std::ifstream in(log_path, std::ios::binary);
      if (!in) throw nasq::IoError("cannot open " + log_path);
      nasq::ReportStats stats;
      if (csv_path.empty()) {
        stats = nasq::write_report(in, std::cout);
      } else {
        stats = nasq::export_report(log_path, csv_path);
      }
      if (stats.skipped > 0) {
        std::cerr << "warning: skipped " << stats.skipped << " corrupt line(s)\n";
      }
    }
  } catch (const nasq::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const nasq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}
