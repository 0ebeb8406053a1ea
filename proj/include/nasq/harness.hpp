// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nasq/controller.hpp"
#include "nasq/evaluator.hpp"
#include "nasq/hw_search.hpp"
#include "nasq/search_space.hpp"

namespace nasq {

enum class SearchMode { joint, quant_only, arch_only, hw_only, oracle };

std::string_view to_string(SearchMode m);
SearchMode search_mode_from_string(std::string_view s);

struct EvaluatorSelection {
  AccuracySource kind = AccuracySource::surrogate;
  SurrogateConfig surrogate;
  std::optional<ProtocolConfig> external;
};

struct RunConfig {
  SearchMode mode = SearchMode::joint;
  SpaceConfig space = SpaceConfig::defaults();
  Specification spec;
  ControllerConfig controller;
  QceCostLibrary cost_library;
  EvaluatorSelection evaluator;
  int episodes = 1000;
  // Supplies the pinned architecture (quant_only), the pinned quantization
  // (arch_only), or the network to cost (hw_only, oracle).
  std::optional<ChildNetwork> fixed_network;
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 1;
  int checkpoint_interval = 50;  // episodes; rounded up to whole batches

  void validate() const;
  // Fingerprint of everything that shapes the episode stream. A checkpoint is
  // only resumable under a config with the same fingerprint.
  std::uint64_t fingerprint() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Decision steps the controller emits for a mode, as parameter kinds.
std::vector<Param> controlled_params(SearchMode mode);
PolicyLayout policy_layout(const RunConfig& config);

// Maps controller tokens to a network, filling pinned fields from
// config.fixed_network.
ChildNetwork build_network(const RunConfig& config, std::span<const int> tokens);

struct SearchSummary {
  int episodes = 0;
  int feasible_episodes = 0;
  int evaluator_failures = 0;
  double best_reward = 0.0;
  int best_episode = 0;  // 1-based; 0 if nothing feasible
  std::optional<ChildNetwork> best_network;
  nlohmann::json best_hw;  // solution JSON of the best design, or null
  bool resumed_noop = false;
};

// Runs config.episodes episodes in batches of controller.batch_m, writing
// episodes.jsonl, timings.jsonl, checkpoint.json, best.json and report.csv
// into out_dir. Throws IoError on filesystem failures, ConfigError on an
// invalid config.
SearchSummary run_search(const RunConfig& config);

// Continues a run from its checkpoint up to config.episodes. The episode log
// ends up byte-identical to an uninterrupted run.
SearchSummary resume(const std::filesystem::path& checkpoint, const RunConfig& config);

struct HwRunResult {
  FrontierSet frontier;
  nlohmann::json solutions;
  std::uint64_t candidates = 0;  // oracle only
  bool feasible() const { return !frontier.empty(); }
};

HwRunResult run_hw_only(const ChildNetwork& net, const Specification& spec,
                        const QceCostLibrary& lib, bool oracle = false);

struct ReportStats {
  std::size_t rows = 0;
  std::size_t skipped = 0;
};

// CSV columns: episode,reward,best_so_far,feasible_rate,baseline.
ReportStats write_report(std::istream& log, std::ostream& csv);
ReportStats export_report(const std::filesystem::path& log_path,
                          const std::filesystem::path& csv_path);

// Rebuilds a solution from its JSON form (as written to the episode log).
PartialSolution solution_from_json(const nlohmann::json& j, std::size_t layers);

}  // namespace nasq
