// SPDX-License-Identifier: Apache-2.0
#include "nasq/harness.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "nasq/error.hpp"
#include "nasq/json_util.hpp"

namespace nasq {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCheckpointFormat = "nasq-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Exclusive advisory lock on <out>/run.lock, released when the holder exits.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) {
    const auto path = dir / "run.lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot create " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw IoError("output directory " + dir.string() + " is in use by another run");
    }
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

std::unique_ptr<AccuracyEvaluator> make_evaluator(const EvaluatorSelection& sel) {
  if (sel.kind == AccuracySource::external) {
    return std::make_unique<ExternalEvaluator>(*sel.external);
  }
  return std::make_unique<SurrogateEvaluator>(sel.surrogate);
}

struct RunState {
  PolicyParameters params;
  Rng rng;
  double baseline = 0.0;
  int done = 0;
  int feasible = 0;
  int failures = 0;
  double best_reward = 0.0;
  int best_episode = 0;
  nlohmann::json best_network;
  nlohmann::json best_hw;
  std::uint64_t log_bytes = 0;
  std::uint64_t timing_bytes = 0;
};

RunState fresh_state(const RunConfig& config) {
  RunState s;
  s.rng.seed(config.seed);
  s.params = PolicyParameters(policy_layout(config), config.controller);
  s.params.init_uniform(config.controller.init_range, s.rng);
  return s;
}

SearchSummary summarize(const RunState& s) {
  SearchSummary out;
  out.episodes = s.done;
  out.feasible_episodes = s.feasible;
  out.evaluator_failures = s.failures;
  out.best_reward = s.best_reward;
  out.best_episode = s.best_episode;
  if (!s.best_network.is_null()) out.best_network = network_from_json(s.best_network);
  out.best_hw = s.best_hw;
  return out;
}

nlohmann::json best_json(const RunState& s) {
  return {{"episode", s.best_episode},
          {"reward", s.best_reward},
          {"network", s.best_network},
          {"hw", s.best_hw}};
}

nlohmann::json checkpoint_json(const RunState& s, const RunConfig& config, int logged) {
  std::ostringstream rng_state;
  rng_state << s.rng;
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"fingerprint", hex64(config.fingerprint())},
          {"episodes_done", s.done},
          {"episodes_logged", logged},
          {"baseline", s.baseline},
          {"rng", rng_state.str()},
          {"log_bytes", s.log_bytes},
          {"timing_bytes", s.timing_bytes},
          {"feasible", s.feasible},
          {"evaluator_failures", s.failures},
          {"best", best_json(s)},
          {"params", to_json(s.params)}};
}

RunState state_from_checkpoint(const nlohmann::json& j, const RunConfig& config) {
  RunState s = fresh_state(config);
  try {
    std::istringstream rng_state(j.at("rng").get<std::string>());
    rng_state >> s.rng;
    if (!rng_state) throw ConfigError("checkpoint: corrupt rng state");
    s.baseline = j.at("baseline").get<double>();
    s.done = j.at("episodes_done").get<int>();
    s.feasible = j.at("feasible").get<int>();
    s.failures = j.at("evaluator_failures").get<int>();
    s.log_bytes = j.at("log_bytes").get<std::uint64_t>();
    s.timing_bytes = j.at("timing_bytes").get<std::uint64_t>();
    const auto& best = j.at("best");
    s.best_episode = best.at("episode").get<int>();
    s.best_reward = best.at("reward").get<double>();
    s.best_network = best.at("network");
    s.best_hw = best.at("hw");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  load_parameters(s.params, j.at("params"));
  return s;
}

void write_atomically(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

void truncate_to(const fs::path& path, std::uint64_t bytes) {
  std::error_code ec;
  const auto size = fs::exists(path, ec) ? fs::file_size(path, ec) : 0;
  if (ec || size < bytes) {
    throw IoError(path.string() + " is shorter than the checkpoint expects; cannot resume");
  }
  fs::resize_file(path, bytes, ec);
  if (ec) throw IoError("cannot truncate " + path.string() + ": " + ec.message());
}

void check_containment(const RunConfig& config, const ChildNetwork& net) {
  if (!config.fixed_network) return;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& fixed = config.fixed_network->layers[i];
    if (config.mode == SearchMode::quant_only && net.layers[i].arch != fixed.arch) {
      throw std::logic_error("quant_only search altered the pinned architecture");
    }
    if (config.mode == SearchMode::arch_only && net.layers[i].quant != fixed.quant) {
      throw std::logic_error("arch_only search altered the pinned quantization");
    }
  }
}

// Runs batches until config.episodes episodes are logged.
SearchSummary drive(const RunConfig& config, RunState state) {
  const fs::path& dir = config.out_dir;
  const fs::path log_path = dir / "episodes.jsonl";
  const fs::path timing_path = dir / "timings.jsonl";
  const fs::path ckpt_path = dir / "checkpoint.json";

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  std::ofstream timing(timing_path, std::ios::binary | std::ios::app);
  if (!log || !timing) throw IoError("cannot open logs in " + dir.string());

  auto evaluator = make_evaluator(config.evaluator);
  const int m = config.controller.batch_m;
  const int interval = std::max(1, (config.checkpoint_interval + m - 1) / m) * m;
  const int target = config.episodes;

  while (state.done < target) {
    const int size = std::min(m, target - state.done);
    // A short final batch is not a resumable boundary; keep the state before it.
    std::optional<RunState> before;
    if (size < m) before = state;

    std::vector<Trajectory> batch;
    std::vector<double> rewards;
    for (int j = 0; j < size; ++j) {
      const int episode = state.done + j + 1;
      const auto t0 = std::chrono::steady_clock::now();
      Trajectory tr = sample_trajectory(state.params, state.rng);
      const ChildNetwork net = build_network(config, tr.tokens);
      check_containment(config, net);
      const RewardSignal sig =
          compute_reward(net, config.spec, config.cost_library, *evaluator, episode);
      tr.reward = sig.value;

      nlohmann::json hw = nullptr;
      if (sig.hw_witness) {
        hw = solution_to_json(net, *sig.hw_witness, config.cost_library, config.spec.clock_hz);
      }
      nlohmann::json net_json = to_json(net);
      const nlohmann::json record = {
          {"episode", episode},
          {"tokens", tr.tokens},
          {"network", net_json},
          {"feasible", sig.feasible},
          {"reward", sig.value},
          {"baseline", state.baseline},
          {"evaluator_error",
           sig.evaluator_error ? nlohmann::json(*sig.evaluator_error) : nlohmann::json(nullptr)},
          {"hw", hw}};
      const std::string line = record.dump() + "\n";
      log << line;
      log.flush();
      if (!log) throw IoError("write failed: " + log_path.string());
      state.log_bytes += line.size();

      if (sig.feasible) ++state.feasible;
      if (sig.evaluator_error) {
        ++state.failures;
        std::cerr << "episode " << episode << ": evaluator failed: " << *sig.evaluator_error
                  << "\n";
      }
      if (sig.feasible && !sig.evaluator_error &&
          (state.best_episode == 0 || sig.value > state.best_reward)) {
        state.best_reward = sig.value;
        state.best_episode = episode;
        state.best_network = std::move(net_json);
        state.best_hw = hw;
      }

      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      const std::string tline =
          nlohmann::json{{"episode", episode}, {"wall_ms", ms}}.dump() + "\n";
      timing << tline;
      timing.flush();
      state.timing_bytes += tline.size();

      rewards.push_back(tr.reward);
      batch.push_back(std::move(tr));
    }

    const PolicyParameters grad = policy_gradient(state.params, batch, state.baseline,
                                                  config.controller.discount_gamma);
    apply_update(state.params, grad, config.controller.learning_rate);
    state.baseline = update_baseline(state.baseline, rewards, config.controller.baseline_decay);
    state.done += size;

    if (before) {
      write_atomically(ckpt_path, checkpoint_json(*before, config, state.done).dump() + "\n");
    } else if (state.done % interval == 0 || state.done == target) {
      write_atomically(ckpt_path, checkpoint_json(state, config, state.done).dump() + "\n");
    }
  }

  write_atomically(dir / "best.json", best_json(state).dump(2) + "\n");
  log.close();
  export_report(log_path, dir / "report.csv");
  return summarize(state);
}

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

std::string_view to_string(SearchMode m) {
  switch (m) {
    case SearchMode::joint: return "joint";
    case SearchMode::quant_only: return "quant_only";
    case SearchMode::arch_only: return "arch_only";
    case SearchMode::hw_only: return "hw_only";
    case SearchMode::oracle: return "oracle";
  }
  return "joint";
}

SearchMode search_mode_from_string(std::string_view s) {
  for (auto m : {SearchMode::joint, SearchMode::quant_only, SearchMode::arch_only,
                 SearchMode::hw_only, SearchMode::oracle}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown mode \"" + std::string(s) + "\"");
}

void RunConfig::validate() const {
  space.validate();
  spec.validate();
  controller.validate();
  cost_library.validate();
  evaluator.surrogate.validate();
  if (evaluator.kind == AccuracySource::external) {
    if (!evaluator.external) throw ConfigError("evaluator: external selected but not configured");
    evaluator.external->validate();
  }
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
  if (mode != SearchMode::joint && !fixed_network) {
    throw ConfigError(std::string("mode ") + std::string(to_string(mode)) +
                      " requires fixed_network");
  }
  if (fixed_network && (mode == SearchMode::quant_only || mode == SearchMode::arch_only)) {
    if (fixed_network->depth() != static_cast<std::size_t>(space.num_layers)) {
      throw ConfigError("fixed_network depth does not match space.num_layers");
    }
    if (fixed_network->input != space.input) {
      throw ConfigError("fixed_network input does not match space.input");
    }
  }
}

std::uint64_t RunConfig::fingerprint() const {
  nlohmann::json j = to_json(*this);
  j.erase("episodes");
  j.erase("out");
  j.erase("checkpoint_interval");
  if (j["evaluator"].contains("external")) {
    j["evaluator"]["external"].erase("timeout_seconds");
    j["evaluator"]["external"].erase("max_workers");
  }
  return fnv1a64(j.dump());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json ev = {{"kind", to_string(c.evaluator.kind)},
                       {"surrogate", to_json(c.evaluator.surrogate)}};
  if (c.evaluator.external) ev["external"] = to_json(*c.evaluator.external);
  nlohmann::json j = {{"mode", to_string(c.mode)},
                      {"space", to_json(c.space)},
                      {"spec", to_json(c.spec)},
                      {"controller", to_json(c.controller)},
                      {"cost_library", to_json(c.cost_library)},
                      {"evaluator", std::move(ev)},
                      {"episodes", c.episodes},
                      {"out", c.out_dir.string()},
                      {"seed", c.seed},
                      {"checkpoint_interval", c.checkpoint_interval}};
  if (c.fixed_network) j["fixed_network"] = to_json(*c.fixed_network);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "config";
  require_known_keys(j,
                     {"mode", "space", "spec", "controller", "cost_library", "evaluator",
                      "episodes", "out", "seed", "checkpoint_interval", "fixed_network"},
                     ctx);
  RunConfig c;
  if (j.contains("mode")) c.mode = search_mode_from_string(get_as<std::string>(j, "mode", ctx));
  if (j.contains("space")) c.space = space_from_json(j.at("space"));
  if (j.contains("spec")) c.spec = spec_from_json(j.at("spec"));
  if (j.contains("controller")) c.controller = controller_config_from_json(j.at("controller"));
  if (j.contains("cost_library")) c.cost_library = cost_library_from_json(j.at("cost_library"));
  if (j.contains("evaluator")) {
    const auto& e = j.at("evaluator");
    require_known_keys(e, {"kind", "surrogate", "external"}, "evaluator");
    const auto kind = get_or<std::string>(e, "kind", "surrogate", "evaluator");
    if (kind == "surrogate") {
      c.evaluator.kind = AccuracySource::surrogate;
    } else if (kind == "external") {
      c.evaluator.kind = AccuracySource::external;
    } else {
      throw ConfigError("evaluator: unknown kind \"" + kind + "\"");
    }
    if (e.contains("surrogate")) {
      c.evaluator.surrogate = surrogate_config_from_json(e.at("surrogate"));
    }
    if (e.contains("external")) {
      c.evaluator.external = protocol_config_from_json(e.at("external"));
    }
  }
  c.episodes = get_or(j, "episodes", c.episodes, ctx);
  c.out_dir = get_or<std::string>(j, "out", c.out_dir.string(), ctx);
  c.seed = get_or(j, "seed", c.seed, ctx);
  c.checkpoint_interval = get_or(j, "checkpoint_interval", c.checkpoint_interval, ctx);
  if (j.contains("fixed_network")) c.fixed_network = network_from_json(j.at("fixed_network"));
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json_file(path)); }

std::vector<Param> controlled_params(SearchMode mode) {
  std::vector<Param> out;
  const int first = mode == SearchMode::quant_only ? kArchParamCount : 0;
  const int last = mode == SearchMode::arch_only ? kArchParamCount : kParamCount;
  for (int k = first; k < last; ++k) out.push_back(static_cast<Param>(k));
  return out;
}

PolicyLayout policy_layout(const RunConfig& config) {
  const auto params = controlled_params(config.mode);
  PolicyLayout layout;
  for (Param p : params) layout.vocab_sizes.push_back(static_cast<int>(config.space.vocab(p)));
  for (int l = 0; l < config.space.num_layers; ++l) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      layout.step_kinds.push_back(static_cast<int>(k));
    }
  }
  return layout;
}

ChildNetwork build_network(const RunConfig& config, std::span<const int> tokens) {
  if (config.mode == SearchMode::joint) return decode_actions(tokens, config.space);
  const auto params = controlled_params(config.mode);
  const auto L = static_cast<std::size_t>(config.space.num_layers);
  if (tokens.size() != params.size() * L) {
    throw DecodeError(tokens.size(), "expected " + std::to_string(params.size() * L) + " tokens");
  }
  std::vector<Layer> layers = config.fixed_network->layers;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Param p = params[t % params.size()];
    const auto& list = config.space.values(p);
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= list.size()) {
      throw DecodeError(t, "index out of range for " + std::string(param_name(p)));
    }
    set_param(layers[t / params.size()], p, list[static_cast<std::size_t>(tokens[t])]);
  }
  return make_network(std::move(layers), config.space.input);
}

SearchSummary run_search(const RunConfig& config) {
  config.validate();
  if (config.mode == SearchMode::hw_only || config.mode == SearchMode::oracle) {
    throw ConfigError("mode " + std::string(to_string(config.mode)) +
                      " is a hardware-only run; use run_hw_only");
  }
  prepare_out_dir(config.out_dir);
  RunLock lock(config.out_dir);
  for (const char* name : {"episodes.jsonl", "timings.jsonl"}) {
    write_text_file(config.out_dir / name, "");
  }
  RunState state = fresh_state(config);
  write_atomically(config.out_dir / "checkpoint.json",
                   checkpoint_json(state, config, 0).dump() + "\n");
  return drive(config, std::move(state));
}

SearchSummary resume(const fs::path& checkpoint, const RunConfig& config) {
  config.validate();
  const nlohmann::json ck = read_json_file(checkpoint);
  if (!ck.is_object() || ck.value("format", "") != kCheckpointFormat ||
      ck.value("version", 0) != kCheckpointVersion) {
    throw ConfigError(checkpoint.string() + ": not a version " +
                      std::to_string(kCheckpointVersion) + " checkpoint");
  }
  if (ck.value("fingerprint", "") != hex64(config.fingerprint())) {
    throw ConfigError(checkpoint.string() +
                      ": checkpoint was written under a different space/controller/search "
                      "configuration");
  }
  prepare_out_dir(config.out_dir);
  RunLock lock(config.out_dir);
  RunState state = state_from_checkpoint(ck, config);
  const int logged = ck.value("episodes_logged", state.done);
  if (config.episodes <= logged) {
    // Already complete: report from the saved best without touching the logs.
    SearchSummary s = summarize(state);
    s.episodes = logged;
    s.resumed_noop = true;
    return s;
  }
  truncate_to(config.out_dir / "episodes.jsonl", state.log_bytes);
  truncate_to(config.out_dir / "timings.jsonl", state.timing_bytes);
  return drive(config, std::move(state));
}

HwRunResult run_hw_only(const ChildNetwork& net, const Specification& spec,
                        const QceCostLibrary& lib, bool oracle) {
  HwRunResult r;
  if (oracle) {
    auto bf = brute_force(net, spec, lib);
    r.frontier = std::move(bf.frontier);
    r.candidates = bf.candidates;
  } else {
    r.frontier = dp_search(net, spec, lib);
  }
  r.solutions = solutions_to_json(net, r.frontier, spec, lib);
  if (oracle) r.solutions["candidates"] = r.candidates;
  return r;
}

ReportStats write_report(std::istream& log, std::ostream& csv) {
  ReportStats stats;
  csv << "episode,reward,best_so_far,feasible_rate,baseline\n";
  double best = 0.0;
  std::size_t feasible = 0;
  std::string line;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    int episode = 0;
    double reward = 0.0;
    double baseline = 0.0;
    bool is_feasible = false;
    try {
      const auto j = nlohmann::json::parse(line);
      episode = j.at("episode").get<int>();
      reward = j.at("reward").get<double>();
      baseline = j.at("baseline").get<double>();
      is_feasible = j.at("feasible").get<bool>();
    } catch (const nlohmann::json::exception&) {
      ++stats.skipped;
      continue;
    }
    ++stats.rows;
    if (is_feasible) ++feasible;
    best = stats.rows == 1 ? reward : std::max(best, reward);
    csv << episode << ',' << fmt_double(reward) << ',' << fmt_double(best) << ','
        << fmt_double(static_cast<double>(feasible) / static_cast<double>(stats.rows)) << ','
        << fmt_double(baseline) << '\n';
  }
  return stats;
}

ReportStats export_report(const fs::path& log_path, const fs::path& csv_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + log_path.string());
  std::ostringstream out;
  const ReportStats stats = write_report(in, out);
  write_text_file(csv_path, out.str());
  return stats;
}

PartialSolution solution_from_json(const nlohmann::json& j, std::size_t layers) {
  PartialSolution s;
  try {
    for (const auto& p : j.at("partitions")) {
      s.partition_starts.push_back(p.at("first").get<int>() - 1);
    }
    for (const auto& t : j.at("tiles")) {
      s.tiles.push_back({t.at("tn").get<int>(), t.at("tm").get<int>()});
    }
    s.f1 = j.value("f1", std::int64_t{0});
    s.f2 = j.value("f2", std::int64_t{0});
    s.f3 = j.value("f3", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("solution: ") + e.what());
  }
  if (s.tiles.size() != layers) throw ConfigError("solution: tile count does not match layers");
  return s;
}

}  // namespace nasq
