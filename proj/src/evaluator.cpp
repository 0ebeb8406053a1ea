// SPDX-License-Identifier: Apache-2.0
#include "nasq/evaluator.hpp"

#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <thread>

#include "nasq/json_util.hpp"

extern char** environ;

namespace nasq {

std::string_view to_string(AccuracySource s) {
  return s == AccuracySource::surrogate ? "surrogate" : "external";
}

std::string_view to_string(ExternalEvaluatorError::Kind k) {
  using K = ExternalEvaluatorError::Kind;
  switch (k) {
    case K::spawn_failed: return "spawn_failed";
    case K::timeout: return "timeout";
    case K::nonzero_exit: return "nonzero_exit";
    case K::malformed_response: return "malformed_response";
    case K::out_of_range: return "out_of_range";
  }
  return "unknown";
}

void SurrogateConfig::validate() const {
  if (acc_floor < 0 || acc_ceiling_span < 0 || acc_floor + acc_ceiling_span > 1) {
    throw ConfigError("surrogate: need floor, span >= 0 and floor + span <= 1");
  }
  if (!(param_ref > 0)) throw ConfigError("surrogate: param_ref must be > 0");
}

nlohmann::json to_json(const SurrogateConfig& c) {
  return {{"acc_floor", c.acc_floor},
          {"acc_ceiling_span", c.acc_ceiling_span},
          {"param_ref", c.param_ref}};
}

SurrogateConfig surrogate_config_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "surrogate";
  require_known_keys(j, {"acc_floor", "acc_ceiling_span", "param_ref"}, ctx);
  SurrogateConfig c;
  c.acc_floor = get_or(j, "acc_floor", c.acc_floor, ctx);
  c.acc_ceiling_span = get_or(j, "acc_ceiling_span", c.acc_ceiling_span, ctx);
  c.param_ref = get_or(j, "param_ref", c.param_ref, ctx);
  c.validate();
  return c;
}

double surrogate_accuracy(const ChildNetwork& net, const SurrogateConfig& config) {
  const double params = static_cast<double>(param_count(net));
  const double capacity = std::min(1.0, std::log1p(params) / std::log1p(config.param_ref));
  double product = 1.0;
  for (const auto& layer : net.layers) {
    const auto& q = layer.quant;
    product *= (1.0 - std::ldexp(1.0, -(q.wi + q.wf))) * (1.0 - std::ldexp(1.0, -(q.ai + q.af)));
  }
  const double quality = product <= 0.0
                             ? 0.0
                             : std::pow(product, 1.0 / static_cast<double>(net.depth()));
  return config.acc_floor + config.acc_ceiling_span * capacity * quality;
}

void ProtocolConfig::validate() const {
  if (command.empty()) throw ConfigError("external evaluator: command is empty");
  if (!(timeout_seconds > 0)) throw ConfigError("external evaluator: timeout must be > 0");
  if (max_workers < 1) throw ConfigError("external evaluator: max_workers must be >= 1");
}

nlohmann::json to_json(const ProtocolConfig& c) {
  return {{"command", c.command},
          {"args", c.args},
          {"timeout_seconds", c.timeout_seconds},
          {"max_workers", c.max_workers}};
}

ProtocolConfig protocol_config_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "external";
  require_known_keys(j, {"command", "args", "timeout_seconds", "max_workers"}, ctx);
  ProtocolConfig c;
  c.command = get_as<std::string>(j, "command", ctx);
  c.args = get_or(j, "args", c.args, ctx);
  c.timeout_seconds = get_or(j, "timeout_seconds", c.timeout_seconds, ctx);
  c.max_workers = get_or(j, "max_workers", c.max_workers, ctx);
  c.validate();
  return c;
}

namespace {

using Clock = std::chrono::steady_clock;
using Kind = ExternalEvaluatorError::Kind;

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

// Owns the child until it has been reaped; kills it if abandoned.
class ChildProcess {
 public:
  explicit ChildProcess(pid_t pid) : pid_(pid) {}
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess() {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  // Returns the wait status, or nullopt if the deadline passed first.
  std::optional<int> wait_until(Clock::time_point deadline) {
    for (;;) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        return status;
      }
      if (r < 0 && errno != EINTR) {
        pid_ = -1;
        return 0;
      }
      if (Clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }

 private:
  pid_t pid_;
};

// Writes without letting a vanished reader raise SIGPIPE in this process.
void write_all_quietly(int fd, const std::string& data) {
  sigset_t pipe_set;
  sigset_t old_set;
  sigemptyset(&pipe_set);
  sigaddset(&pipe_set, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
  std::size_t off = 0;
  bool broke = false;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      broke = errno == EPIPE;
      break;
    }
    off += static_cast<std::size_t>(n);
  }
  if (broke) {
    const timespec zero{0, 0};
    sigtimedwait(&pipe_set, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
}

// Reads up to the first newline or EOF; nullopt on deadline.
std::optional<std::string> read_line_until(int fd, Clock::time_point deadline) {
  std::string line;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (r < 0) {
      if (errno == EINTR) continue;
      return line;
    }
    if (r == 0) continue;
    const ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      return line;
    }
    if (n == 0) return line;
    line.append(buf, static_cast<std::size_t>(n));
    const auto nl = line.find('\n');
    if (nl != std::string::npos) {
      line.resize(nl);
      return line;
    }
  }
}

}  // namespace

double external_evaluate(const ChildNetwork& net, const ProtocolConfig& config, int episode) {
  config.validate();
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(config.timeout_seconds));

  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw ExternalEvaluatorError(Kind::spawn_failed, "pipe failed");
  Fd to_read(to_child[0]);
  Fd to_write(to_child[1]);
  if (::pipe(from_child) != 0) throw ExternalEvaluatorError(Kind::spawn_failed, "pipe failed");
  Fd from_read(from_child[0]);
  Fd from_write(from_child[1]);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_read.get(), STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_write.get(), STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, to_write.get());
  posix_spawn_file_actions_addclose(&actions, from_read.get());

  std::vector<std::string> argv_store;
  argv_store.push_back(config.command);
  argv_store.insert(argv_store.end(), config.args.begin(), config.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  const int rc = posix_spawnp(&pid, config.command.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw ExternalEvaluatorError(Kind::spawn_failed,
                                 "cannot spawn " + config.command + ": " + std::strerror(rc));
  }
  ChildProcess child(pid);
  to_read.reset();
  from_write.reset();

  const nlohmann::json request = {{"network", to_json(net)}, {"episode", episode}};
  write_all_quietly(to_write.get(), request.dump() + "\n");
  to_write.reset();

  const auto line = read_line_until(from_read.get(), deadline);
  if (!line) {
    throw ExternalEvaluatorError(Kind::timeout, "evaluator produced no response within " +
                                                    std::to_string(config.timeout_seconds) + " s");
  }
  from_read.reset();
  const auto status = child.wait_until(deadline);
  if (!status) {
    throw ExternalEvaluatorError(Kind::timeout, "evaluator did not exit within the timeout");
  }
  if (!WIFEXITED(*status) || WEXITSTATUS(*status) != 0) {
    const int code = WIFEXITED(*status) ? WEXITSTATUS(*status) : 128 + WTERMSIG(*status);
    throw ExternalEvaluatorError(Kind::nonzero_exit,
                                 "evaluator exited with status " + std::to_string(code));
  }

  nlohmann::json response;
  try {
    response = nlohmann::json::parse(*line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ExternalEvaluatorError(Kind::malformed_response,
                                 std::string("evaluator response is not JSON: ") + e.what());
  }
  if (!response.is_object() || !response.contains("accuracy") ||
      !response.at("accuracy").is_number()) {
    throw ExternalEvaluatorError(Kind::malformed_response,
                                 "evaluator response lacks a numeric \"accuracy\"");
  }
  const double acc = response.at("accuracy").get<double>();
  if (!std::isfinite(acc) || acc < 0.0 || acc > 1.0) {
    throw ExternalEvaluatorError(Kind::out_of_range,
                                 "evaluator accuracy " + std::to_string(acc) + " outside [0,1]");
  }
  return acc;
}

RewardSignal compute_reward(const ChildNetwork& net, const Specification& spec,
                            const QceCostLibrary& lib, AccuracyEvaluator& evaluator,
                            int episode) {
  RewardSignal r;
  r.source = evaluator.source();
  FrontierSet frontier = dp_search(net, spec, lib);
  if (frontier.empty()) return r;
  r.feasible = true;
  r.hw_witness = std::move(frontier.front());
  try {
    r.value = evaluator.accuracy(net, episode);
  } catch (const std::exception& e) {
    r.value = 0.0;
    r.evaluator_error = e.what();
  }
  return r;
}

}  // namespace nasq
