// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nasq/error.hpp"
#include "nasq/hw_search.hpp"
#include "nasq/search_space.hpp"

namespace nasq {

enum class AccuracySource { surrogate, external };

std::string_view to_string(AccuracySource s);

struct RewardSignal {
  double value = 0.0;
  bool feasible = false;
  AccuracySource source = AccuracySource::surrogate;
  std::optional<PartialSolution> hw_witness;
  // Set when the accuracy evaluator failed; value is then 0 but the design
  // may well be feasible.
  std::optional<std::string> evaluator_error;
};

// Saturating stand-in for trained test accuracy: more parameters and wider
// words never hurt, zero-bit weights or activations collapse to chance.
struct SurrogateConfig {
  double acc_floor = 0.10;
  double acc_ceiling_span = 0.80;
  double param_ref = 500000;

  void validate() const;
};

nlohmann::json to_json(const SurrogateConfig& c);
SurrogateConfig surrogate_config_from_json(const nlohmann::json& j);

double surrogate_accuracy(const ChildNetwork& net, const SurrogateConfig& config = {});

// Out-of-process trainer: one child process per request, one JSON line each way.
struct ProtocolConfig {
  std::string command;
  std::vector<std::string> args;
  double timeout_seconds = 3600;
  int max_workers = 1;

  void validate() const;
};

nlohmann::json to_json(const ProtocolConfig& c);
ProtocolConfig protocol_config_from_json(const nlohmann::json& j);

class ExternalEvaluatorError : public Error {
 public:
  enum class Kind { spawn_failed, timeout, nonzero_exit, malformed_response, out_of_range };

  ExternalEvaluatorError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(ExternalEvaluatorError::Kind k);

// Sends {"network": ..., "episode": n} and expects {"accuracy": x}, x in [0,1].
double external_evaluate(const ChildNetwork& net, const ProtocolConfig& config, int episode = 0);

class AccuracyEvaluator {
 public:
  virtual ~AccuracyEvaluator() = default;
  virtual double accuracy(const ChildNetwork& net, int episode) = 0;
  virtual AccuracySource source() const = 0;
};

class SurrogateEvaluator final : public AccuracyEvaluator {
 public:
  explicit SurrogateEvaluator(SurrogateConfig config = {}) : config_(config) {}
  double accuracy(const ChildNetwork& net, int) override {
    return surrogate_accuracy(net, config_);
  }
  AccuracySource source() const override { return AccuracySource::surrogate; }

 private:
  SurrogateConfig config_;
};

class ExternalEvaluator final : public AccuracyEvaluator {
 public:
  explicit ExternalEvaluator(ProtocolConfig config) : config_(std::move(config)) {}
  double accuracy(const ChildNetwork& net, int episode) override {
    return external_evaluate(net, config_, episode);
  }
  AccuracySource source() const override { return AccuracySource::external; }

 private:
  ProtocolConfig config_;
};

// Zero when no hardware implementation meets spec, the evaluator's accuracy
// otherwise. Evaluator exceptions are caught and reported through
// evaluator_error with a zero reward.
RewardSignal compute_reward(const ChildNetwork& net, const Specification& spec,
                            const QceCostLibrary& lib, AccuracyEvaluator& evaluator,
                            int episode = 0);

}  // namespace nasq
