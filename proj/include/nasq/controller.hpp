// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace nasq {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ControllerConfig {
  int hidden_units = 35;
  int lstm_layers = 2;
  int embedding_dim = 24;
  double learning_rate = 0.2;
  int batch_m = 5;
  double discount_gamma = 1.0;
  double baseline_decay = 0.95;
  double init_range = 0.08;

  void validate() const;
};

nlohmann::json to_json(const ControllerConfig& c);
ControllerConfig controller_config_from_json(const nlohmann::json& j);

// Which output head (and vocabulary) each decision step uses. Heads are
// shared by every step of the same kind, e.g. all "filter height" steps.
struct PolicyLayout {
  std::vector<int> vocab_sizes;  // per head kind
  std::vector<int> step_kinds;   // per step, index into vocab_sizes

  std::size_t steps() const { return step_kinds.size(); }
  void validate() const;
};

// All controller weights in one flat buffer, addressed as named row-major
// tensors:
//   start                 1 x E      input at the first step
//   embed.<k>             V_k x E    previous-action embedding, per kind
//   lstm.<l>.W            4H x (I_l + H), gate order i, f, g, o
//   lstm.<l>.b            1 x 4H
//   head.<k>.W            V_k x H
//   head.<k>.b            1 x V_k
class PolicyParameters {
 public:
  struct Tensor {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
  };

  PolicyParameters() = default;
  // All-zero parameters.
  PolicyParameters(const PolicyLayout& layout, const ControllerConfig& config);

  void init_uniform(double range, Rng& rng);

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  const Tensor& tensor(const std::string& name) const;
  std::span<double> view(const Tensor& t) { return std::span(data_).subspan(t.offset, t.size()); }
  std::span<const double> view(const Tensor& t) const {
    return std::span(data_).subspan(t.offset, t.size());
  }

  const PolicyLayout& layout() const { return layout_; }
  int hidden() const { return hidden_; }
  int embedding() const { return embedding_; }
  int lstm_layers() const { return layers_; }

  bool same_shape(const PolicyParameters& other) const;
  bool operator==(const PolicyParameters& other) const {
    return same_shape(other) && data_ == other.data_;
  }

 private:
  PolicyLayout layout_;
  int hidden_ = 0;
  int embedding_ = 0;
  int layers_ = 0;
  std::vector<Tensor> tensors_;
  std::vector<double> data_;
};

nlohmann::json to_json(const PolicyParameters& p);
// Throws ConfigError if the stored tensors do not match the expected shape.
void load_parameters(PolicyParameters& into, const nlohmann::json& j);

struct Trajectory {
  std::vector<int> tokens;
  std::vector<double> log_probs;
  double reward = 0.0;
};

Trajectory sample_trajectory(const PolicyParameters& params, Rng& rng);

// Per-step action distributions when the policy is fed tokens (the first
// tokens.size() steps are evaluated; a shorter prefix is allowed).
std::vector<std::vector<double>> step_distributions(const PolicyParameters& params,
                                                    std::span<const int> tokens);

// Monte Carlo policy gradient with a baseline:
//   (1/m) sum_k sum_t gamma^(T-t) grad log pi(a_t | a_<t) (R_k - b)
// returned in the same layout as params. Throws std::invalid_argument on a
// non-finite reward or mismatched trajectory lengths.
PolicyParameters policy_gradient(const PolicyParameters& params,
                                 std::span<const Trajectory> batch, double baseline,
                                 double gamma);

// The scalar whose gradient policy_gradient returns.
double surrogate_objective(const PolicyParameters& params, std::span<const Trajectory> batch,
                           double baseline, double gamma);

// Gradient ascent: params += learning_rate * gradient.
void apply_update(PolicyParameters& params, const PolicyParameters& gradient,
                  double learning_rate);

// Exponential moving average: decay * b + (1 - decay) * mean(rewards).
double update_baseline(double baseline, std::span<const double> rewards, double decay);

}  // namespace nasq
