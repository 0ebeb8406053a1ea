// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nasq {

// Per-layer design parameters in controller step order: the six
// architecture choices followed by the four quantization choices.
enum class Param : int { N, Fh, Fw, Sh, Sw, Ps, Ai, Af, Wi, Wf };

inline constexpr int kParamCount = 10;
inline constexpr int kArchParamCount = 6;
inline constexpr int kQuantParamCount = 4;

std::string_view param_name(Param p);

struct LayerArch {
  int n = 0;   // filters
  int fh = 0;  // filter height
  int fw = 0;  // filter width
  int sh = 0;  // stride height
  int sw = 0;  // stride width
  int ps = 0;  // pooling size and stride

  bool operator==(const LayerArch&) const = default;
};

struct LayerQuant {
  int ai = 0;  // activation integer bits
  int af = 0;  // activation fractional bits
  int wi = 0;  // weight integer bits
  int wf = 0;  // weight fractional bits

  bool operator==(const LayerQuant&) const = default;
};

struct Layer {
  LayerArch arch;
  LayerQuant quant;

  bool operator==(const Layer&) const = default;
};

// Network input: feature map geometry and the fixed-point format of the
// incoming activations (pixels in [0,1) by default).
struct InputSpec {
  int channels = 3;
  int rows = 32;
  int cols = 32;
  int ai0 = 0;
  int af0 = 8;

  bool operator==(const InputSpec&) const = default;
};

// Derived geometry of one layer. in_* feed the convolution; out_rows and
// out_cols are after convolution and pooling.
struct LayerShape {
  int in_channels = 0;  // M
  int in_rows = 0;      // R
  int in_cols = 0;      // C
  int out_channels = 0; // N
  int out_rows = 0;
  int out_cols = 0;

  bool operator==(const LayerShape&) const = default;
};

struct SpaceConfig {
  std::array<std::vector<int>, kParamCount> choices;
  int num_layers = 6;
  InputSpec input;

  // The per-layer value lists used in the CIFAR-10 experiments.
  static SpaceConfig defaults();

  const std::vector<int>& values(Param p) const {
    return choices[static_cast<std::size_t>(p)];
  }
  std::size_t vocab(Param p) const { return values(p).size(); }

  // Throws ConfigError on an empty list, non-positive architecture value,
  // negative bit count, L < 1, or non-positive input geometry.
  void validate() const;
};

struct ChildNetwork {
  std::vector<Layer> layers;
  InputSpec input;
  std::vector<LayerShape> shapes;

  std::size_t depth() const { return layers.size(); }
  bool operator==(const ChildNetwork&) const = default;
};

struct SpaceSize {
  std::uint64_t arch = 1;   // per layer
  std::uint64_t quant = 1;  // per layer
};

// Parameter kind sampled at global step t (10 steps per layer).
inline Param param_at_step(std::size_t step) {
  return static_cast<Param>(step % kParamCount);
}

int get_param(const Layer& layer, Param p);
void set_param(Layer& layer, Param p, int value);

ChildNetwork decode_actions(std::span<const int> tokens, const SpaceConfig& config);
std::vector<int> encode_actions(const ChildNetwork& network, const SpaceConfig& config);

std::vector<LayerShape> infer_shapes(std::span<const Layer> layers, const InputSpec& input);

// Builds a network from layer records and fills in shapes.
ChildNetwork make_network(std::vector<Layer> layers, const InputSpec& input);

SpaceSize space_size(const SpaceConfig& config);

// Weights plus biases of the convolutional layers.
std::uint64_t param_count(const ChildNetwork& network);

// Network JSON: {"layers":[{"n",..,"wf"}...], "input":{...}}.
nlohmann::json to_json(const ChildNetwork& network);
ChildNetwork network_from_json(const nlohmann::json& j);

nlohmann::json to_json(const InputSpec& input);
InputSpec input_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SpaceConfig& config);
SpaceConfig space_from_json(const nlohmann::json& j);

}  // namespace nasq
