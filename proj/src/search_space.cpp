// SPDX-License-Identifier: Apache-2.0
#include "nasq/search_space.hpp"

#include <algorithm>
#include <string>

#include "nasq/error.hpp"
#include "nasq/json_util.hpp"

namespace nasq {
namespace {

constexpr std::array<std::string_view, kParamCount> kNames = {"n",  "fh", "fw", "sh", "sw",
                                                              "ps", "ai", "af", "wi", "wf"};

int& field(Layer& layer, Param p) {
  switch (p) {
    case Param::N: return layer.arch.n;
    case Param::Fh: return layer.arch.fh;
    case Param::Fw: return layer.arch.fw;
    case Param::Sh: return layer.arch.sh;
    case Param::Sw: return layer.arch.sw;
    case Param::Ps: return layer.arch.ps;
    case Param::Ai: return layer.quant.ai;
    case Param::Af: return layer.quant.af;
    case Param::Wi: return layer.quant.wi;
    case Param::Wf: return layer.quant.wf;
  }
  return layer.arch.n;
}

int field(const Layer& layer, Param p) { return field(const_cast<Layer&>(layer), p); }

bool is_arch(Param p) { return static_cast<int>(p) < kArchParamCount; }

int ceil_div(int a, int b) { return (a + b - 1) / b; }

void check_layer(const Layer& layer, std::size_t index) {
  for (int k = 0; k < kParamCount; ++k) {
    const auto p = static_cast<Param>(k);
    const int v = field(layer, p);
    if (is_arch(p) ? v < 1 : v < 0) {
      throw ConfigError("layer " + std::to_string(index) + ": " + std::string(param_name(p)) +
                        " out of range (" + std::to_string(v) + ")");
    }
  }
}

}  // namespace

int get_param(const Layer& layer, Param p) { return field(layer, p); }
void set_param(Layer& layer, Param p, int value) { field(layer, p) = value; }

std::string_view param_name(Param p) { return kNames[static_cast<std::size_t>(p)]; }

SpaceConfig SpaceConfig::defaults() {
  SpaceConfig c;
  c.choices = {{
      {24, 36, 48, 64},
      {1, 3, 5, 7},
      {1, 3, 5, 7},
      {1, 2, 3},
      {1, 2, 3},
      {1, 2},
      {0, 1, 2, 3},
      {0, 1, 2, 3, 4, 5, 6},
      {0, 1, 2, 3},
      {0, 1, 2, 3, 4, 5, 6},
  }};
  c.num_layers = 6;
  return c;
}

void SpaceConfig::validate() const {
  if (num_layers < 1) throw ConfigError("space: num_layers must be >= 1");
  if (input.channels < 1 || input.rows < 1 || input.cols < 1) {
    throw ConfigError("space: input shape must be positive");
  }
  if (input.ai0 < 0 || input.af0 < 0) throw ConfigError("space: input format bits must be >= 0");
  for (int k = 0; k < kParamCount; ++k) {
    const auto p = static_cast<Param>(k);
    const auto& list = values(p);
    if (list.empty()) {
      throw ConfigError("space: value list for " + std::string(param_name(p)) + " is empty");
    }
    for (int v : list) {
      if (is_arch(p) ? v < 1 : v < 0) {
        throw ConfigError("space: invalid value " + std::to_string(v) + " for " +
                          std::string(param_name(p)));
      }
    }
  }
}

std::vector<LayerShape> infer_shapes(std::span<const Layer> layers, const InputSpec& input) {
  std::vector<LayerShape> shapes;
  shapes.reserve(layers.size());
  int channels = input.channels;
  int rows = input.rows;
  int cols = input.cols;
  for (const auto& layer : layers) {
    LayerShape s;
    s.in_channels = channels;
    s.in_rows = rows;
    s.in_cols = cols;
    s.out_channels = layer.arch.n;
    // "same" padding: only the stride shrinks the map.
    const int conv_rows = ceil_div(rows, layer.arch.sh);
    const int conv_cols = ceil_div(cols, layer.arch.sw);
    s.out_rows = std::max(1, conv_rows / layer.arch.ps);
    s.out_cols = std::max(1, conv_cols / layer.arch.ps);
    shapes.push_back(s);
    channels = s.out_channels;
    rows = s.out_rows;
    cols = s.out_cols;
  }
  return shapes;
}

ChildNetwork make_network(std::vector<Layer> layers, const InputSpec& input) {
  for (std::size_t i = 0; i < layers.size(); ++i) check_layer(layers[i], i);
  ChildNetwork net;
  net.input = input;
  net.shapes = infer_shapes(layers, input);
  net.layers = std::move(layers);
  return net;
}

ChildNetwork decode_actions(std::span<const int> tokens, const SpaceConfig& config) {
  const std::size_t expected = static_cast<std::size_t>(kParamCount) * config.num_layers;
  if (tokens.size() != expected) {
    throw DecodeError(tokens.size(), "expected " + std::to_string(expected) + " tokens, got " +
                                         std::to_string(tokens.size()));
  }
  std::vector<Layer> layers(static_cast<std::size_t>(config.num_layers));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Param p = param_at_step(t);
    const auto& list = config.values(p);
    const int idx = tokens[t];
    if (idx < 0 || static_cast<std::size_t>(idx) >= list.size()) {
      throw DecodeError(t, "index " + std::to_string(idx) + " out of range for " +
                               std::string(param_name(p)) + " (" + std::to_string(list.size()) +
                               " choices)");
    }
    field(layers[t / kParamCount], p) = list[static_cast<std::size_t>(idx)];
  }
  return make_network(std::move(layers), config.input);
}

std::vector<int> encode_actions(const ChildNetwork& network, const SpaceConfig& config) {
  if (network.depth() != static_cast<std::size_t>(config.num_layers)) {
    throw DecodeError(0, "network depth " + std::to_string(network.depth()) +
                             " does not match num_layers " + std::to_string(config.num_layers));
  }
  std::vector<int> tokens;
  tokens.reserve(network.depth() * kParamCount);
  for (std::size_t i = 0; i < network.depth(); ++i) {
    for (int k = 0; k < kParamCount; ++k) {
      const auto p = static_cast<Param>(k);
      const auto& list = config.values(p);
      const int v = field(network.layers[i], p);
      const auto it = std::find(list.begin(), list.end(), v);
      if (it == list.end()) {
        throw DecodeError(tokens.size(), std::string(param_name(p)) + "=" + std::to_string(v) +
                                             " is not an allowed value");
      }
      tokens.push_back(static_cast<int>(it - list.begin()));
    }
  }
  return tokens;
}

SpaceSize space_size(const SpaceConfig& config) {
  SpaceSize s;
  for (int k = 0; k < kParamCount; ++k) {
    const auto p = static_cast<Param>(k);
    (is_arch(p) ? s.arch : s.quant) *= config.vocab(p);
  }
  return s;
}

std::uint64_t param_count(const ChildNetwork& network) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < network.depth(); ++i) {
    const auto& a = network.layers[i].arch;
    const std::uint64_t n = static_cast<std::uint64_t>(a.n);
    const std::uint64_t m = static_cast<std::uint64_t>(network.shapes[i].in_channels);
    total += n * m * static_cast<std::uint64_t>(a.fh) * static_cast<std::uint64_t>(a.fw) + n;
  }
  return total;
}

nlohmann::json to_json(const InputSpec& input) {
  return {{"channels", input.channels},
          {"rows", input.rows},
          {"cols", input.cols},
          {"ai0", input.ai0},
          {"af0", input.af0}};
}

InputSpec input_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"channels", "rows", "cols", "ai0", "af0"}, "input");
  InputSpec in;
  in.channels = get_or<int>(j, "channels", in.channels, "input");
  in.rows = get_or<int>(j, "rows", in.rows, "input");
  in.cols = get_or<int>(j, "cols", in.cols, "input");
  in.ai0 = get_or<int>(j, "ai0", in.ai0, "input");
  in.af0 = get_or<int>(j, "af0", in.af0, "input");
  if (in.channels < 1 || in.rows < 1 || in.cols < 1 || in.ai0 < 0 || in.af0 < 0) {
    throw ConfigError("input: shape must be positive and format bits non-negative");
  }
  return in;
}

nlohmann::json to_json(const ChildNetwork& network) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : network.layers) {
    nlohmann::json l = nlohmann::json::object();
    for (int k = 0; k < kParamCount; ++k) {
      const auto p = static_cast<Param>(k);
      l[std::string(param_name(p))] = field(layer, p);
    }
    layers.push_back(std::move(l));
  }
  return {{"layers", std::move(layers)}, {"input", to_json(network.input)}};
}

ChildNetwork network_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"layers", "input"}, "network");
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty()) {
    throw ConfigError("network: \"layers\" must be a non-empty array");
  }
  InputSpec input;
  if (j.contains("input")) input = input_from_json(j.at("input"));
  std::vector<Layer> layers;
  const auto& arr = j.at("layers");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ctx = "network.layers[" + std::to_string(i) + "]";
    require_known_keys(arr[i], {"n", "fh", "fw", "sh", "sw", "ps", "ai", "af", "wi", "wf"}, ctx);
    Layer layer;
    for (int k = 0; k < kParamCount; ++k) {
      const auto p = static_cast<Param>(k);
      field(layer, p) = get_as<int>(arr[i], param_name(p), ctx);
    }
    layers.push_back(layer);
  }
  return make_network(std::move(layers), input);
}

nlohmann::json to_json(const SpaceConfig& config) {
  nlohmann::json values = nlohmann::json::object();
  for (int k = 0; k < kParamCount; ++k) {
    const auto p = static_cast<Param>(k);
    values[std::string(param_name(p))] = config.values(p);
  }
  return {{"num_layers", config.num_layers},
          {"input", to_json(config.input)},
          {"values", std::move(values)}};
}

SpaceConfig space_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"num_layers", "input", "values"}, "space");
  SpaceConfig c = SpaceConfig::defaults();
  c.num_layers = get_or<int>(j, "num_layers", c.num_layers, "space");
  if (j.contains("input")) c.input = input_from_json(j.at("input"));
  if (j.contains("values")) {
    const auto& v = j.at("values");
    require_known_keys(v, {"n", "fh", "fw", "sh", "sw", "ps", "ai", "af", "wi", "wf"},
                       "space.values");
    for (int k = 0; k < kParamCount; ++k) {
      const auto p = static_cast<Param>(k);
      if (v.contains(std::string(param_name(p)))) {
        c.choices[static_cast<std::size_t>(k)] =
            get_as<std::vector<int>>(v, param_name(p), "space.values");
      }
    }
  }
  c.validate();
  return c;
}

}  // namespace nasq
