// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "nasq/quantizer.hpp"
#include "nasq/search_space.hpp"

namespace nasq {

// Output/input channel parallelism of one single-layer accelerator.
struct TileConfig {
  int tn = 1;
  int tm = 1;

  auto operator<=>(const TileConfig&) const = default;
};

// Linear LUT model of a quantized computing engine (QCE): multiplier array,
// adder tree, truncator, plus a fixed per-engine overhead.
struct QceCostLibrary {
  double mult_coeff = 0.6;    // LUTs per (activation bit x weight bit) product cell
  double adder_coeff = 1.0;   // LUTs per adder output bit
  double trunc_coeff = 2.0;   // LUTs per truncator output bit
  double fixed_overhead = 300;

  void validate() const;
  static QceCostLibrary load(const std::filesystem::path& path);
};

nlohmann::json to_json(const QceCostLibrary& lib);
QceCostLibrary cost_library_from_json(const nlohmann::json& j);

struct ActFormat {
  int ai = 0;
  int af = 0;
  int bits() const { return ai + af; }
};

struct LayerCost {
  std::int64_t lut = 0;
  std::int64_t lat = 0;  // clock cycles

  bool operator==(const LayerCost&) const = default;
};

// qce(Tn, Tm, Ai', Af', Ai, Af, Wi, Wf). Rounds half up to whole LUTs.
std::int64_t qce_luts(int tn, int tm, ActFormat prev, const LayerQuant& q,
                      const QceCostLibrary& lib);

// Checked form: tile must satisfy 1 <= tn <= N and 1 <= tm <= M.
std::int64_t lut_cost(const LayerShape& shape, const LayerQuant& q, ActFormat prev,
                      TileConfig tile, const QceCostLibrary& lib);

// ceil(M/Tm) * ceil(N/Tn) * R * C * Fh * Fw over the layer's input extents.
std::int64_t latency_cycles(const LayerShape& shape, const LayerArch& arch, TileConfig tile);

// Layers pipelined inside one partition: LUTs add up, latency is the slowest stage.
LayerCost partition_cost(std::span<const LayerCost> layers);

// Partitions time-share the device: LUTs are the largest partition, latencies add.
LayerCost design_cost(std::span<const LayerCost> partitions);

double throughput_fps(std::int64_t total_cycles, double clock_hz);

// Activation format feeding layer i (the input format for i == 0).
ActFormat incoming_format(const ChildNetwork& net, std::size_t i);

// Bit-exact model of one QCE step: tn x tm products, an adder tree that
// aligns operands without loss, exact accumulation, and an output truncator
// into the layer's unsigned activation format.
struct QceFormats {
  FixedPointFormat act_in;
  FixedPointFormat weight;
  FixedPointFormat act_out;

  static QceFormats of(ActFormat prev, const LayerQuant& q) {
    return {FixedPointFormat::activation(prev.ai, prev.af), FixedPointFormat::weight(q.wi, q.wf),
            FixedPointFormat::activation(q.ai, q.af)};
  }
  int acc_frac_bits() const { return act_in.frac_bits + weight.frac_bits; }
};

// Accumulator registers hold exact codes scaled by 2^-acc_frac_bits.
struct QceAccumulators {
  std::vector<std::int64_t> codes;

  static QceAccumulators zeros(int tn) {
    return {std::vector<std::int64_t>(static_cast<std::size_t>(tn), 0)};
  }
};

struct QceStep {
  QceAccumulators acc;
  std::vector<double> outputs;  // truncated accumulator values, one per output channel
};

// acts: tm values; weights: row-major tn x tm. Throws QuantizeError if any
// input is off its grid or the tile dimensions disagree.
QceStep qce_simulate(std::span<const double> acts, std::span<const double> weights,
                     const QceFormats& formats, const QceAccumulators& state);

// The truncator alone: re-quantize an exact accumulator code.
double qce_truncate(std::int64_t acc_code, int acc_frac_bits, const FixedPointFormat& out);

}  // namespace nasq
