// SPDX-License-Identifier: Apache-2.0
#include "nasq/hw_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "nasq/json_util.hpp"

namespace nasq {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

int ceil_log2(std::uint64_t x) { return x <= 1 ? 0 : std::bit_width(x - 1); }

}  // namespace

void QceCostLibrary::validate() const {
  for (double c : {mult_coeff, adder_coeff, trunc_coeff, fixed_overhead}) {
    if (!std::isfinite(c) || c < 0) {
      throw ConfigError("cost library: coefficients must be finite and >= 0");
    }
  }
}

QceCostLibrary QceCostLibrary::load(const std::filesystem::path& path) {
  return cost_library_from_json(read_json_file(path));
}

nlohmann::json to_json(const QceCostLibrary& lib) {
  return {{"mult_coeff", lib.mult_coeff},
          {"adder_coeff", lib.adder_coeff},
          {"trunc_coeff", lib.trunc_coeff},
          {"fixed_overhead", lib.fixed_overhead}};
}

QceCostLibrary cost_library_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "cost_library";
  require_known_keys(j, {"mult_coeff", "adder_coeff", "trunc_coeff", "fixed_overhead"}, ctx);
  QceCostLibrary lib;
  lib.mult_coeff = get_or<double>(j, "mult_coeff", lib.mult_coeff, ctx);
  lib.adder_coeff = get_or<double>(j, "adder_coeff", lib.adder_coeff, ctx);
  lib.trunc_coeff = get_or<double>(j, "trunc_coeff", lib.trunc_coeff, ctx);
  lib.fixed_overhead = get_or<double>(j, "fixed_overhead", lib.fixed_overhead, ctx);
  lib.validate();
  return lib;
}

std::int64_t qce_luts(int tn, int tm, ActFormat prev, const LayerQuant& q,
                      const QceCostLibrary& lib) {
  const double cells = static_cast<double>(tn) * tm;
  const int act_bits = prev.bits();
  const int weight_bits = q.wi + q.wf;
  const int acc_bits = act_bits + weight_bits + ceil_log2(static_cast<std::uint64_t>(tn) * tm);
  const double raw = lib.mult_coeff * cells * act_bits * weight_bits +
                     lib.adder_coeff * (cells - 1) * acc_bits +
                     lib.trunc_coeff * (q.ai + q.af) + lib.fixed_overhead;
  return static_cast<std::int64_t>(std::floor(raw + 0.5));
}

std::int64_t lut_cost(const LayerShape& shape, const LayerQuant& q, ActFormat prev,
                      TileConfig tile, const QceCostLibrary& lib) {
  if (tile.tn < 1 || tile.tn > shape.out_channels || tile.tm < 1 ||
      tile.tm > shape.in_channels) {
    throw ConfigError("tile (" + std::to_string(tile.tn) + "," + std::to_string(tile.tm) +
                      ") outside [1," + std::to_string(shape.out_channels) + "]x[1," +
                      std::to_string(shape.in_channels) + "]");
  }
  return qce_luts(tile.tn, tile.tm, prev, q, lib);
}

std::int64_t latency_cycles(const LayerShape& shape, const LayerArch& arch, TileConfig tile) {
  return ceil_div(shape.in_channels, tile.tm) * ceil_div(shape.out_channels, tile.tn) *
         std::int64_t{shape.in_rows} * shape.in_cols * arch.fh * arch.fw;
}

LayerCost partition_cost(std::span<const LayerCost> layers) {
  if (layers.empty()) throw std::invalid_argument("partition_cost: empty partition");
  LayerCost c;
  for (const auto& l : layers) {
    c.lut += l.lut;
    c.lat = std::max(c.lat, l.lat);
  }
  return c;
}

LayerCost design_cost(std::span<const LayerCost> partitions) {
  if (partitions.empty()) throw std::invalid_argument("design_cost: no partitions");
  LayerCost c;
  for (const auto& p : partitions) {
    c.lut = std::max(c.lut, p.lut);
    c.lat += p.lat;
  }
  return c;
}

double throughput_fps(std::int64_t total_cycles, double clock_hz) {
  return clock_hz / static_cast<double>(total_cycles);
}

ActFormat incoming_format(const ChildNetwork& net, std::size_t i) {
  if (i == 0) return {net.input.ai0, net.input.af0};
  const auto& q = net.layers[i - 1].quant;
  return {q.ai, q.af};
}

double qce_truncate(std::int64_t acc_code, int acc_frac_bits, const FixedPointFormat& out) {
  const int shift = acc_frac_bits - out.frac_bits;
  std::int64_t code;
  if (shift <= 0) {
    // Widening the fraction is a pure LSB extension.
    const std::int64_t limit = std::numeric_limits<std::int64_t>::max() >> -shift;
    code = std::clamp(acc_code, -limit, limit) * (std::int64_t{1} << -shift);
  } else {
    const std::uint64_t mag = acc_code < 0 ? 0 - static_cast<std::uint64_t>(acc_code)
                                           : static_cast<std::uint64_t>(acc_code);
    const std::uint64_t half = std::uint64_t{1} << (shift - 1);
    const std::uint64_t rem = mag & ((std::uint64_t{1} << shift) - 1);
    std::uint64_t q = mag >> shift;
    if (rem >= half) ++q;
    code = acc_code < 0 ? -static_cast<std::int64_t>(q) : static_cast<std::int64_t>(q);
  }
  code = std::clamp(code, out.min_code(), out.max_code());
  return std::ldexp(static_cast<double>(code), -out.frac_bits);
}

QceStep qce_simulate(std::span<const double> acts, std::span<const double> weights,
                     const QceFormats& formats, const QceAccumulators& state) {
  const std::size_t tm = acts.size();
  const std::size_t tn = state.codes.size();
  if (tm == 0 || tn == 0 || weights.size() != tn * tm) {
    throw QuantizeError("qce_simulate: tile shape mismatch");
  }
  std::vector<std::int64_t> a(tm);
  for (std::size_t m = 0; m < tm; ++m) {
    if (!on_grid(acts[m], formats.act_in)) {
      throw QuantizeError("qce_simulate: activation " + std::to_string(m) + " is off-grid");
    }
    a[m] = static_cast<std::int64_t>(std::ldexp(acts[m], formats.act_in.frac_bits));
  }

  QceStep step{state, std::vector<double>(tn)};
  const int acc_frac = formats.acc_frac_bits();
  for (std::size_t n = 0; n < tn; ++n) {
    // Products carry af' + wf fractional bits, so the tree sums them directly.
    std::int64_t tree = 0;
    for (std::size_t m = 0; m < tm; ++m) {
      const double w = weights[n * tm + m];
      if (!on_grid(w, formats.weight)) {
        throw QuantizeError("qce_simulate: weight (" + std::to_string(n) + "," +
                            std::to_string(m) + ") is off-grid");
      }
      tree += a[m] * static_cast<std::int64_t>(std::ldexp(w, formats.weight.frac_bits));
    }
    step.acc.codes[n] += tree;
    step.outputs[n] = qce_truncate(step.acc.codes[n], acc_frac, formats.act_out);
  }
  return step;
}

}  // namespace nasq
