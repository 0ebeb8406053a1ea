// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "nasq/hw_model.hpp"
#include "nasq/search_space.hpp"

namespace nasq {

// Design constraints: at most max_luts LUTs and at least min_fps frames/s.
struct Specification {
  std::int64_t max_luts = 30000;  // rL
  double min_fps = 1000;          // rT
  double clock_hz = 100e6;

  void validate() const;
  // Largest admissible total latency, floor(clock_hz / min_fps). All
  // feasibility checks compare integer cycle counts against this.
  std::int64_t cycle_budget() const;
};

nlohmann::json to_json(const Specification& spec);
Specification spec_from_json(const nlohmann::json& j);

struct TilingOption {
  TileConfig tile;
  LayerCost cost;
};

// Every (tn, tm) of one layer with its cost, in lexicographic tile order,
// plus the (lut, lat) Pareto frontier of those options sorted by lut.
struct LayerTilings {
  std::vector<TilingOption> all;
  std::vector<TilingOption> frontier;
};

LayerTilings enumerate_tilings(const ChildNetwork& net, std::size_t layer,
                               const QceCostLibrary& lib);

// Single-layer subproblem: options with lut <= max_luts and lat <= max_cycles,
// reduced to the (lut, lat) frontier. Empty when either budget is exhausted.
std::vector<TilingOption> single_layer_solutions(const LayerTilings& tilings,
                                                 std::int64_t max_luts, std::int64_t max_cycles);

// Throughput form of the same subproblem; rt <= 0 means no time is left.
std::vector<TilingOption> single_layer_solutions(const LayerTilings& tilings,
                                                 std::int64_t max_luts, double rt,
                                                 double clock_hz);

// Throughput the remaining layers must sustain once spent_cycles of the
// frame time are used: (1/rT - spent/clock)^-1, or <= 0 when exhausted.
double remaining_throughput(double min_fps, std::int64_t spent_cycles, double clock_hz);

// A (possibly partial) hardware implementation of the first k layers.
//   f1: LUTs of the last partition
//   f2: overall latency
//   f3: latency of all partitions but the last
struct PartialSolution {
  std::vector<int> partition_starts;  // 0-based first layer of each partition
  std::vector<TileConfig> tiles;      // one per layer
  std::int64_t f1 = 0;
  std::int64_t f2 = 0;
  std::int64_t f3 = 0;

  std::array<std::int64_t, 3> objectives() const { return {f1, f2, f3}; }
  std::size_t partitions() const { return partition_starts.size(); }
};

using FrontierSet = std::vector<PartialSolution>;

// Indices of the non-dominated points (minimisation). Equal points keep the
// first in lexicographic (point, index) order; output is in that order.
template <std::size_t K>
std::vector<std::size_t> pareto_filter(std::span<const std::array<std::int64_t, K>> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  // Anything that weakly dominates a point sorts before it.
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const auto& q = points[idx];
    const bool covered = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      const auto& p = points[k];
      for (std::size_t d = 0; d < K; ++d) {
        if (p[d] > q[d]) return false;
      }
      return true;
    });
    if (!covered) kept.push_back(idx);
  }
  return kept;
}

// Pareto reduction on (f1, f2, f3). Among equal triples the witness with
// fewer partitions, then lexicographically smaller tiles, survives.
FrontierSet reduce_frontier(FrontierSet candidates);

// Dynamic search over the hardware space: each layer either joins the last
// partition or opens a new one, pruning to the frontier after every layer.
// An empty result means no implementation satisfies spec.
FrontierSet dp_search(const ChildNetwork& net, const Specification& spec,
                      const QceCostLibrary& lib);

struct BruteForceResult {
  FrontierSet frontier;
  std::uint64_t candidates = 0;  // implementations enumerated
};

inline constexpr std::uint64_t kBruteForceGuard = 10'000'000;

// Exhaustive enumeration of partitions x tilings. Throws ConfigError when the
// space exceeds guard.
BruteForceResult brute_force(const ChildNetwork& net, const Specification& spec,
                             const QceCostLibrary& lib,
                             std::uint64_t guard = kBruteForceGuard);

// 2^(L-1) * prod M_i N_i, saturating at UINT64_MAX.
std::uint64_t hardware_space_size(const ChildNetwork& net);

struct DesignSummary {
  std::int64_t lut = 0;
  std::int64_t cycles = 0;
  double fps = 0.0;
  std::vector<LayerCost> layer_costs;
  std::vector<LayerCost> partition_costs;
};

// Recomputes a complete solution's cost from its structure alone.
DesignSummary recost(const ChildNetwork& net, const PartialSolution& sol,
                     const QceCostLibrary& lib, double clock_hz);

bool satisfies(const DesignSummary& d, const Specification& spec);

// {"feasible":..,"spec":..,"solutions":[{"partitions":[{"first":1,"last":2}],
//   "tiles":[{"tn":..,"tm":..}], "lut":..,"latency_cycles":..,"throughput_fps":..}]}
// Layer numbers in "partitions" are 1-based and inclusive.
nlohmann::json solutions_to_json(const ChildNetwork& net, const FrontierSet& frontier,
                                 const Specification& spec, const QceCostLibrary& lib);

nlohmann::json solution_to_json(const ChildNetwork& net, const PartialSolution& sol,
                                const QceCostLibrary& lib, double clock_hz);

}  // namespace nasq
