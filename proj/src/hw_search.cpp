// SPDX-License-Identifier: Apache-2.0
#include "nasq/hw_search.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "nasq/error.hpp"
#include "nasq/json_util.hpp"

namespace nasq {

void Specification::validate() const {
  if (max_luts < 1) throw ConfigError("spec: rL must be >= 1");
  if (!(min_fps > 0) || !std::isfinite(min_fps)) throw ConfigError("spec: rT must be > 0");
  if (!(clock_hz > 0) || !std::isfinite(clock_hz)) throw ConfigError("spec: clock_hz must be > 0");
}

std::int64_t Specification::cycle_budget() const {
  const double cycles = std::floor(clock_hz / min_fps);
  if (cycles >= static_cast<double>(std::numeric_limits<std::int64_t>::max())) {
    return std::numeric_limits<std::int64_t>::max();
  }
  return static_cast<std::int64_t>(cycles);
}

nlohmann::json to_json(const Specification& spec) {
  return {{"rL", spec.max_luts}, {"rT", spec.min_fps}, {"clock_hz", spec.clock_hz}};
}

Specification spec_from_json(const nlohmann::json& j) {
  constexpr std::string_view ctx = "spec";
  require_known_keys(j, {"rL", "rT", "clock_hz"}, ctx);
  Specification s;
  s.max_luts = get_as<std::int64_t>(j, "rL", ctx);
  s.min_fps = get_as<double>(j, "rT", ctx);
  s.clock_hz = get_or<double>(j, "clock_hz", s.clock_hz, ctx);
  s.validate();
  return s;
}

LayerTilings enumerate_tilings(const ChildNetwork& net, std::size_t layer,
                               const QceCostLibrary& lib) {
  const auto& shape = net.shapes[layer];
  const auto& l = net.layers[layer];
  const ActFormat prev = incoming_format(net, layer);
  LayerTilings t;
  t.all.reserve(static_cast<std::size_t>(shape.out_channels) * shape.in_channels);
  for (int tn = 1; tn <= shape.out_channels; ++tn) {
    for (int tm = 1; tm <= shape.in_channels; ++tm) {
      const TileConfig tile{tn, tm};
      t.all.push_back({tile,
                       {lut_cost(shape, l.quant, prev, tile, lib),
                        latency_cycles(shape, l.arch, tile)}});
    }
  }
  std::vector<std::array<std::int64_t, 2>> points;
  points.reserve(t.all.size());
  for (const auto& o : t.all) points.push_back({o.cost.lut, o.cost.lat});
  for (std::size_t idx : pareto_filter<2>(points)) t.frontier.push_back(t.all[idx]);
  return t;
}

std::vector<TilingOption> single_layer_solutions(const LayerTilings& tilings,
                                                 std::int64_t max_luts, std::int64_t max_cycles) {
  // frontier is sorted by lut ascending and therefore lat descending, so the
  // admissible options form one contiguous run.
  const auto& f = tilings.frontier;
  const auto lut_end = std::upper_bound(
      f.begin(), f.end(), max_luts,
      [](std::int64_t v, const TilingOption& o) { return v < o.cost.lut; });
  const auto lat_begin = std::partition_point(
      f.begin(), lut_end, [&](const TilingOption& o) { return o.cost.lat > max_cycles; });
  return {lat_begin, lut_end};
}

std::vector<TilingOption> single_layer_solutions(const LayerTilings& tilings,
                                                 std::int64_t max_luts, double rt,
                                                 double clock_hz) {
  if (!(rt > 0) || max_luts < 0) return {};
  const double cycles = std::floor(clock_hz / rt);
  const auto limit = cycles >= 9.2e18 ? std::numeric_limits<std::int64_t>::max()
                                      : static_cast<std::int64_t>(cycles);
  return single_layer_solutions(tilings, max_luts, limit);
}

double remaining_throughput(double min_fps, std::int64_t spent_cycles, double clock_hz) {
  const double slack = 1.0 / min_fps - static_cast<double>(spent_cycles) / clock_hz;
  if (slack <= 0) return 0.0;
  return 1.0 / slack;
}

namespace {

bool witness_less(const PartialSolution& a, const PartialSolution& b) {
  return std::forward_as_tuple(a.f1, a.f2, a.f3) < std::forward_as_tuple(b.f1, b.f2, b.f3) ||
         (std::forward_as_tuple(a.f1, a.f2, a.f3) == std::forward_as_tuple(b.f1, b.f2, b.f3) &&
          std::forward_as_tuple(a.partition_starts.size(), a.tiles, a.partition_starts) <
              std::forward_as_tuple(b.partition_starts.size(), b.tiles, b.partition_starts));
}

}  // namespace

FrontierSet reduce_frontier(FrontierSet candidates) {
  std::sort(candidates.begin(), candidates.end(), witness_less);
  std::vector<std::array<std::int64_t, 3>> points;
  points.reserve(candidates.size());
  for (const auto& c : candidates) points.push_back(c.objectives());
  FrontierSet out;
  for (std::size_t idx : pareto_filter<3>(points)) out.push_back(std::move(candidates[idx]));
  return out;
}

FrontierSet dp_search(const ChildNetwork& net, const Specification& spec,
                      const QceCostLibrary& lib) {
  spec.validate();
  const std::int64_t budget = spec.cycle_budget();
  FrontierSet frontier(1);  // the empty solution, f1 = f2 = f3 = 0

  for (std::size_t l = 0; l < net.depth(); ++l) {
    const LayerTilings tilings = enumerate_tilings(net, l, lib);
    FrontierSet next;
    for (const auto& s : frontier) {
      // Join the last partition: it keeps its LUT budget remainder, and its
      // latency may grow up to whatever the earlier partitions left over.
      if (l > 0) {
        for (const auto& o :
             single_layer_solutions(tilings, spec.max_luts - s.f1, budget - s.f3)) {
          PartialSolution e = s;
          e.tiles.push_back(o.tile);
          e.f1 = s.f1 + o.cost.lut;
          e.f2 = s.f3 + std::max(s.f2 - s.f3, o.cost.lat);
          next.push_back(std::move(e));
        }
      }
      // Open a new partition with the full device.
      for (const auto& o : single_layer_solutions(tilings, spec.max_luts, budget - s.f2)) {
        PartialSolution e = s;
        e.tiles.push_back(o.tile);
        e.partition_starts.push_back(static_cast<int>(l));
        e.f1 = o.cost.lut;
        e.f3 = s.f2;
        e.f2 = s.f2 + o.cost.lat;
        next.push_back(std::move(e));
      }
    }
    frontier = reduce_frontier(std::move(next));
    if (frontier.empty()) break;
  }
  return frontier;
}

std::uint64_t hardware_space_size(const ChildNetwork& net) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (net.depth() == 0) return 0;
  std::uint64_t size = net.depth() - 1 >= 64 ? kMax : std::uint64_t{1} << (net.depth() - 1);
  for (const auto& s : net.shapes) {
    const auto f = static_cast<std::uint64_t>(s.in_channels) *
                   static_cast<std::uint64_t>(s.out_channels);
    if (size > kMax / f) return kMax;
    size *= f;
  }
  return size;
}

BruteForceResult brute_force(const ChildNetwork& net, const Specification& spec,
                             const QceCostLibrary& lib, std::uint64_t guard) {
  spec.validate();
  const std::size_t L = net.depth();
  if (L == 0) return {};
  if (L > 20 || hardware_space_size(net) > guard) {
    throw ConfigError("brute_force: hardware space exceeds guard of " + std::to_string(guard));
  }
  std::vector<std::vector<TilingOption>> options;
  for (std::size_t l = 0; l < L; ++l) options.push_back(enumerate_tilings(net, l, lib).all);

  const std::int64_t budget = spec.cycle_budget();
  const std::uint32_t masks = 1u << (L - 1);

  struct Record {
    std::array<std::int64_t, 3> f;
    int parts;
    std::uint64_t combo;
    std::uint32_t mask;
  };
  std::vector<Record> feasible;
  BruteForceResult result;

  // Odometer over per-layer tilings; the last layer turns fastest so combo
  // order is lexicographic tile order.
  std::vector<std::size_t> pick(L, 0);
  const auto advance = [&] {
    for (std::size_t l = L; l-- > 0;) {
      if (++pick[l] < options[l].size()) return true;
      pick[l] = 0;
    }
    return false;
  };
  std::uint64_t combo = 0;
  do {
    for (std::uint32_t mask = 0; mask < masks; ++mask) {
      ++result.candidates;
      // Bit i of mask set: layer i + 1 starts a new partition.
      std::int64_t total = 0;
      std::int64_t max_lut = 0;
      std::int64_t part_lut = 0;
      std::int64_t part_lat = 0;
      for (std::size_t l = 0; l < L; ++l) {
        if (l > 0 && ((mask >> (l - 1)) & 1u)) {
          total += part_lat;
          max_lut = std::max(max_lut, part_lut);
          part_lut = 0;
          part_lat = 0;
        }
        const auto& c = options[l][pick[l]].cost;
        part_lut += c.lut;
        part_lat = std::max(part_lat, c.lat);
      }
      const std::int64_t f3 = total;
      total += part_lat;
      max_lut = std::max(max_lut, part_lut);
      if (max_lut <= spec.max_luts && total <= budget) {
        feasible.push_back({{part_lut, total, f3}, std::popcount(mask) + 1, combo, mask});
      }
    }
    ++combo;
  } while (advance());

  std::sort(feasible.begin(), feasible.end(), [](const Record& a, const Record& b) {
    return std::tie(a.f, a.parts, a.combo, a.mask) < std::tie(b.f, b.parts, b.combo, b.mask);
  });
  std::vector<std::array<std::int64_t, 3>> points;
  points.reserve(feasible.size());
  for (const auto& r : feasible) points.push_back(r.f);

  for (std::size_t idx : pareto_filter<3>(points)) {
    const Record& r = feasible[idx];
    PartialSolution s;
    std::uint64_t rest = r.combo;
    s.tiles.resize(L);
    for (std::size_t l = L; l-- > 0;) {
      s.tiles[l] = options[l][rest % options[l].size()].tile;
      rest /= options[l].size();
    }
    s.partition_starts.push_back(0);
    for (std::size_t l = 1; l < L; ++l) {
      if ((r.mask >> (l - 1)) & 1u) s.partition_starts.push_back(static_cast<int>(l));
    }
    s.f1 = r.f[0];
    s.f2 = r.f[1];
    s.f3 = r.f[2];
    result.frontier.push_back(std::move(s));
  }
  return result;
}

DesignSummary recost(const ChildNetwork& net, const PartialSolution& sol,
                     const QceCostLibrary& lib, double clock_hz) {
  if (sol.tiles.size() != net.depth() || sol.partition_starts.empty() ||
      sol.partition_starts.front() != 0) {
    throw ConfigError("recost: solution does not cover the network");
  }
  DesignSummary d;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    d.layer_costs.push_back({lut_cost(net.shapes[l], net.layers[l].quant, incoming_format(net, l),
                                      sol.tiles[l], lib),
                             latency_cycles(net.shapes[l], net.layers[l].arch, sol.tiles[l])});
  }
  for (std::size_t g = 0; g < sol.partition_starts.size(); ++g) {
    const auto first = static_cast<std::size_t>(sol.partition_starts[g]);
    const auto last = g + 1 < sol.partition_starts.size()
                          ? static_cast<std::size_t>(sol.partition_starts[g + 1])
                          : net.depth();
    if (last <= first || last > net.depth()) {
      throw ConfigError("recost: partition boundaries must be strictly increasing");
    }
    d.partition_costs.push_back(
        partition_cost(std::span(d.layer_costs).subspan(first, last - first)));
  }
  const LayerCost total = design_cost(d.partition_costs);
  d.lut = total.lut;
  d.cycles = total.lat;
  d.fps = throughput_fps(total.lat, clock_hz);
  return d;
}

bool satisfies(const DesignSummary& d, const Specification& spec) {
  return d.lut <= spec.max_luts && d.cycles <= spec.cycle_budget();
}

nlohmann::json solution_to_json(const ChildNetwork& net, const PartialSolution& sol,
                                const QceCostLibrary& lib, double clock_hz) {
  const DesignSummary d = recost(net, sol, lib, clock_hz);
  nlohmann::json parts = nlohmann::json::array();
  for (std::size_t g = 0; g < sol.partition_starts.size(); ++g) {
    const int first = sol.partition_starts[g];
    const int last = g + 1 < sol.partition_starts.size() ? sol.partition_starts[g + 1]
                                                         : static_cast<int>(net.depth());
    parts.push_back({{"first", first + 1}, {"last", last}});
  }
  nlohmann::json tiles = nlohmann::json::array();
  for (const auto& t : sol.tiles) tiles.push_back({{"tn", t.tn}, {"tm", t.tm}});
  return {{"partitions", std::move(parts)},
          {"tiles", std::move(tiles)},
          {"lut", d.lut},
          {"latency_cycles", d.cycles},
          {"throughput_fps", d.fps},
          {"f1", sol.f1},
          {"f2", sol.f2},
          {"f3", sol.f3}};
}

nlohmann::json solutions_to_json(const ChildNetwork& net, const FrontierSet& frontier,
                                 const Specification& spec, const QceCostLibrary& lib) {
  nlohmann::json sols = nlohmann::json::array();
  for (const auto& s : frontier) sols.push_back(solution_to_json(net, s, lib, spec.clock_hz));
  return {{"feasible", !frontier.empty()}, {"spec", to_json(spec)}, {"solutions", std::move(sols)}};
}

}  // namespace nasq
