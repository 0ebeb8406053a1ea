// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <set>

#include "nasq/error.hpp"
#include "nasq/hw_search.hpp"
#include "oracles.hpp"

using namespace nasq;

namespace {

ChildNetwork tiny(int m, int n, int r, int c) {
  InputSpec in;
  in.channels = m;
  in.rows = r;
  in.cols = c;
  return make_network({Layer{{n, 1, 1, 1, 1, 1}, {1, 2, 1, 2}}}, in);
}

ChildNetwork two_layer(int m1, int n1, int n2) {
  InputSpec in;
  in.channels = m1;
  in.rows = in.cols = 4;
  return make_network({Layer{{n1, 3, 3, 1, 1, 1}, {1, 2, 1, 2}},
                       Layer{{n2, 1, 1, 1, 1, 1}, {1, 2, 1, 2}}},
                      in);
}

Specification random_spec(std::mt19937_64& rng, const ChildNetwork& net,
                          const QceCostLibrary& lib) {
  // Budgets drawn around the network's own cost range so both verdicts occur.
  std::int64_t lut_lo = 0, lut_hi = 0, lat_lo = 0, lat_hi = 0;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto t = enumerate_tilings(net, i, lib);
    lut_lo = std::max(lut_lo, t.frontier.front().cost.lut);
    lut_hi += t.frontier.back().cost.lut;
    lat_lo += t.frontier.back().cost.lat;
    lat_hi += t.frontier.front().cost.lat;
  }
  Specification s;
  s.clock_hz = 1e6;
  s.max_luts = std::uniform_int_distribution<std::int64_t>(lut_lo - 50, lut_hi + 50)(rng);
  if (s.max_luts < 1) s.max_luts = 1;
  const auto cycles = std::uniform_int_distribution<std::int64_t>(
      std::max<std::int64_t>(1, lat_lo / 2), lat_hi + 1)(rng);
  s.min_fps = s.clock_hz / static_cast<double>(cycles);
  return s;
}

}  // namespace

TEST_CASE("specification JSON and budget") {
  const auto s = spec_from_json({{"rL", 30000}, {"rT", 1000}, {"clock_hz", 100000000}});
  CHECK(s.max_luts == 30000);
  CHECK(s.cycle_budget() == 100000);
  CHECK_THROWS_AS(spec_from_json({{"rL", 0}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"rT", 0}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"clock_hz", -1}}), ConfigError);
  CHECK_THROWS_AS(spec_from_json({{"rl", 5}}), ConfigError);
}

TEST_CASE("budget inversion") {
  CHECK(remaining_throughput(1000, 50000, 1e8) == 2000.0);
  CHECK(remaining_throughput(1000, 100000, 1e8) <= 0.0);
  CHECK(remaining_throughput(1000, 200000, 1e8) <= 0.0);
}

TEST_CASE("single-layer subproblem") {
  const QceCostLibrary lib;
  const auto net = tiny(2, 2, 2, 2);
  const auto t = enumerate_tilings(net, 0, lib);
  CHECK(t.all.size() == 4);
  CHECK(single_layer_solutions(t, 0, 1e9, 1e8).empty());
  CHECK(single_layer_solutions(t, 1000000, 0.0, 1e8).empty());
  CHECK(single_layer_solutions(t, 1000000, -5.0, 1e8).empty());

  // Generous budgets: the 2-D frontier over all four tilings.
  std::vector<std::array<std::int64_t, 2>> pts;
  for (const auto& o : t.all) pts.push_back({o.cost.lut, o.cost.lat});
  std::set<std::array<std::int64_t, 2>> want;
  for (const auto& p : pts) {
    bool dominated = false;
    for (const auto& q : pts) {
      if (q != p && q[0] <= p[0] && q[1] <= p[1]) dominated = true;
    }
    if (!dominated) want.insert(p);
  }
  std::set<std::array<std::int64_t, 2>> got;
  for (const auto& o : single_layer_solutions(t, 1000000, 1.0, 1e8)) {
    got.insert({o.cost.lut, o.cost.lat});
  }
  CHECK(got == want);
}

TEST_CASE("single-layer subproblem respects both budgets") {
  const QceCostLibrary lib;
  std::mt19937_64 rng(12);
  for (int i = 0; i < 300; ++i) {
    const auto net = oracle::random_small_network(rng, 1, 16, 8);
    const auto t = enumerate_tilings(net, 0, lib);
    const auto max_luts = std::uniform_int_distribution<std::int64_t>(0, 3000)(rng);
    const auto max_cycles = std::uniform_int_distribution<std::int64_t>(0, 5000)(rng);
    std::set<std::pair<std::int64_t, std::int64_t>> want;
    std::vector<std::pair<std::int64_t, std::int64_t>> ok;
    for (const auto& o : t.all) {
      if (o.cost.lut <= max_luts && o.cost.lat <= max_cycles) ok.push_back({o.cost.lut, o.cost.lat});
    }
    for (const auto& p : ok) {
      bool dominated = false;
      for (const auto& q : ok) {
        if (q != p && q.first <= p.first && q.second <= p.second) dominated = true;
      }
      if (!dominated) want.insert(p);
    }
    std::set<std::pair<std::int64_t, std::int64_t>> got;
    for (const auto& o : single_layer_solutions(t, max_luts, max_cycles)) {
      got.insert({o.cost.lut, o.cost.lat});
    }
    CHECK(got == want);
  }
}

TEST_CASE("pareto filter") {
  using P2 = std::array<std::int64_t, 2>;
  const std::vector<P2> one{{3, 4}};
  CHECK(pareto_filter<2>(one) == std::vector<std::size_t>{0});

  const std::vector<P2> pts{{1, 2}, {2, 1}, {2, 2}};
  const auto kept = pareto_filter<2>(pts);
  std::set<P2> got;
  for (auto i : kept) got.insert(pts[i]);
  CHECK(got == std::set<P2>{{1, 2}, {2, 1}});

  const std::vector<P2> dup{{5, 5}, {5, 5}, {6, 1}};
  CHECK(pareto_filter<2>(dup).size() == 2);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::array<std::int64_t, 3>> p3;
    const int n = std::uniform_int_distribution<int>(1, 40)(rng);
    for (int i = 0; i < n; ++i) {
      p3.push_back({std::uniform_int_distribution<std::int64_t>(0, 6)(rng),
                    std::uniform_int_distribution<std::int64_t>(0, 6)(rng),
                    std::uniform_int_distribution<std::int64_t>(0, 6)(rng)});
    }
    const auto first = pareto_filter<3>(p3);
    std::vector<std::array<std::int64_t, 3>> reduced;
    for (auto i : first) reduced.push_back(p3[i]);
    const auto second = pareto_filter<3>(reduced);
    CHECK(second.size() == reduced.size());
    // Exactly the distinct non-dominated points.
    std::set<std::array<std::int64_t, 3>> want;
    for (const auto& p : p3) {
      bool dominated = false;
      for (const auto& q : p3) {
        if (q != p && q[0] <= p[0] && q[1] <= p[1] && q[2] <= p[2]) dominated = true;
      }
      if (!dominated) want.insert(p);
    }
    CHECK(std::set<std::array<std::int64_t, 3>>(reduced.begin(), reduced.end()) == want);
    CHECK(want.size() == reduced.size());
  }
}

TEST_CASE("infeasible under a one-LUT budget") {
  Specification s;
  s.max_luts = 1;
  CHECK(dp_search(two_layer(3, 4, 8), s, {}).empty());
  CHECK(brute_force(two_layer(3, 4, 8), s, {}).frontier.empty());
}

TEST_CASE("brute-force candidate counts") {
  Specification s;
  const auto r = brute_force(two_layer(3, 4, 8), s, {});
  CHECK(r.candidates == 768);
  CHECK(hardware_space_size(two_layer(3, 4, 8)) == 768);
  const auto single = brute_force(tiny(5, 7, 3, 3), s, {});
  CHECK(single.candidates == 35);
}

TEST_CASE("brute force refuses oversized spaces") {
  InputSpec in;
  in.channels = 64;
  const auto big = make_network({Layer{{64, 3, 3, 1, 1, 1}, {1, 2, 1, 2}},
                                 Layer{{64, 3, 3, 1, 1, 1}, {1, 2, 1, 2}}},
                                in);
  CHECK_THROWS_AS(brute_force(big, {}, {}), ConfigError);
}

TEST_CASE("dynamic search agrees with exhaustive enumeration") {
  const QceCostLibrary lib;
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int i = 0; i < 150; ++i) {
    const auto net = oracle::random_small_network(rng, 3, 6, 6);
    const auto spec = random_spec(rng, net, lib);
    const auto dp = dp_search(net, spec, lib);
    const auto bf = brute_force(net, spec, lib);
    const auto [ref, count] = oracle::hardware_frontier(net, spec, lib);
    CHECK(bf.candidates == count);
    CHECK(bf.candidates == hardware_space_size(net));
    CHECK(dp.empty() == bf.frontier.empty());
    CHECK(oracle::triples(dp) == ref);
    CHECK(oracle::triples(bf.frontier) == ref);
    if (!dp.empty()) ++feasible;
  }
  CHECK(feasible > 20);
  CHECK(feasible < 140);
}

TEST_CASE("every reported solution re-verifies its spec") {
  const QceCostLibrary lib;
  std::mt19937_64 rng(77);
  for (int i = 0; i < 100; ++i) {
    const auto net = oracle::random_small_network(rng, 3, 8, 8);
    const auto spec = random_spec(rng, net, lib);
    for (const auto& sol : dp_search(net, spec, lib)) {
      const auto d = recost(net, sol, lib, spec.clock_hz);
      CHECK(satisfies(d, spec));
      CHECK(d.lut <= spec.max_luts);
      CHECK(spec.clock_hz / static_cast<double>(d.cycles) >= spec.min_fps);
      CHECK(d.cycles == sol.f2);
      CHECK(sol.f3 <= sol.f2);
      CHECK(sol.partition_starts.front() == 0);
      CHECK(d.partition_costs.back().lut == sol.f1);
    }
  }
}

TEST_CASE("relaxing the spec never loses feasibility") {
  const QceCostLibrary lib;
  std::mt19937_64 rng(91);
  for (int i = 0; i < 100; ++i) {
    const auto net = oracle::random_small_network(rng, 3, 8, 8);
    const auto spec = random_spec(rng, net, lib);
    if (dp_search(net, spec, lib).empty()) continue;
    Specification looser = spec;
    looser.max_luts += 100;
    CHECK_FALSE(dp_search(net, looser, lib).empty());
    looser = spec;
    looser.min_fps *= 0.5;
    CHECK_FALSE(dp_search(net, looser, lib).empty());
  }
}

TEST_CASE("dominance survives extension") {
  // If s1 dominates s2, appending the same layer cost the same way keeps it so.
  std::mt19937_64 rng(5);
  auto r = [&](std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(0, hi)(rng); };
  for (int i = 0; i < 20000; ++i) {
    const std::int64_t f3b = r(100), f2b = f3b + r(100), f1b = r(100);
    const std::int64_t f1a = f1b - r(f1b), f3a = f3b - r(f3b);
    const std::int64_t f2a = std::max(f3a, f2b - r(f2b));
    const std::int64_t lut = r(50), lat = r(150);
    // Join the last partition.
    const auto join = [&](std::int64_t f1, std::int64_t f2, std::int64_t f3) {
      return std::array<std::int64_t, 3>{f1 + lut, f3 + std::max(f2 - f3, lat), f3};
    };
    const auto open = [&](std::int64_t, std::int64_t f2, std::int64_t) {
      return std::array<std::int64_t, 3>{lut, f2 + lat, f2};
    };
    const std::array<std::array<std::int64_t, 3>, 2> a{join(f1a, f2a, f3a), open(f1a, f2a, f3a)};
    const std::array<std::array<std::int64_t, 3>, 2> b{join(f1b, f2b, f3b), open(f1b, f2b, f3b)};
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(a[k][0] <= b[k][0]);
      CHECK(a[k][1] <= b[k][1]);
      CHECK(a[k][2] <= b[k][2]);
    }
  }
}

TEST_CASE("solutions JSON layout") {
  const QceCostLibrary lib;
  const auto net = two_layer(3, 4, 8);
  Specification spec;
  spec.max_luts = 100000;
  spec.min_fps = 1;
  const auto frontier = dp_search(net, spec, lib);
  REQUIRE_FALSE(frontier.empty());
  const auto j = solutions_to_json(net, frontier, spec, lib);
  CHECK(j.at("feasible") == true);
  CHECK(j.at("solutions").size() == frontier.size());
  for (const auto& s : j.at("solutions")) {
    CHECK(s.at("partitions").front().at("first") == 1);
    CHECK(s.at("partitions").back().at("last") == 2);
    CHECK(s.at("tiles").size() == 2);
    CHECK(s.at("lut").get<std::int64_t>() <= spec.max_luts);
    CHECK(s.at("throughput_fps").get<double>() ==
          doctest::Approx(spec.clock_hz / s.at("latency_cycles").get<double>()));
  }
}
