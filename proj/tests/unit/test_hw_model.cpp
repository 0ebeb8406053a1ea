// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <vector>

#include "nasq/error.hpp"
#include "nasq/hw_model.hpp"
#include "oracles.hpp"

using namespace nasq;

namespace {

LayerShape shape(int m, int n, int r, int c) { return {m, r, c, n, r, c}; }

// Hand-coded cost formula with exact decimal coefficients, rounded half up.
std::int64_t lut_oracle(int tn, int tm, int act_bits, int w_bits, int out_bits,
                        const oracle::Rational& mult, const oracle::Rational& adder,
                        const oracle::Rational& trunc, const oracle::Rational& fixed) {
  const int cells = tn * tm;
  int log2 = 0;
  while ((1 << log2) < cells) ++log2;
  const int acc = act_bits + w_bits + log2;
  const oracle::Rational raw = mult * cells * act_bits * w_bits + adder * (cells - 1) * acc +
                               trunc * out_bits + fixed;
  const oracle::BigInt down = boost::multiprecision::numerator(raw) /
                              boost::multiprecision::denominator(raw);
  const oracle::Rational frac = raw - oracle::Rational(down);
  return static_cast<std::int64_t>(frac >= oracle::Rational(1, 2) ? down + 1 : down);
}

}  // namespace

TEST_CASE("degenerate QCE costs only its fixed overhead") {
  QceCostLibrary lib{0, 0, 0, 300};
  CHECK(qce_luts(1, 1, {0, 0}, {0, 0, 0, 0}, lib) == 300);
}

TEST_CASE("LUT example with unit coefficients") {
  QceCostLibrary lib{1, 1, 1, 0};
  CHECK(qce_luts(2, 2, {1, 3}, {1, 3, 1, 3}, lib) == 98);
  CHECK(lut_cost(shape(2, 2, 4, 4), {1, 3, 1, 3}, {1, 3}, {2, 2}, lib) == 98);
}

TEST_CASE("LUT cost matches the formula under the default library") {
  const QceCostLibrary lib;
  const oracle::Rational mult(6, 10), adder(1), trunc(2), fixed(300);
  std::mt19937_64 rng(4);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int i = 0; i < 5000; ++i) {
    const int tn = pick(1, 64), tm = pick(1, 64);
    const ActFormat prev{pick(0, 3), pick(0, 8)};
    const LayerQuant q{pick(0, 3), pick(0, 6), pick(0, 3), pick(0, 6)};
    CHECK(qce_luts(tn, tm, prev, q, lib) ==
          lut_oracle(tn, tm, prev.bits(), q.wi + q.wf, q.ai + q.af, mult, adder, trunc, fixed));
  }
}

TEST_CASE("LUT cost is monotone") {
  const QceCostLibrary lib;
  std::mt19937_64 rng(8);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int i = 0; i < 3000; ++i) {
    const int tn = pick(1, 32), tm = pick(1, 32);
    const ActFormat prev{pick(0, 3), pick(0, 6)};
    const LayerQuant q{pick(0, 3), pick(0, 6), pick(0, 3), pick(0, 6)};
    const auto base = qce_luts(tn, tm, prev, q, lib);
    CHECK(qce_luts(2 * tn, tm, prev, q, lib) > base);
    CHECK(qce_luts(tn + 1, tm, prev, q, lib) >= base);
    CHECK(qce_luts(tn, tm + 1, prev, q, lib) >= base);
    CHECK(qce_luts(tn, tm, {prev.ai + 1, prev.af}, q, lib) >= base);
    CHECK(qce_luts(tn, tm, {prev.ai, prev.af + 1}, q, lib) >= base);
    for (int f = 0; f < 4; ++f) {
      LayerQuant w = q;
      (f == 0 ? w.ai : f == 1 ? w.af : f == 2 ? w.wi : w.wf) += 1;
      CHECK(qce_luts(tn, tm, prev, w, lib) >= base);
    }
    CHECK(base >= static_cast<std::int64_t>(lib.fixed_overhead));
  }
}

TEST_CASE("tiles outside the layer are rejected") {
  const QceCostLibrary lib;
  const auto s = shape(3, 24, 32, 32);
  CHECK_THROWS_AS(lut_cost(s, {1, 3, 1, 3}, {0, 8}, {25, 1}, lib), ConfigError);
  CHECK_THROWS_AS(lut_cost(s, {1, 3, 1, 3}, {0, 8}, {1, 4}, lib), ConfigError);
  CHECK_THROWS_AS(lut_cost(s, {1, 3, 1, 3}, {0, 8}, {0, 1}, lib), ConfigError);
}

TEST_CASE("latency table") {
  struct Case {
    int m, n, r, c, fh, fw, tm, tn;
    std::int64_t want;
  };
  const Case cases[] = {
      {3, 24, 32, 32, 3, 3, 3, 8, 27648},
      {3, 24, 32, 32, 3, 3, 2, 5, 2 * 5 * 32 * 32 * 3 * 3},
      {3, 24, 32, 32, 3, 3, 3, 24, 32 * 32 * 3 * 3},
      {64, 48, 32, 32, 7, 5, 64, 48, 35840},
      {64, 48, 32, 32, 7, 5, 1, 1, 64LL * 48 * 32 * 32 * 35},
      {48, 48, 16, 16, 5, 5, 7, 5, 7 * 10 * 16 * 16 * 25},
      {1, 1, 1, 1, 1, 1, 1, 1, 1},
      {36, 64, 8, 8, 3, 1, 36, 1, 64 * 8 * 8 * 3},
      {5, 7, 3, 2, 1, 7, 2, 3, 3 * 3 * 3 * 2 * 7},
      {8, 8, 8, 8, 3, 3, 3, 3, 3 * 3 * 8 * 8 * 9},
      {24, 64, 32, 32, 7, 7, 24, 64, 32 * 32 * 49},
  };
  for (const auto& k : cases) {
    const LayerArch arch{k.n, k.fh, k.fw, 1, 1, 1};
    CHECK(latency_cycles(shape(k.m, k.n, k.r, k.c), arch, {k.tn, k.tm}) == k.want);
  }
}

TEST_CASE("larger tiles never slow a layer down") {
  std::mt19937_64 rng(2);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int i = 0; i < 2000; ++i) {
    const auto s = shape(pick(1, 64), pick(1, 64), pick(1, 32), pick(1, 32));
    const LayerArch a{s.out_channels, pick(1, 7), pick(1, 7), 1, 1, 1};
    const TileConfig t{pick(1, s.out_channels), pick(1, s.in_channels)};
    const auto base = latency_cycles(s, a, t);
    if (t.tn < s.out_channels) CHECK(latency_cycles(s, a, {t.tn + 1, t.tm}) <= base);
    if (t.tm < s.in_channels) CHECK(latency_cycles(s, a, {t.tn, t.tm + 1}) <= base);
    CHECK(base >= 1);
  }
}

TEST_CASE("partition and design aggregation") {
  const std::vector<LayerCost> one{{120, 40}};
  CHECK(partition_cost(one) == LayerCost{120, 40});
  CHECK(design_cost(one) == LayerCost{120, 40});

  std::vector<LayerCost> layers{{100, 30}, {200, 20}};
  CHECK(partition_cost(layers) == LayerCost{300, 30});
  std::swap(layers[0], layers[1]);
  CHECK(partition_cost(layers) == LayerCost{300, 30});

  const std::vector<LayerCost> parts{{300, 30}, {250, 45}};
  CHECK(design_cost(parts) == LayerCost{300, 75});
  const std::vector<LayerCost> equal(4, LayerCost{70, 9});
  CHECK(design_cost(equal) == LayerCost{70, 36});

  CHECK_THROWS(partition_cost({}));
  CHECK_THROWS(design_cost({}));
}

TEST_CASE("extreme partitionings bound the trade-off") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    std::vector<LayerCost> layers;
    const int L = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int l = 0; l < L; ++l) {
      layers.push_back({std::uniform_int_distribution<std::int64_t>(300, 5000)(rng),
                        std::uniform_int_distribution<std::int64_t>(1, 100000)(rng)});
    }
    const LayerCost whole = partition_cost(layers);
    const std::vector<LayerCost> as_one{whole};
    const LayerCost fused = design_cost(as_one);
    const LayerCost split = design_cost(layers);
    std::int64_t lut_sum = 0, lat_max = 0, lut_max = 0, lat_sum = 0;
    for (const auto& c : layers) {
      lut_sum += c.lut;
      lat_max = std::max(lat_max, c.lat);
      lut_max = std::max(lut_max, c.lut);
      lat_sum += c.lat;
    }
    CHECK(fused == LayerCost{lut_sum, lat_max});
    CHECK(split == LayerCost{lut_max, lat_sum});
  }
}

TEST_CASE("throughput conversion") {
  CHECK(throughput_fps(27648, 1e8) == doctest::Approx(3616.9).epsilon(0.1 / 3616.9));
  CHECK(throughput_fps(100000000, 1e8) == 1.0);
  CHECK(std::abs(throughput_fps(77339, 1e8) - 1293) <= 1.0);
}

TEST_CASE("QCE worked example") {
  const std::vector<double> acts{1.5, 0.5};
  const std::vector<double> weights{0.5, -0.25};
  const auto formats = QceFormats::of({1, 1}, {1, 2, 1, 2});
  const auto step = qce_simulate(acts, weights, formats, QceAccumulators::zeros(1));
  REQUIRE(step.outputs.size() == 1);
  CHECK(step.outputs[0] == 0.75);
  // 0.625 with 1 + 2 fractional bits.
  CHECK(step.acc.codes[0] == 5);
}

TEST_CASE("QCE zero inputs give zero outputs") {
  const auto formats = QceFormats::of({2, 3}, {2, 2, 1, 4});
  const std::vector<double> acts(3, 0.0);
  const std::vector<double> weights(6, 0.0);
  const auto step = qce_simulate(acts, weights, formats, QceAccumulators::zeros(2));
  CHECK(step.outputs == std::vector<double>{0.0, 0.0});
}

TEST_CASE("QCE rejects off-grid inputs and bad shapes") {
  const auto formats = QceFormats::of({1, 1}, {1, 2, 1, 2});
  CHECK_THROWS_AS(qce_simulate(std::vector<double>{0.25}, std::vector<double>{0.5}, formats,
                               QceAccumulators::zeros(1)),
                  QuantizeError);
  CHECK_THROWS_AS(qce_simulate(std::vector<double>{0.5}, std::vector<double>{0.1}, formats,
                               QceAccumulators::zeros(1)),
                  QuantizeError);
  CHECK_THROWS_AS(qce_simulate(std::vector<double>{0.5}, std::vector<double>{0.5, 0.5}, formats,
                               QceAccumulators::zeros(1)),
                  QuantizeError);
}

TEST_CASE("QCE matches the exact rational MAC over several steps") {
  std::mt19937_64 rng(31);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 1000; ++trial) {
    const ActFormat prev{pick(0, 3), pick(0, 6)};
    const LayerQuant q{pick(0, 3), pick(0, 8), pick(0, 3), pick(0, 6)};
    const auto formats = QceFormats::of(prev, q);
    const int tn = pick(1, 6), tm = pick(1, 6);
    auto state = QceAccumulators::zeros(tn);
    std::vector<oracle::Rational> carried(static_cast<std::size_t>(tn));
    for (int s = 0; s < 3; ++s) {
      std::vector<double> acts, weights;
      for (int m = 0; m < tm; ++m) {
        acts.push_back(quantize(std::uniform_real_distribution<double>(-1, 9)(rng),
                                formats.act_in));
      }
      for (int k = 0; k < tn * tm; ++k) {
        weights.push_back(quantize(std::uniform_real_distribution<double>(-5, 5)(rng),
                                   formats.weight));
      }
      std::vector<oracle::Rational> sums;
      const auto want = oracle::qce_outputs(acts, weights, tn, carried, q.ai, q.af, &sums);
      const auto got = qce_simulate(acts, weights, formats, state);
      for (int n = 0; n < tn; ++n) {
        REQUIRE(oracle::exact(got.outputs[static_cast<std::size_t>(n)]) ==
                want[static_cast<std::size_t>(n)]);
      }
      state = got.acc;
      carried = sums;
    }
  }
}

TEST_CASE("cost library JSON") {
  const auto lib = cost_library_from_json({{"mult_coeff", 0.5}});
  CHECK(lib.mult_coeff == 0.5);
  CHECK(lib.fixed_overhead == 300);
  CHECK_THROWS_AS(cost_library_from_json({{"mult_coeff", -1}}), ConfigError);
  CHECK_THROWS_AS(cost_library_from_json({{"dsp_coeff", 1}}), ConfigError);
  const auto back = cost_library_from_json(to_json(QceCostLibrary{}));
  CHECK(back.adder_coeff == 1.0);
  CHECK(back.trunc_coeff == 2.0);
}
