#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dtnet/cost_model.hpp"

using namespace dtnet;
using namespace dtnet::cost;

TEST(FlopsMhsa, UnitAndSmallSizes) {
  EXPECT_EQ(flops_mhsa(1, 1, 1), 6.0);
  EXPECT_EQ(flops_mhsa(8, 8, 16), 196608.0);
  EXPECT_NEAR(flops_mhsa(8, 8, 16) / 1e9, 0.0002, 0.00005);
}

TEST(FlopsMhsa, Size128AgainstReference) {
  const double g = flops_mhsa(128, 128, 16) / 1e9;
  EXPECT_NEAR(g, 8.6067, 1e-4);
  EXPECT_LT(std::abs(g - 8.7363) / 8.7363, 0.015);
}

TEST(FlopsDispensed, HandArithmetic) {
  EXPECT_EQ(flops_nmhsa(16, 16, 64, 2, 16), 1310720.0);
  EXPECT_EQ(flops_dispensed(7, 5, 3, 1, 1), flops_mhsa(7, 5, 3));
  // Doubling the factor halves only the quadratic term.
  const double lin = 4.0 / 4.0 * 256 * 64 * 64;
  EXPECT_DOUBLE_EQ(flops_nmhsa(16, 16, 64, 2, 32) - lin, (flops_nmhsa(16, 16, 64, 2, 16) - lin) / 2);
}

TEST(FlopsTransformer, RecomposesFromThreeMhsa) {
  for (double h : {8.0, 16.0, 40.0})
    for (double c : {16.0, 64.0}) {
      EXPECT_DOUBLE_EQ(flops_transformer(h, h, c), 2 * flops_mhsa(h, h, c) + flops_mhsa(h / 2, h / 2, 2 * c));
      EXPECT_DOUBLE_EQ(flops_transformer(h, h, c), 12 * h * h * c * c + 4.25 * h * h * h * h * c);
      EXPECT_DOUBLE_EQ(flops_drt(h, h, c, 1, 1, 1, 1), flops_transformer(h, h, c));
    }
}

TEST(FlopsDrt, DefaultConfigClosedForm) {
  // 12/4 * 256 * 4096 + (2/32 + 1/32 + 2/32) * 65536 * 64
  EXPECT_EQ(flops_drt(DispensedConfig{}), 3801088.0);
}

TEST(ReductionBound, SandwichOnRandomValidConfigs) {
  CounterRng rng(1, CounterRng::Stream::data);
  int checked = 0;
  while (checked < 100) {
    DispensedConfig c;
    c.lambda = 1 + rng.below(4);
    const std::size_t sm = 1 + rng.below(4);
    const std::size_t sn = 1 + rng.below(4);
    const std::size_t sp = 1 + rng.below(2);
    c.m = sm * sm;
    c.n = sn * sn;
    c.p = sp * sp;
    c.height = c.width = sm * sn;
    c.heads = 1;
    c.channels = 4 * c.lambda * (1 + rng.below(4));
    if (!c.is_valid()) continue;
    ++checked;
    const double ratio = flops_drt(c) / flops_transformer(c.height, c.width, c.channels);
    const ReductionBound b = reduction_bound(c.lambda, c.m, c.n, c.p);
    EXPECT_LE(b.lower, ratio * (1 + 1e-12));
    EXPECT_LE(ratio, b.upper * (1 + 1e-12));
  }
}

TEST(ReductionBound, TightWhenAllFactorsEqual) {
  const ReductionBound b = reduction_bound(3, 3, 3, 3);
  EXPECT_DOUBLE_EQ(b.lower, 1.0 / 9);
  EXPECT_DOUBLE_EQ(b.upper, 1.0 / 9);
}

TEST(Monotonicity, IncreasingInDimsDecreasingInFactors) {
  const double base = flops_dispensed(16, 16, 32, 2, 4);
  EXPECT_GT(flops_dispensed(17, 16, 32, 2, 4), base);
  EXPECT_GT(flops_dispensed(16, 17, 32, 2, 4), base);
  EXPECT_GT(flops_dispensed(16, 16, 33, 2, 4), base);
  EXPECT_LT(flops_dispensed(16, 16, 32, 3, 4), base);
  EXPECT_LT(flops_dispensed(16, 16, 32, 2, 5), base);
  EXPECT_LT(flops_drt(16, 16, 32, 2, 16, 16, 4), flops_drt(16, 16, 32, 2, 4, 16, 4));
  EXPECT_LT(flops_drt(16, 16, 32, 2, 16, 16, 4), flops_drt(16, 16, 32, 2, 16, 4, 4));
  EXPECT_LT(flops_drt(16, 16, 32, 2, 16, 16, 4), flops_drt(16, 16, 32, 2, 16, 16, 1));
}

TEST(InstrumentedCount, MhsaEqualsClosedForm) {
  for (std::size_t s : {1u, 2u, 4u, 8u})
    for (std::size_t c : {4u, 8u, 16u}) {
      EXPECT_EQ(count_mhsa_flops(s, s, c, 4), static_cast<std::uint64_t>(flops_mhsa(s, s, c))) << s << " " << c;
    }
  EXPECT_EQ(count_mhsa_flops(4, 4, 8, 2, 3), 3 * static_cast<std::uint64_t>(flops_mhsa(4, 4, 8)));
}

TEST(InstrumentedCount, DispensedEqualsClosedForm) {
  EXPECT_EQ(count_dispensed_flops(Policy::neighbour, 16, 2, 4, 16, 16, 64), 1310720u);
  EXPECT_EQ(count_dispensed_flops(Policy::dilated, 4, 2, 2, 8, 8, 16),
            static_cast<std::uint64_t>(flops_dmhsa(8, 8, 16, 2, 4)));
  EXPECT_EQ(count_dispensed_flops(Policy::channel, 4, 2, 2, 4, 4, 32),
            static_cast<std::uint64_t>(flops_cmhsa(4, 4, 32, 2, 4)));
}

TEST(InstrumentedCount, EmptyTraceCountsZero) {
  FlopCounter counter;
  EXPECT_EQ(counter.total(), 0u);
  EXPECT_EQ(counter.multiplies(flop_category::attention), 0u);
}

TEST(AttentionMemory, ScalingAndUnitDims) {
  EXPECT_DOUBLE_EQ(attention_memory(1, 1, 4, 2, 8), 64.0);
  EXPECT_DOUBLE_EQ(attention_memory(1, 1, 4, 2, 8, 1.5), 96.0);
  const double ratio = attention_memory(144, 144, 4, 2, 8) / attention_memory(128, 128, 4, 2, 8);
  EXPECT_NEAR(ratio, std::pow(144.0 / 128.0, 4), 1e-12);
  EXPECT_NEAR(ratio, (40.1436 - 1.4053) / (25.6104 - 1.4053), 0.002 * ratio);
}

TEST(Sweeps, SizeSweepShape) {
  const auto rows = size_sweep(8, 144, 8);
  EXPECT_EQ(rows.size(), 18u * 3);
  for (const auto& r : rows) {
    EXPECT_GT(r.analytic_flops, 0.0);
    if (r.counted_flops) {
      EXPECT_EQ(*r.counted_flops, static_cast<std::uint64_t>(r.analytic_flops)) << r.variant << r.h;
    }
  }
}

TEST(Sweeps, DispensedGrowthAndMemoryBound) {
  const auto rows = size_sweep(128, 144, 16);
  const CostReport* d128 = nullptr;
  const CostReport* d144 = nullptr;
  for (const auto& r : rows) {
    if (r.variant == "dispensed" && r.h == 128) d128 = &r;
    if (r.variant == "dispensed" && r.h == 144) d144 = &r;
  }
  ASSERT_TRUE(d128 && d144);
  const double ratio = d144->analytic_flops / d128->analytic_flops;
  EXPECT_LT(std::abs(ratio - 0.0684 / 0.0540) / (0.0684 / 0.0540), 0.05);
  EXPECT_LT(d144->attn_map_bytes / 1e9, 1.5732 - 1.4053);
}

TEST(Sweeps, SliceWithoutReshapeBlowsUpMemory) {
  for (const auto& r : size_sweep(24, 104, 16)) {
    if (r.variant != "slice_no_reshape") continue;
    EXPECT_DOUBLE_EQ(r.attn_map_bytes, r.p * attention_memory(r.h, r.w, 4, 2, 8));
  }
}

TEST(Sweeps, ChannelSweepFitReproducesRatios) {
  const double c[] = {128, 256, 512, 1024, 2048, 4096};
  const double g[] = {0.77, 1.69, 4.01, 10.53, 31.14, 102.54};
  const LinearQuadraticFit fit = fit_linear_quadratic(c, g);
  EXPECT_NEAR(fit(4096) / fit(2048), 3.29, 0.15);
  EXPECT_NEAR(fit(2048) / fit(1024), 2.96, 0.15);
  const auto rows = channel_sweep(128, 4096);
  EXPECT_EQ(rows.size(), 6u * 5);
}

TEST(Sweeps, EmptyRangeWritesHeaderOnly) {
  std::ostringstream os;
  write_csv(os, size_sweep(16, 8, 8));
  EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\n");
}

TEST(Sweeps, UnwritablePathThrows) {
  EXPECT_THROW(write_csv("/nonexistent-dir/x.csv", size_sweep(8, 8, 8)), std::exception);
}

TEST(Fits, RecoverExactCoefficients) {
  const double x[] = {1, 2, 3, 4};
  double y[4];
  for (int i = 0; i < 4; ++i) y[i] = 0.5 * x[i] * x[i] + 3 * x[i];
  const auto f = fit_linear_quadratic(x, y);
  EXPECT_NEAR(f.quadratic, 0.5, 1e-12);
  EXPECT_NEAR(f.linear, 3, 1e-12);
  const double m[] = {1, 2, 4};
  const double meas[] = {11, 12, 14};
  const MemoryFit mf = fit_memory(m, meas);
  EXPECT_NEAR(mf.baseline, 10, 1e-12);
  EXPECT_NEAR(mf.alpha, 1, 1e-12);
}
