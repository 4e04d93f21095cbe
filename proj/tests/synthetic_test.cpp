#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dtnet/synthetic.hpp"

using namespace dtnet;

TEST(Synthetic, DeterministicInSpecAndCount) {
  SyntheticDomainSpec s;
  s.size = 32;
  s.seed = 11;
  const auto a = generate_domain(s, 4);
  const auto b = generate_domain(s, 4);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask, b[i].mask);
  }
  // A prefix of a longer run is the shorter run.
  const auto c = generate_domain(s, 6);
  EXPECT_EQ(c[3].image, a[3].image);
  s.seed = 12;
  EXPECT_NE(generate_domain(s, 1)[0].mask, a[0].mask);
}

TEST(Synthetic, ForegroundFractionWithinBounds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SyntheticDomainSpec s;
    s.size = 32;
    s.seed = seed;
    const auto m = generate_mask(s, 0);
    const double area = std::accumulate(m.begin(), m.end(), 0.0) / static_cast<double>(m.size());
    EXPECT_GE(area, s.min_area);
    EXPECT_LE(area, s.max_area);
  }
}

TEST(Synthetic, ImagesInUnitRange) {
  const auto d = generate_domain(SyntheticDomainSpec::default_target(3), 3);
  for (const auto& sample : d) {
    EXPECT_EQ(sample.image.size(), 64u * 64u);
    for (double v : sample.image) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, DomainsShareGeometry) {
  SyntheticDomainSpec src;
  src.seed = 5;
  SyntheticDomainSpec tgt = SyntheticDomainSpec::default_target(5);
  const auto a = generate_domain(src, 3);
  const auto b = generate_domain(tgt, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_NE(a[i].image, b[i].image);
  }
}

TEST(Synthetic, EqualAppearanceGivesIdenticalDomains) {
  SyntheticDomainSpec src;
  src.seed = 8;
  SyntheticDomainSpec tgt = src;
  tgt.domain = Domain::target;
  const auto a = generate_domain(src, 3);
  const auto b = generate_domain(tgt, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].image, b[i].image);
}

TEST(Synthetic, TargetIsShiftedInIntensity) {
  SyntheticDomainSpec src;
  src.seed = 9;
  const auto a = generate_domain(src, 8);
  const auto b = generate_domain(SyntheticDomainSpec::default_target(9), 8);
  auto fg_mean = [](const Dataset& d) {
    double s = 0, n = 0;
    for (const auto& x : d)
      for (std::size_t i = 0; i < x.mask.size(); ++i)
        if (x.mask[i]) s += x.image[i], n += 1;
    return s / n;
  };
  EXPECT_GT(std::abs(fg_mean(a) - fg_mean(b)), 0.1);
}

TEST(Synthetic, InvalidSpecsThrow) {
  SyntheticDomainSpec s;
  s.min_area = 0.5;
  s.max_area = 0.2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.size = 0;
  EXPECT_THROW(generate_domain(s, 1), std::invalid_argument);
  EXPECT_EQ(parse_domain("target"), Domain::target);
  EXPECT_THROW(parse_domain("other"), std::invalid_argument);
}
