#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "dtnet/metrics.hpp"
#include "dtnet/rng.hpp"

using namespace dtnet;

namespace {

std::vector<int> random_mask(std::size_t n, double density, CounterRng& rng) {
  std::vector<int> m(n);
  for (auto& v : m) v = rng.uniform() < density ? 1 : 0;
  return m;
}

// Surface by definition, distances by exhaustive search.
double brute_assd(const std::vector<int>& a, const std::vector<int>& b, int h, int w) {
  auto inside = [&](const std::vector<int>& m, int y, int x) {
    return y >= 0 && y < h && x >= 0 && x < w && m[y * w + x] != 0;
  };
  auto surface = [&](const std::vector<int>& m) {
    std::vector<std::pair<int, int>> s;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (inside(m, y, x) &&
            (!inside(m, y - 1, x) || !inside(m, y + 1, x) || !inside(m, y, x - 1) || !inside(m, y, x + 1)))
          s.emplace_back(y, x);
    return s;
  };
  const auto sa = surface(a), sb = surface(b);
  auto nearest = [](std::pair<int, int> p, const std::vector<std::pair<int, int>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (auto q : set) best = std::min(best, std::hypot(p.first - q.first, p.second - q.second));
    return best;
  };
  double total = 0;
  for (auto p : sa) total += nearest(p, sb);
  for (auto p : sb) total += nearest(p, sa);
  return total / static_cast<double>(sa.size() + sb.size());
}

}  // namespace

TEST(Overlap, HandCounts) {
  const std::vector<int> pred{1, 1, 0, 0, 0};
  const std::vector<int> gt{1, 0, 1, 1, 0};
  const auto c = confusion(pred, gt);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 2u);
  EXPECT_DOUBLE_EQ(iou(pred, gt), 0.25);
  EXPECT_DOUBLE_EQ(dice(pred, gt), 0.4);
}

TEST(Overlap, EmptyMasksAgree) {
  const std::vector<int> zero(9, 0), one(9, 0);
  EXPECT_EQ(iou(zero, one), kEmptyAgreement);
  EXPECT_EQ(dice(zero, one), kEmptyAgreement);
  EXPECT_EQ(dice(zero, one, 0.0), 0.0);
}

TEST(Overlap, SizeMismatchThrows) {
  const std::vector<int> a(4, 1), b(5, 1);
  EXPECT_THROW(iou(a, b), std::invalid_argument);
}

TEST(Overlap, DiceIouIdentityOnRandomPairs) {
  CounterRng rng(1, CounterRng::Stream::data);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_mask(64, rng.uniform(), rng);
    const auto b = random_mask(64, rng.uniform(), rng);
    const double j = iou(a, b);
    const double d = dice(a, b);
    EXPECT_GE(j, 0.0);
    EXPECT_LE(j, 1.0);
    EXPECT_NEAR(d, 2 * j / (1 + j), 1e-12);
  }
}

TEST(SurfaceDistance, DistanceTransformMatchesBruteForce) {
  CounterRng rng(2, CounterRng::Stream::data);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 7, w = 11;
    const auto sites = random_mask(h * w, 0.1, rng);
    const auto d = squared_distance_transform(sites, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < h * w; ++i)
          if (sites[i]) best = std::min(best, double((y - i / w) * (y - i / w) + (x - i % w) * (x - i % w)));
        EXPECT_EQ(d[y * w + x], best);
      }
  }
}

TEST(SurfaceDistance, SinglePixelsThreeApart) {
  std::vector<int> a(25, 0), b(25, 0);
  a[2 * 5 + 0] = 1;
  b[2 * 5 + 3] = 1;
  EXPECT_DOUBLE_EQ(*assd(a, b, 5, 5), 3.0);
}

TEST(SurfaceDistance, IdenticalMasksGiveZero) {
  CounterRng rng(3, CounterRng::Stream::data);
  const auto a = random_mask(256, 0.4, rng);
  EXPECT_EQ(*assd(a, a, 16, 16), 0.0);
}

TEST(SurfaceDistance, EmptyMaskHasNoValue) {
  std::vector<int> a(16, 0), b(16, 0);
  b[5] = 1;
  EXPECT_FALSE(assd(a, b, 4, 4).has_value());
  EXPECT_FALSE(assd(b, a, 4, 4).has_value());
}

TEST(SurfaceDistance, MatchesBruteForceAndIsSymmetric) {
  CounterRng rng(4, CounterRng::Stream::data);
  int compared = 0;
  while (compared < 100) {
    const auto a = random_mask(256, rng.uniform(0.05, 0.6), rng);
    const auto b = random_mask(256, rng.uniform(0.05, 0.6), rng);
    const auto ab = assd(a, b, 16, 16);
    if (!ab) continue;
    ++compared;
    EXPECT_NEAR(*ab, brute_assd(a, b, 16, 16), 1e-9);
    EXPECT_EQ(*ab, *assd(b, a, 16, 16));
    EXPECT_GE(*ab, 0.0);
  }
}

TEST(Summaries, PopulationStatistics) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(1.25));
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(summarize(std::vector<double>{}).count, 0u);
}

TEST(Report, CsvLeavesMissingDistanceEmpty) {
  MetricsReport r;
  const std::vector<int> full{1, 1, 1, 1}, none{0, 0, 0, 0};
  r.add("0000", full, full, 2, 2);
  r.add("0001", none, full, 2, 2);
  EXPECT_EQ(r.size(), 2u);
  EXPECT_EQ(r.assd_summary().count, 1u);
  const auto path = std::filesystem::temp_directory_path() / "dtnet_metrics_test.csv";
  r.write_csv(path.string());
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string header, first, second;
  std::getline(ss, header);
  std::getline(ss, first);
  std::getline(ss, second);
  EXPECT_EQ(header, "image_id,iou,dice,assd");
  EXPECT_EQ(first.substr(0, 5), "0000,");
  EXPECT_EQ(second.back(), ',');
  std::filesystem::remove(path);
}
