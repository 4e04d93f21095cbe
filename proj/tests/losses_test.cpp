#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "dtnet/losses.hpp"
#include "dtnet/ops.hpp"
#include "dtnet/rng.hpp"

using namespace dtnet;

namespace {

Tensor pixel(double a, double b) { return Tensor({1, 2, 1, 1}, {a, b}); }

Tensor random_probs(const Shape& shape, CounterRng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-2, 2);
  return softmax(Tensor(shape, v), 1);
}

}  // namespace

TEST(CrossEntropy, UniformPredictionIsLnK) {
  const std::vector<int> labels{0, 1, 1, 0};
  const Tensor p = Tensor::full({1, 2, 2, 2}, 0.5);
  EXPECT_NEAR(cross_entropy(p, labels).item(), std::numbers::ln2, 1e-12);
}

TEST(CrossEntropy, HandValue) {
  const std::vector<int> labels{0};
  EXPECT_NEAR(cross_entropy(pixel(0.8, 0.2), labels).item(), -std::log(0.8), 1e-12);
}

TEST(CrossEntropy, RejectsBadLabels) {
  const std::vector<int> too_few{0};
  const std::vector<int> out_of_range{2, 0, 0, 0};
  const Tensor p = Tensor::full({1, 2, 2, 2}, 0.5);
  EXPECT_THROW(cross_entropy(p, too_few), DimensionError);
  EXPECT_THROW(cross_entropy(p, out_of_range), std::exception);
}

TEST(OneHot, Layout) {
  const std::vector<int> labels{1, 0};
  const Tensor t = one_hot(labels, {1, 2, 1, 2});
  EXPECT_EQ(std::vector<double>(t.data().begin(), t.data().end()), (std::vector<double>{0, 1, 1, 0}));
}

TEST(Uncertainty, HandValueAndZeroOnAgreement) {
  const Tensor u = uncertainty_map(pixel(0.8, 0.2), pixel(0.4, 0.6));
  EXPECT_EQ(u.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_NEAR(u.item(), 0.8 * std::log(2.0) + 0.2 * std::log(1.0 / 3.0), 1e-12);
  EXPECT_NEAR(u.item(), 0.3348, 5e-5);
  EXPECT_NEAR(uncertainty_map(pixel(0.3, 0.7), pixel(0.3, 0.7)).item(), 0.0, 1e-15);
}

TEST(Uncertainty, NonNegativeEverywhere) {
  CounterRng rng(3, CounterRng::Stream::data);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_probs({2, 3, 4, 4}, rng);
    const Tensor b = random_probs({2, 3, 4, 4}, rng);
    const Tensor u = uncertainty_map(a, b);
    for (double v : u.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(MultiscaleConsistency, HandComputedTwoScaleExample) {
  const std::vector<Tensor> preds{pixel(0.8, 0.2), pixel(0.4, 0.6)};
  const double u = 0.8 * std::log(2.0) + 0.2 * std::log(1.0 / 3.0);
  EXPECT_NEAR(multiscale_consistency(preds).item(), u + 0.16, 1e-12);
  EXPECT_NEAR(multiscale_consistency(preds).item(), 0.4948, 1e-4);
}

TEST(MultiscaleConsistency, ZeroWhenScalesAgree) {
  CounterRng rng(4, CounterRng::Stream::data);
  const Tensor p = random_probs({2, 2, 4, 4}, rng);
  const std::vector<Tensor> preds{p, p, p};
  EXPECT_NEAR(multiscale_consistency(preds).item(), 0.0, 1e-15);
}

TEST(MultiscaleConsistency, NonNegative) {
  CounterRng rng(5, CounterRng::Stream::data);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<Tensor> preds{random_probs({1, 2, 4, 4}, rng), random_probs({1, 2, 4, 4}, rng),
                                    random_probs({1, 2, 4, 4}, rng)};
    EXPECT_GE(multiscale_consistency(preds).item(), 0.0);
  }
}

TEST(MultiscaleConsistency, RejectsSingleScaleAndMismatch) {
  const std::vector<Tensor> one{pixel(0.5, 0.5)};
  EXPECT_THROW(multiscale_consistency(one), std::exception);
  const std::vector<Tensor> mismatch{pixel(0.5, 0.5), Tensor::full({1, 2, 2, 2}, 0.5)};
  EXPECT_THROW(multiscale_consistency(mismatch), DimensionError);
}

TEST(DiscriminatorLoss, HalfProbabilityIsLn2ForEitherLabel) {
  const Tensor p = Tensor::full({2, 1, 3, 3}, 0.5);
  EXPECT_NEAR(discriminator_loss(p, Tensor::full({2, 1, 3, 3}, 1.0)).item(), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(discriminator_loss(p, Tensor::full({2, 1, 3, 3}, 0.0)).item(), std::numbers::ln2, 1e-12);
}

TEST(DiscriminatorLoss, SwapInvariance) {
  CounterRng rng(6, CounterRng::Stream::data);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(8), y(8), p2(8), y2(8);
    for (std::size_t i = 0; i < 8; ++i) {
      p[i] = rng.uniform(0.01, 0.99);
      y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      p2[i] = 1 - p[i];
      y2[i] = 1 - y[i];
    }
    const double a = discriminator_loss(Tensor({2, 1, 2, 2}, p), Tensor({2, 1, 2, 2}, y)).item();
    const double b = discriminator_loss(Tensor({2, 1, 2, 2}, p2), Tensor({2, 1, 2, 2}, y2)).item();
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(DiscriminatorLoss, ShapeMismatchThrows) {
  EXPECT_THROW(discriminator_loss(Tensor::full({1, 1, 2, 2}, 0.5), Tensor::full({1, 1, 2, 3}, 1.0)), DimensionError);
}
