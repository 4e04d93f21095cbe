#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dtnet/attention.hpp"
#include "dtnet/ops.hpp"

using namespace dtnet;

namespace {

Tensor random_tensor(Shape shape, CounterRng& rng) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

void fill(Tensor& t, double value) { std::fill(t.mutable_data().begin(), t.mutable_data().end(), value); }

// Straight-line reference: per head, per token, explicit dot products.
std::vector<double> naive_mhsa(const Tensor& x, const MhsaParams& p) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), t = h * w;
  const std::size_t heads = p.heads, d = c / heads;
  auto tok = [&](std::size_t n, std::size_t i, std::size_t ch) { return x[(n * c + ch) * t + i]; };
  auto proj = [&](const Tensor& m, std::size_t n, std::size_t i, std::size_t col) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += tok(n, i, k) * m[k * c + col];
    return s;
  };
  std::vector<double> out(b * c * t, 0.0);
  for (std::size_t n = 0; n < b; ++n) {
    std::vector<double> concat(t * c);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> logits(t);
        for (std::size_t j = 0; j < t; ++j) {
          const std::size_t dr = j / w + h - 1 - i / w;
          const std::size_t dc = j % w + w - 1 - i % w;
          double l = 0;
          for (std::size_t e = 0; e < d; ++e) {
            const double q = proj(p.w_q, n, i, hd * d + e);
            l += q * proj(p.w_k, n, j, hd * d + e);
            l += q * (p.rel_h[dr * d + e] + p.rel_w[dc * d + e]);
          }
          logits[j] = l / std::sqrt(static_cast<double>(d));
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0;
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t e = 0; e < d; ++e) {
          double s = 0;
          for (std::size_t j = 0; j < t; ++j) s += logits[j] / z * proj(p.w_v, n, j, hd * d + e);
          concat[i * c + hd * d + e] = s;
        }
      }
    }
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t co = 0; co < c; ++co) {
        double s = 0;
        for (std::size_t k = 0; k < c; ++k) s += concat[i * c + k] * p.w_o[k * c + co];
        out[(n * c + co) * t + i] = s;
      }
  }
  return out;
}

MhsaParams identity_value_params(std::size_t c, std::size_t h, std::size_t w) {
  CounterRng rng(1, CounterRng::Stream::init);
  MhsaParams p = MhsaParams::create(c, 1, h, w, rng);
  fill(p.w_q, 0.0);
  fill(p.w_k, 0.0);
  fill(p.rel_h, 0.0);
  fill(p.rel_w, 0.0);
  fill(p.w_v, 0.0);
  fill(p.w_o, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    p.w_v.mutable_data()[i * c + i] = 1.0;
    p.w_o.mutable_data()[i * c + i] = 1.0;
  }
  return p;
}

}  // namespace

TEST(Mhsa, MatchesNaiveReference) {
  CounterRng rng(2, CounterRng::Stream::init);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const MhsaParams p = MhsaParams::create(8, heads, 3, 2, rng);
    const Tensor x = random_tensor({2, 8, 3, 2}, rng);
    const Tensor y = mhsa_forward(x, p);
    ASSERT_EQ(y.shape(), x.shape());
    const auto ref = naive_mhsa(x, p);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12) << "heads " << heads;
  }
}

TEST(Mhsa, ZeroLogitsGiveSpatialAverage) {
  const MhsaParams p = identity_value_params(3, 2, 3);
  CounterRng rng(3, CounterRng::Stream::data);
  const Tensor x = random_tensor({1, 3, 2, 3}, rng);
  const Tensor y = mhsa_forward(x, p);
  for (std::size_t c = 0; c < 3; ++c) {
    double avg = 0;
    for (std::size_t i = 0; i < 6; ++i) avg += x[c * 6 + i] / 6.0;
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(y[c * 6 + i], avg, 1e-12);
  }
}

TEST(Mhsa, SingleTokenReturnsValue) {
  CounterRng rng(4, CounterRng::Stream::init);
  const MhsaParams p = MhsaParams::create(4, 2, 1, 1, rng);
  const Tensor x = random_tensor({1, 4, 1, 1}, rng);
  const Tensor y = mhsa_forward(x, p);
  // softmax over one token is 1, so y = (x W_v) W_o.
  for (std::size_t co = 0; co < 4; ++co) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      double v = 0;
      for (std::size_t i = 0; i < 4; ++i) v += x[i] * p.w_v[i * 4 + k];
      s += v * p.w_o[k * 4 + co];
    }
    EXPECT_NEAR(y[co], s, 1e-12);
  }
}

TEST(Mhsa, EquivariantToTokenPermutationWithoutPositions) {
  CounterRng rng(5, CounterRng::Stream::init);
  MhsaParams p = MhsaParams::create(4, 2, 2, 3, rng);
  fill(p.rel_h, 0.0);
  fill(p.rel_w, 0.0);
  const Tensor x = random_tensor({1, 4, 2, 3}, rng);
  const Tensor y = mhsa_forward(x, p);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  int checked = 0;
  do {
    std::vector<double> xp(24);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 6; ++i) xp[c * 6 + i] = x[c * 6 + perm[i]];
    const Tensor yp = mhsa_forward(Tensor({1, 4, 2, 3}, xp), p);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 6; ++i) ASSERT_NEAR(yp[c * 6 + i], y[c * 6 + perm[i]], 1e-12);
    ++checked;
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_EQ(checked, 720);
}

TEST(Mhsa, TwoTokenSwapWithZeroPositions) {
  CounterRng rng(6, CounterRng::Stream::init);
  MhsaParams p = MhsaParams::create(2, 1, 1, 2, rng);
  fill(p.rel_h, 0.0);
  fill(p.rel_w, 0.0);
  const Tensor x({1, 2, 1, 2}, {0.3, -0.8, 1.1, 0.4});
  const Tensor xs({1, 2, 1, 2}, {-0.8, 0.3, 0.4, 1.1});
  const Tensor y = mhsa_forward(x, p);
  const Tensor ys = mhsa_forward(xs, p);
  EXPECT_NEAR(ys[0], y[1], 1e-12);
  EXPECT_NEAR(ys[1], y[0], 1e-12);
  EXPECT_NEAR(ys[2], y[3], 1e-12);
  EXPECT_NEAR(ys[3], y[2], 1e-12);
}

TEST(Mhsa, TraceRowsSumToOne) {
  CounterRng rng(7, CounterRng::Stream::init);
  const MhsaParams p = MhsaParams::create(8, 4, 3, 3, rng);
  const Tensor x = random_tensor({2, 8, 3, 3}, rng);
  AttentionTrace trace;
  (void)mhsa_forward(x, p, &trace);
  ASSERT_EQ(trace.weights.shape(), (Shape{2, 4, 9, 9}));
  for (std::size_t r = 0; r < 2 * 4 * 9; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) s += trace.weights[r * 9 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mhsa, RejectsMismatchedShapes) {
  CounterRng rng(8, CounterRng::Stream::init);
  const MhsaParams p = MhsaParams::create(8, 4, 2, 2, rng);
  EXPECT_THROW(mhsa_forward(Tensor::zeros({1, 4, 2, 2}), p), DimensionError);
  EXPECT_THROW(mhsa_forward(Tensor::zeros({1, 8, 2, 3}), p), DimensionError);
  EXPECT_THROW(MhsaParams::create(6, 4, 2, 2, rng), DimensionError);
}

TEST(RelativeLogits, ZeroEmbeddingsGiveZero) {
  CounterRng rng(9, CounterRng::Stream::init);
  const Tensor q = random_tensor({1, 1, 6, 2}, rng);
  const Tensor r = relative_logits(q, Tensor::zeros({3, 2}), Tensor::zeros({5, 2}), 2, 3);
  for (double v : r.data()) EXPECT_EQ(v, 0.0);
}

TEST(RelativeLogits, TwoTokenHandValues) {
  // H=1, W=2, q rows both e1; rel_w rows (a, b, c) for offsets -1, 0, +1.
  const Tensor q({1, 1, 2, 2}, {1, 0, 1, 0});
  const Tensor rh({1, 2}, {0, 0});
  const Tensor rw({3, 2}, {0.5, 9, 1.5, 9, 2.5, 9});
  const Tensor r = relative_logits(q, rh, rw, 1, 2);
  EXPECT_DOUBLE_EQ(r[0], 1.5);  // (0,0): offset 0
  EXPECT_DOUBLE_EQ(r[1], 2.5);  // (0,1): offset +1
  EXPECT_DOUBLE_EQ(r[2], 0.5);  // (1,0): offset -1
  EXPECT_DOUBLE_EQ(r[3], 1.5);
}

TEST(RelativeLogits, DependsOnlyOnOffsetForEqualQueries) {
  CounterRng rng(10, CounterRng::Stream::init);
  const Tensor rw = random_tensor({7, 3}, rng);
  const Tensor rh = random_tensor({1, 3}, rng);
  std::vector<double> qv;
  for (int i = 0; i < 4; ++i) qv.insert(qv.end(), {0.2, -0.7, 0.4});
  const Tensor r = relative_logits(Tensor({1, 1, 4, 3}, qv), rh, rw, 1, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l)
          if (j - i == l - k) {
            EXPECT_DOUBLE_EQ(r[i * 4 + j], r[k * 4 + l]);
          }
}

TEST(RelativeLogits, MatchesBruteForce) {
  CounterRng rng(11, CounterRng::Stream::init);
  const std::size_t h = 3, w = 2, d = 2;
  const Tensor q = random_tensor({2, 2, h * w, d}, rng);
  const Tensor rh = random_tensor({2 * h - 1, d}, rng);
  const Tensor rw = random_tensor({2 * w - 1, d}, rng);
  const Tensor r = relative_logits(q, rh, rw, h, w);
  const std::size_t t = h * w;
  for (std::size_t bh = 0; bh < 4; ++bh)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j) {
        const std::size_t dr = j / w + h - 1 - i / w;
        const std::size_t dc = j % w + w - 1 - i % w;
        double s = 0;
        for (std::size_t e = 0; e < d; ++e) s += q[(bh * t + i) * d + e] * (rh[dr * d + e] + rw[dc * d + e]);
        EXPECT_NEAR(r[(bh * t + i) * t + j], s, 1e-13);
      }
}
