#include "dtnet/discriminator.hpp"

#include <algorithm>
#include <numeric>

#include "dtnet/ops.hpp"

namespace dtnet {

std::vector<std::size_t> rank_order(std::span<const double> scores, std::size_t rows, std::size_t cols) {
  std::vector<std::size_t> order(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(r * cols);
    auto last = first + static_cast<std::ptrdiff_t>(cols);
    std::iota(first, last, std::size_t{0});
    const double* row = scores.data() + r * cols;
    std::stable_sort(first, last, [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  }
  return order;
}

FeatureRankingDiscriminator::FeatureRankingDiscriminator(DiscriminatorConfig config, CounterRng& init)
    : config_(std::move(config)) {
  if (config_.feature_channels.empty()) throw DimensionError("discriminator needs at least one feature block");
  const std::size_t stacked = config_.stacked_channels();
  if (stacked % 3 != 0) {
    throw DimensionError("stacked feature channels " + std::to_string(stacked) + " not divisible by 3");
  }
  const std::size_t beta = config_.beta();
  const std::size_t t = config_.feature_channels.size();
  for (std::size_t i = 0; i + 1 < t; ++i) project_.emplace_back(config_.feature_channels[i], beta, 1, init);
  const std::size_t squeezed = std::max<std::size_t>(1, stacked / config_.reduction);
  w1_ = Conv2d(stacked, squeezed, 1, init);
  w2_ = Conv2d(squeezed, stacked, 1, init);
  const std::size_t phi = config_.resolved_phi();
  for (std::size_t k = 0; k < 3; ++k) paths_[k] = Conv2d(stacked / 3, (k + 1) * phi, 1, init);
  std::size_t in = 6 * phi;
  for (std::size_t l = 0; l < config_.body_layers; ++l) {
    const std::size_t out = config_.body_width << std::min<std::size_t>(l, 1);
    body_.emplace_back(in, out, 3, init, 2);
    in = out;
  }
  classifier_ = Conv2d(in, 1, 1, init);

  for (std::size_t i = 0; i < project_.size(); ++i) project_[i].collect(params_, "project." + std::to_string(i));
  w1_.collect(params_, "rank.w1");
  w2_.collect(params_, "rank.w2");
  for (std::size_t k = 0; k < 3; ++k) paths_[k].collect(params_, "path." + std::to_string(k + 1));
  for (std::size_t l = 0; l < body_.size(); ++l) body_[l].collect(params_, "body." + std::to_string(l));
  classifier_.collect(params_, "classifier");
}

RankedFeatureBundle FeatureRankingDiscriminator::rank_features(std::span<const Tensor> features) const {
  const std::size_t t = config_.feature_channels.size();
  if (features.size() != t) {
    throw DimensionError("discriminator expects " + std::to_string(t) + " feature blocks, got " +
                         std::to_string(features.size()));
  }
  const Tensor& finest = features.back();
  if (finest.rank() != 4 || finest.dim(1) != config_.beta()) {
    throw DimensionError("finest feature block " + to_string(finest.shape()) + " does not match beta");
  }
  const std::size_t batch = finest.dim(0);
  std::vector<Tensor> aligned;
  for (std::size_t i = 0; i < t; ++i) {
    const Tensor& f = features[i];
    const bool coarser = i + 1 == t || (f.rank() == 4 && f.dim(2) < finest.dim(2) && finest.dim(2) % f.dim(2) == 0);
    if (f.rank() != 4 || f.dim(0) != batch || f.dim(1) != config_.feature_channels[i] || f.dim(2) != f.dim(3) ||
        !coarser) {
      throw DimensionError("feature block " + std::to_string(i) + " has shape " + to_string(f.shape()));
    }
    if (i + 1 == t) {
      aligned.push_back(f);
    } else {
      aligned.push_back(upsample_nearest(project_[i](f), finest.dim(2) / f.dim(2)));
    }
  }

  RankedFeatureBundle out;
  out.stacked = concat(aligned, 1);
  const std::size_t stacked = config_.stacked_channels();
  const Tensor scores = sigmoid(w2_(relu(w1_(global_avg_pool(out.stacked)))));
  out.ranking = reshape(scores, {batch, stacked});
  out.order = rank_order(out.ranking.data(), batch, stacked);

  Tensor source = out.stacked;
  if (config_.gate_by_rank) source = mul(source, broadcast_to(scores, source.shape()));
  const Tensor sorted = gather_channels(source, out.order);
  const std::size_t third = stacked / 3;
  std::vector<Tensor> paths;
  for (std::size_t k = 0; k < 3; ++k) {
    out.groups.push_back(slice(sorted, 1, k * third, (k + 1) * third));
    paths.push_back(paths_[k](out.groups.back()));
  }
  out.routed = concat(paths, 1);
  return out;
}

RankedFeatureBundle FeatureRankingDiscriminator::evaluate(std::span<const Tensor> features) const {
  RankedFeatureBundle out = rank_features(features);
  Tensor y = out.routed;
  for (const auto& conv : body_) y = leaky_relu(conv(y), config_.leaky_slope);
  out.probability = sigmoid(classifier_(y));
  return out;
}

}  // namespace dtnet
