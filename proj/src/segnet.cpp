#include "dtnet/segnet.hpp"

#include "dtnet/losses.hpp"
#include "dtnet/ops.hpp"

namespace dtnet {

void SegNetConfig::validate() const {
  if (depth < 2) throw DimensionError("segnet depth must be at least 2");
  if (scales < 1 || scales > depth) throw DimensionError("segnet scales must lie in [1, depth]");
  if (classes < 2) throw DimensionError("segnet needs at least two classes");
  if (in_channels == 0 || base_channels == 0) throw DimensionError("segnet channel counts must be positive");
  const std::size_t div = std::size_t{1} << (depth - 1);
  if (height % div != 0 || width % div != 0) {
    throw DimensionError("input " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by " +
                         std::to_string(div));
  }
  dispensed().validate();
}

DispensedConfig SegNetConfig::dispensed() const {
  DispensedConfig c;
  c.lambda = lambda;
  c.m = m;
  c.n = n;
  c.p = p;
  c.heads = heads;
  c.height = level_height(depth - 2);
  c.width = level_width(depth - 2);
  c.channels = level_channels(depth - 2);
  return c;
}

SegNet::SegNet(const SegNetConfig& config, CounterRng& init) : config_(config) {
  config_.validate();
  const std::size_t depth = config_.depth;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? config_.in_channels : config_.level_channels(l - 1);
    const std::size_t out = config_.level_channels(l);
    encoder_.push_back({Conv2d(in, out, 3, init), Conv2d(out, out, 3, init)});
  }
  drt_ = DrtParams::create(config_.dispensed(), init);
  decoder_.resize(depth - 1);
  for (std::size_t l = depth - 1; l-- > 0;) {
    const std::size_t c = config_.level_channels(l);
    decoder_[l] = {Conv2d(config_.level_channels(l + 1), c, 1, init), Conv2d(2 * c, c, 3, init), Conv2d(c, c, 3, init)};
  }
  for (std::size_t i = 0; i < config_.scales; ++i) {
    heads_.emplace_back(config_.level_channels(config_.feature_level(i)), config_.classes, 1, init);
  }

  for (std::size_t l = 0; l < depth; ++l) {
    encoder_[l].conv1.collect(params_, "enc." + std::to_string(l) + ".conv1");
    encoder_[l].conv2.collect(params_, "enc." + std::to_string(l) + ".conv2");
  }
  drt_.collect(params_, "drt");
  for (std::size_t l = depth - 1; l-- > 0;) {
    const std::string prefix = "dec." + std::to_string(l);
    decoder_[l].up.collect(params_, prefix + ".up");
    decoder_[l].conv1.collect(params_, prefix + ".conv1");
    decoder_[l].conv2.collect(params_, prefix + ".conv2");
  }
  for (std::size_t i = 0; i < heads_.size(); ++i) heads_[i].collect(params_, "head." + std::to_string(i));
}

MultiScaleOutput SegNet::forward(const Tensor& x) const {
  const auto& c = config_;
  if (x.rank() != 4 || x.dim(1) != c.in_channels || x.dim(2) != c.height || x.dim(3) != c.width) {
    throw DimensionError("segnet input " + to_string(x.shape()) + " does not match config");
  }
  std::vector<Tensor> skips;
  Tensor y = x;
  for (std::size_t l = 0; l < c.depth; ++l) {
    if (l > 0) y = max_pool2d(y);
    y = relu(encoder_[l].conv2(relu(encoder_[l].conv1(y))));
    skips.push_back(y);
  }
  Tensor low = skips[c.depth - 2];
  Tensor bottom = skips[c.depth - 1];
  if (transformer_enabled_) {
    auto drt = drt_block(low, bottom, c.dispensed(), drt_);
    low = drt.low;
    bottom = drt.bottom;
  }
  skips[c.depth - 2] = low;

  // Decoder features from the bottom up, one per level.
  std::vector<Tensor> features{bottom};
  y = bottom;
  for (std::size_t l = c.depth - 1; l-- > 0;) {
    const auto& dec = decoder_[l];
    // A pointwise conv commutes with nearest upsampling; run it at low resolution.
    const Tensor up = upsample_nearest(dec.up(y), 2);
    y = relu(dec.conv2(relu(dec.conv1(concat({skips[l], up}, 1)))));
    features.push_back(y);
  }

  MultiScaleOutput out;
  out.features.assign(features.end() - static_cast<std::ptrdiff_t>(c.scales), features.end());
  for (std::size_t i = 0; i < c.scales; ++i) {
    const std::size_t factor = std::size_t{1} << c.feature_level(i);
    out.predictions.push_back(softmax(upsample_nearest(heads_[i](out.features[i]), factor), 1));
  }
  for (std::size_t i = 0; i + 1 < c.scales; ++i) {
    out.uncertainties.push_back(uncertainty_map(out.predictions[i], out.predictions.back()));
  }
  return out;
}

}  // namespace dtnet
