#ifndef DTNET_SEGNET_HPP
#define DTNET_SEGNET_HPP

// U-shaped segmenter: a convolutional encoder whose two deepest blocks pass
// through the dispensed residual transformer, a decoder with skip
// connections, and per-scale softmax heads on the last `scales` decoder
// features (the transformed bottom block counts as the coarsest feature).

#include <vector>

#include "dtnet/dispensed.hpp"
#include "dtnet/layers.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/tensor.hpp"

namespace dtnet {

struct SegNetConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 16;
  std::size_t depth = 4;   // encoder levels
  std::size_t scales = 3;  // t, number of prediction heads
  std::size_t classes = 2;
  std::size_t height = 64;
  std::size_t width = 64;
  // Dispensation of the transformer block; its spatial and channel dims are
  // derived from the levels above.
  std::size_t lambda = 2;
  std::size_t m = 16;
  std::size_t n = 16;
  std::size_t p = 4;
  std::size_t heads = 4;

  void validate() const;
  DispensedConfig dispensed() const;
  std::size_t level_channels(std::size_t level) const { return base_channels << level; }
  std::size_t level_height(std::size_t level) const { return height >> level; }
  std::size_t level_width(std::size_t level) const { return width >> level; }
  // Encoder level hosting feature f_i, i in [0, scales).
  std::size_t feature_level(std::size_t i) const { return scales - 1 - i; }
};

struct MultiScaleOutput {
  std::vector<Tensor> features;       // f_1..f_t, coarse to fine
  std::vector<Tensor> predictions;    // p_1..p_t, [N,K,H,W] at input resolution
  std::vector<Tensor> uncertainties;  // U_1..U_{t-1}, [N,1,H,W]
};

class SegNet {
 public:
  SegNet(const SegNetConfig& config, CounterRng& init);

  MultiScaleOutput forward(const Tensor& x) const;

  const SegNetConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  // With the transformer disabled the two deepest blocks pass through unchanged.
  void set_transformer_enabled(bool enabled) { transformer_enabled_ = enabled; }

 private:
  struct EncoderLevel {
    Conv2d conv1, conv2;
  };
  struct DecoderLevel {
    Conv2d up, conv1, conv2;
  };

  SegNetConfig config_;
  std::vector<EncoderLevel> encoder_;
  DrtParams drt_;
  std::vector<DecoderLevel> decoder_;  // indexed by output level
  std::vector<Conv2d> heads_;
  ParamStore params_;
  bool transformer_enabled_ = true;
};

}  // namespace dtnet

#endif  // DTNET_SEGNET_HPP
