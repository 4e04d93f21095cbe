#ifndef DTNET_DISCRIMINATOR_HPP
#define DTNET_DISCRIMINATOR_HPP

// Feature ranking discriminator. Multi-scale decoder features are brought to
// the finest feature's size and channel count and stacked into F. A
// squeeze branch scores every channel of F,
//   R = sigmoid(w2 relu(w1 gap(F))),
// channels are sorted by descending score (stable, ties by index), and the
// top, middle and bottom thirds are routed through pointwise convolutions
// with phi, 2 phi and 3 phi outputs. The concatenated 6 phi channels feed a
// strided convolutional body ending in a one-channel probability map.

#include <span>
#include <vector>

#include "dtnet/layers.hpp"
#include "dtnet/rng.hpp"
#include "dtnet/tensor.hpp"

namespace dtnet {

struct DiscriminatorConfig {
  std::vector<std::size_t> feature_channels;  // channels of f_1..f_t; the last is beta
  std::size_t reduction = 4;                  // w1 maps t*beta -> t*beta/reduction
  std::size_t phi = 0;                        // 0 selects t*beta/3
  std::size_t body_width = 32;
  std::size_t body_layers = 4;
  double leaky_slope = 0.2;
  // Multiply F by R before routing (squeeze-excitation style). Off by default:
  // the scores then only order channels.
  bool gate_by_rank = false;

  std::size_t beta() const { return feature_channels.back(); }
  std::size_t stacked_channels() const { return feature_channels.size() * beta(); }
  std::size_t resolved_phi() const { return phi != 0 ? phi : stacked_channels() / 3; }
};

struct RankedFeatureBundle {
  Tensor stacked;                   // F: [N, t*beta, h, w]
  Tensor ranking;                   // R: [N, t*beta]
  std::vector<std::size_t> order;   // per sample, channel indices by descending R
  std::vector<Tensor> groups;       // G1..G3: [N, t*beta/3, h, w]
  Tensor routed;                    // [N, 6 phi, h, w]
  Tensor probability;               // P_dis: [N, 1, h', w']
};

// Stable descending order of each row of a [N, C] score matrix.
std::vector<std::size_t> rank_order(std::span<const double> scores, std::size_t rows, std::size_t cols);

class FeatureRankingDiscriminator {
 public:
  FeatureRankingDiscriminator(DiscriminatorConfig config, CounterRng& init);

  // Stacking, scoring and routing only (no body).
  RankedFeatureBundle rank_features(std::span<const Tensor> features) const;
  // Full pass, probability map included.
  RankedFeatureBundle evaluate(std::span<const Tensor> features) const;
  Tensor forward(std::span<const Tensor> features) const { return evaluate(features).probability; }

  const DiscriminatorConfig& config() const { return config_; }
  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  // Scoring weights, exposed for tests.
  const Conv2d& score_reduce() const { return w1_; }
  const Conv2d& score_expand() const { return w2_; }

 private:
  DiscriminatorConfig config_;
  std::vector<Conv2d> project_;  // f_1..f_{t-1} -> beta channels
  Conv2d w1_, w2_;
  Conv2d paths_[3];
  std::vector<Conv2d> body_;
  Conv2d classifier_;
  ParamStore params_;
};

}  // namespace dtnet

#endif  // DTNET_DISCRIMINATOR_HPP
