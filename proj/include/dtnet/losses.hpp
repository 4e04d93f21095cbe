#ifndef DTNET_LOSSES_HPP
#define DTNET_LOSSES_HPP

#include <span>
#include <vector>

#include "dtnet/tensor.hpp"

namespace dtnet {

// Mean over pixels of -log p[label]. `probs` is [N,K,H,W], normalised over K;
// `labels` holds N*H*W class indices in row-major order.
Tensor cross_entropy(const Tensor& probs, std::span<const int> labels);

// Constant one-hot encoding of labels as [N,K,H,W].
Tensor one_hot(std::span<const int> labels, const Shape& shape);

// Per-pixel KL(p_i || p_t) summed over the class axis: [N,1,H,W].
Tensor uncertainty_map(const Tensor& p_i, const Tensor& p_t);

// Multi-scale consistency over predictions p_1..p_t (all [N,K,H,W]):
//   1/(t-1) * ( sum_i ||U_i||_2 + mean[ sum_i (p_i - p_t)^2 e^{-U_i} / sum_i e^{-U_i} ] )
Tensor multiscale_consistency(std::span<const Tensor> predictions);

// Mean binary cross-entropy between a probability map and domain labels.
Tensor discriminator_loss(const Tensor& p_dis, const Tensor& y_dis);

}  // namespace dtnet

#endif  // DTNET_LOSSES_HPP
