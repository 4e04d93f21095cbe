#ifndef DTNET_OPS_HPP
#define DTNET_OPS_HPP

// Differentiable tensor operations. Every function here returns a fresh
// tensor and, when a tape is active, records an exact backward rule.

#include <cstddef>
#include <span>
#include <vector>

#include "dtnet/tensor.hpp"

namespace dtnet {

// --- linear algebra --------------------------------------------------------

// a [..., M, K] x b [..., K, N]. Batch dims must match, or one operand may be
// a plain matrix that is shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// --- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// log(max(x, kLogEpsilon)); the gradient is zero where the clamp is active.
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

inline constexpr double kLogEpsilon = 1e-12;

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sums along `axis`, keeping it with extent 1.
Tensor sum_axis(const Tensor& x, std::size_t axis);
// Euclidean norm over all elements. The subgradient at 0 is taken as 0.
Tensor l2_norm(const Tensor& x);
// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Expands extent-1 axes of x to `shape` (same rank). Backward sums.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// --- convolution and resampling ---------------------------------------------

// Cross-correlation of x [N,Cin,H,W] with weight [Cout,Cin,k,k], zero padding.
// `bias` may be an undefined tensor.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

Tensor max_pool2d(const Tensor& x);  // 2x2 window, stride 2
Tensor avg_pool2d(const Tensor& x, std::size_t factor);
Tensor global_avg_pool(const Tensor& x);  // [N,C,H,W] -> [N,C,1,1]
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

// --- index remapping -------------------------------------------------------

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// out.flat[i] = x.flat[source[i]]. Backward scatter-adds.
Tensor gather(const Tensor& x, const Shape& shape, std::span<const std::size_t> source);
// Per-sample channel reordering: out[n, c] = x[n, order[n * C_out + c]].
Tensor gather_channels(const Tensor& x, std::span<const std::size_t> order);

}  // namespace dtnet

#endif  // DTNET_OPS_HPP
