#include "dtnet/losses.hpp"

#include <stdexcept>

#include "dtnet/ops.hpp"

namespace dtnet {

Tensor one_hot(std::span<const int> labels, const Shape& shape) {
  if (shape.size() != 4) throw DimensionError("one_hot: expected [N,K,H,W], got " + to_string(shape));
  const std::size_t n = shape[0];
  const std::size_t k = shape[1];
  const std::size_t hw = shape[2] * shape[3];
  if (labels.size() != n * hw) {
    throw DimensionError("one_hot: " + std::to_string(labels.size()) + " labels for shape " + to_string(shape));
  }
  std::vector<double> data(n * k * hw, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const int label = labels[b * hw + i];
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw std::out_of_range("label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
      }
      data[(b * k + static_cast<std::size_t>(label)) * hw + i] = 1.0;
    }
  }
  return Tensor(shape, std::move(data));
}

Tensor cross_entropy(const Tensor& probs, std::span<const int> labels) {
  const Tensor target = one_hot(labels, probs.shape());
  const double pixels = static_cast<double>(labels.size());
  return mul_scalar(sum(mul(target, log(probs))), -1.0 / pixels);
}

Tensor uncertainty_map(const Tensor& p_i, const Tensor& p_t) {
  if (p_i.shape() != p_t.shape() || p_i.rank() != 4) {
    throw DimensionError("uncertainty_map: shapes " + to_string(p_i.shape()) + " and " + to_string(p_t.shape()));
  }
  return sum_axis(mul(p_i, sub(log(p_i), log(p_t))), 1);
}

Tensor multiscale_consistency(std::span<const Tensor> predictions) {
  if (predictions.size() < 2) throw std::invalid_argument("multiscale_consistency needs at least two scales");
  const Tensor& top = predictions.back();
  const Shape& shape = top.shape();
  Tensor norms;
  Tensor numerator;
  Tensor denominator;
  for (std::size_t i = 0; i + 1 < predictions.size(); ++i) {
    const Tensor u = uncertainty_map(predictions[i], top);
    const Tensor norm = l2_norm(u);
    const Tensor weight = exp(neg(u));
    const Tensor weighted = mul(square(sub(predictions[i], top)), broadcast_to(weight, shape));
    norms = norms.defined() ? add(norms, norm) : norm;
    numerator = numerator.defined() ? add(numerator, weighted) : weighted;
    denominator = denominator.defined() ? add(denominator, weight) : weight;
  }
  const Tensor rectified = mean(div(numerator, broadcast_to(denominator, shape)));
  return mul_scalar(add(norms, rectified), 1.0 / static_cast<double>(predictions.size() - 1));
}

Tensor discriminator_loss(const Tensor& p_dis, const Tensor& y_dis) {
  if (p_dis.shape() != y_dis.shape()) {
    throw DimensionError("discriminator_loss: prediction " + to_string(p_dis.shape()) + " vs label " +
                         to_string(y_dis.shape()));
  }
  const Tensor ones = Tensor::full(p_dis.shape(), 1.0);
  const Tensor positive = mul(y_dis, log(p_dis));
  const Tensor negative = mul(sub(ones, y_dis), log(sub(ones, p_dis)));
  return neg(mean(add(positive, negative)));
}

}  // namespace dtnet
