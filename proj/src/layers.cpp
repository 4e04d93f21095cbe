#include "dtnet/layers.hpp"

#include <cmath>

#include "dtnet/ops.hpp"

namespace dtnet {

void ParamStore::add(std::string name, Tensor tensor) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

void ParamStore::append(const ParamStore& other) {
  for (const auto& [name, t] : other.entries_) add(name, t);
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

const Tensor* ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

Tensor* ParamStore::find(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

Tensor uniform_tensor(Shape shape, double bound, CounterRng& rng, bool requires_grad) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, CounterRng& rng,
               std::size_t stride)
    : stride(stride), padding(kernel / 2) {
  const double fan_in = static_cast<double>(in_channels * kernel * kernel);
  weight = uniform_tensor({out_channels, in_channels, kernel, kernel}, std::sqrt(6.0 / fan_in), rng);
  bias = Tensor::zeros({out_channels}, true);
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }

void Conv2d::collect(ParamStore& store, const std::string& prefix) const {
  store.add(prefix + ".weight", weight);
  store.add(prefix + ".bias", bias);
}

}  // namespace dtnet
