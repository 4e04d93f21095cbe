#ifndef DTNET_LAYERS_HPP
#define DTNET_LAYERS_HPP

#include <string>
#include <utility>
#include <vector>

#include "dtnet/rng.hpp"
#include "dtnet/tensor.hpp"

namespace dtnet {

// Ordered, named view over parameter tensors. Entries alias the owning
// module's tensors, so updates through the store are seen by the module.
class ParamStore {
 public:
  void add(std::string name, Tensor tensor);
  void append(const ParamStore& other);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Total scalar count.
  std::size_t count() const;

  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Tensor of the given shape with entries drawn from U(-bound, bound).
Tensor uniform_tensor(Shape shape, double bound, CounterRng& rng, bool requires_grad = true);

struct Conv2d {
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  // He-uniform initialisation; "same" padding for odd kernels at stride 1.
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, CounterRng& rng,
         std::size_t stride = 1);

  Tensor operator()(const Tensor& x) const;
  void collect(ParamStore& store, const std::string& prefix) const;
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

}  // namespace dtnet

#endif  // DTNET_LAYERS_HPP
