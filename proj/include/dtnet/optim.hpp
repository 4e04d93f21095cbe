#ifndef DTNET_OPTIM_HPP
#define DTNET_OPTIM_HPP

#include <string>
#include <vector>

#include "dtnet/checkpoint.hpp"
#include "dtnet/layers.hpp"

namespace dtnet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation over a fixed parameter set.
class Adam {
 public:
  Adam(ParamStore params, AdamOptions options = {});

  // Applies one update from the accumulated gradients. Parameters that
  // received no gradient are left untouched.
  void step();
  void zero_grad() { params_.zero_grad(); }

  std::uint64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

  // Moments and step count as named tensors under `prefix`.
  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix);

 private:
  ParamStore params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace dtnet

#endif  // DTNET_OPTIM_HPP
