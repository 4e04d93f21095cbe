#include "dtnet/optim.hpp"

#include <cmath>

namespace dtnet {

Adam::Adam(ParamStore params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& [_, t] : params_.entries()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto& entries = params_.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& t = entries[k].second;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto x = t.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

std::vector<NamedTensor> Adam::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.push_back({prefix + "steps", {1}, {static_cast<double>(steps_)}});
  const auto& entries = params_.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    out.push_back({prefix + "m." + entries[k].first, entries[k].second.shape(), m_[k]});
    out.push_back({prefix + "v." + entries[k].first, entries[k].second.shape(), v_[k]});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  const auto* steps = find_tensor(tensors, prefix + "steps");
  if (steps == nullptr || steps->data.size() != 1) throw CheckpointError("optimizer state missing '" + prefix + "steps'");
  steps_ = static_cast<std::uint64_t>(steps->data[0]);
  const auto& entries = params_.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    for (auto [tag, dst] : {std::pair{"m.", &m_[k]}, std::pair{"v.", &v_[k]}}) {
      const auto* src = find_tensor(tensors, prefix + tag + entries[k].first);
      if (src == nullptr || src->data.size() != dst->size()) {
        throw CheckpointError("optimizer state missing or mis-sized for '" + entries[k].first + "'");
      }
      *dst = src->data;
    }
  }
}

}  // namespace dtnet
