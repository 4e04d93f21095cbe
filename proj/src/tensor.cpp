#include "dtnet/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dtnet {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, Buffer data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (dtnet::numel(shape) != data.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                         " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, const std::vector<double>& data, bool requires_grad)
    : Tensor(std::move(shape), Buffer(data.begin(), data.end()), requires_grad) {}

Tensor::Tensor(Shape shape, std::initializer_list<double> data, bool requires_grad)
    : Tensor(std::move(shape), Buffer(data), requires_grad) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = dtnet::numel(shape);
  return Tensor(std::move(shape), Buffer(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + to_string(shape()));
  return impl_->data[0];
}

Buffer& Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
thread_local FlopCounter* g_active_counter = nullptr;
thread_local std::string_view g_category = flop_category::other;
}  // namespace

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (consumed_) throw AutogradError("tape already consumed by backward(); reset() before recording");
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw AutogradError("backward() called twice without reset()");
  if (!loss.defined() || loss.numel() != 1) {
    throw AutogradError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) throw AutogradError("loss does not depend on any tensor requiring grad");
  consumed_ = true;
  Tensor root = loss;
  auto& g = root.grad_buffer();
  std::fill(g.begin(), g.end(), 0.0);
  g[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

bool record(const Tensor& output, const std::vector<Tensor>& inputs, Tape::BackwardFn backward) {
  if (g_active_tape == nullptr) return false;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return false;
  Tensor out = output;
  out.set_requires_grad(true);
  g_active_tape->record(inputs, out, std::move(backward));
  return true;
}

bool record(const Tensor& output, std::initializer_list<Tensor> inputs, Tape::BackwardFn backward) {
  return record(output, std::vector<Tensor>(inputs), std::move(backward));
}

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw AutogradError("backward() without an active tape");
  g_active_tape->backward(loss);
}

// ---------------------------------------------------------------------------

FlopCounter::FlopCounter() : previous_(g_active_counter) { g_active_counter = this; }
FlopCounter::~FlopCounter() { g_active_counter = previous_; }

std::uint64_t FlopCounter::multiplies(std::string_view category) const {
  auto it = counts_.find(category);
  return it == counts_.end() ? 0 : it->second;
}

std::uint64_t FlopCounter::total() const {
  std::uint64_t sum = 0;
  for (const auto& [_, v] : counts_) sum += v;
  return sum;
}

void FlopCounter::add(std::uint64_t multiplies) { add(multiplies, g_category); }

void FlopCounter::add(std::uint64_t multiplies, std::string_view category) {
  if (g_active_counter == nullptr || multiplies == 0) return;
  auto& counts = g_active_counter->counts_;
  auto it = counts.find(category);
  if (it == counts.end()) {
    counts.emplace(std::string(category), multiplies);
  } else {
    it->second += multiplies;
  }
}

FlopCategory::FlopCategory(std::string_view label) : previous_(g_category) { g_category = label; }
FlopCategory::~FlopCategory() { g_category = previous_; }
std::string_view FlopCategory::current() { return g_category; }

}  // namespace dtnet
