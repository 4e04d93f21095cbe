#ifndef DTNET_TENSOR_HPP
#define DTNET_TENSOR_HPP

// Dense float64 tensors with a tape-based reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage. Values are
// written once by the producing operation and never mutated afterwards,
// except for leaf parameters updated in place by an optimizer.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// only when one of their inputs requires a gradient. With no active tape,
// forward passes run without any bookkeeping.

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtnet {

using Shape = std::vector<std::size_t>;

// Tensor storage. A fixed alignment keeps Eigen's vectorised kernels on the
// same code path from run to run, so results are bitwise reproducible.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Buffer data, bool requires_grad = false);
  Tensor(Shape shape, const std::vector<double>& data, bool requires_grad = false);
  Tensor(Shape shape, std::initializer_list<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Mutable view for leaf initialisation and optimizer updates only.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  // Zero-initialises the gradient buffer on first use.
  Buffer& grad_buffer() const;
  void zero_grad();

  // Copy of the values with no gradient history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  // Populates gradients of every requires_grad tensor reachable from `loss`.
  // A tape can be replayed once; call reset() before recording a new graph.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Installs a tape as the thread's active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Records `backward` for `output` when a tape is active and any input needs
// a gradient. Returns whether the op was recorded.
bool record(const Tensor& output, std::initializer_list<Tensor> inputs, Tape::BackwardFn backward);
bool record(const Tensor& output, const std::vector<Tensor>& inputs, Tape::BackwardFn backward);

// Runs backward on the active tape.
void backward(const Tensor& loss);

// Counts scalar multiplies performed by matmul/conv kernels on this thread
// while alive, bucketed by the innermost FlopCategory label.
class FlopCounter {
 public:
  FlopCounter();
  ~FlopCounter();
  FlopCounter(const FlopCounter&) = delete;
  FlopCounter& operator=(const FlopCounter&) = delete;

  std::uint64_t multiplies(std::string_view category) const;
  std::uint64_t total() const;
  const std::map<std::string, std::uint64_t, std::less<>>& by_category() const { return counts_; }

  // Adds to the active counter, if any, under the current category.
  static void add(std::uint64_t multiplies);
  static void add(std::uint64_t multiplies, std::string_view category);

 private:
  std::map<std::string, std::uint64_t, std::less<>> counts_;
  FlopCounter* previous_;
};

class FlopCategory {
 public:
  explicit FlopCategory(std::string_view label);
  ~FlopCategory();
  FlopCategory(const FlopCategory&) = delete;
  FlopCategory& operator=(const FlopCategory&) = delete;

  static std::string_view current();

 private:
  std::string_view previous_;
};

namespace flop_category {
inline constexpr std::string_view attention = "attention";
inline constexpr std::string_view position = "position";
inline constexpr std::string_view conv = "conv";
inline constexpr std::string_view other = "other";
}  // namespace flop_category

}  // namespace dtnet

#endif  // DTNET_TENSOR_HPP
