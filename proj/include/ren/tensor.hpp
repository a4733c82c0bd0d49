#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ren/error.hpp"
#include "ren/rng.hpp"

namespace ren {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  bool grad_populated = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Inputs without gradients that backward_fn still reads.
  std::vector<std::shared_ptr<const Node>> saved;
  std::function<void()> backward_fn;
};

}  // namespace detail

/// Handle to a node in the reverse-mode graph. Copies share the node.
///
/// Values are fixed once an op has produced them; only the gradient buffer is
/// written during a backward sweep. Parameters are the exception: the optimizer
/// updates their values in place between sweeps.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) { return from({}, {value}, requires_grad); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const T> values() const { return node_->values; }
  std::span<T> mutable_values() { return node_->values; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Turns gradient tracking on for a leaf, allocating a zeroed buffer.
  void set_requires_grad(bool on);
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  bool grad_populated() const { return node_->grad_populated; }
  void zero_grad();

  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const { return from(shape(), node_->values, requires_grad); }

  detail::Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const noexcept { return node_; }

  /// Creates an op output whose parents are `inputs`. Gradient tracking is on
  /// when grad mode is enabled and any input tracks gradients.
  static Tensor make_result(const char* op, Shape shape, std::vector<T> values,
                            std::initializer_list<const Tensor*> inputs);
  static Tensor make_result(const char* op, Shape shape, std::vector<T> values, const std::vector<Tensor>& inputs);

 private:
  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node<T>> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Nodes reachable from a root, in topological order (inputs first).
template <class T>
class Graph {
 public:
  static Graph trace(const Tensor<T>& root);

  const std::vector<detail::Node<T>*>& order() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_.size(); }

 private:
  std::vector<detail::Node<T>*> order_;
};

/// Reverse sweep from a scalar loss. Gradients accumulate into every reachable
/// tensor that tracks them; calling it twice on the same loss throws.
template <class T>
void backward(const Tensor<T>& loss);

// Operations -----------------------------------------------------------------

/// 2-D cross-correlation, NCHW input, OIHW weight. `bias` may be undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad);

/// Max pooling without padding. Gradient goes to the first maximum of each
/// window in row-major order.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride);

template <class T>
Tensor<T> relu(const Tensor<T>& input);

/// out = flatten(input) * weight^T + bias, where flatten keeps axis 0.
template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Inverted dropout; identity when not training or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, RngStream& rng);

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, std::size_t axis);

/// Sub-window [row, row+h) x [col, col+w) of every NCHW map.
template <class T>
Tensor<T> slice_region(const Tensor<T>& input, int row, int col, int height, int width);

/// Contiguous range [begin, begin+length) along `axis`.
template <class T>
Tensor<T> slice_axis(const Tensor<T>& input, std::size_t axis, std::size_t begin, std::size_t length);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> scale(const Tensor<T>& input, T factor);

template <class T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape);

template <class T>
Tensor<T> sum(const Tensor<T>& input);

template <class T>
Tensor<T> mean(const Tensor<T>& input);

/// Elementwise mean of equally shaped tensors.
template <class T>
Tensor<T> average(const std::vector<Tensor<T>>& inputs);

/// Output spatial size of a conv or pool along one axis.
int conv_output_size(int in, int kernel, int stride, int pad);

// Gradient checking ----------------------------------------------------------

using LossBuilder = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Compares the analytic gradient of `build(inputs)` with central differences
/// over every element of every input. Returns the maximum of
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const LossBuilder& build, std::vector<Tensor<double>> inputs, double eps = 1e-5);

/// Same measure for 32-bit graphs; use a larger eps.
double grad_check_f32(const std::function<Tensor<float>(const std::vector<Tensor<float>>&)>& build,
                      std::vector<Tensor<float>> inputs, double eps = 1e-2);

}  // namespace ren
