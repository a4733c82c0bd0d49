#include "ren/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace ren {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

int conv_output_size(int in, int kernel, int stride, int pad) {
  if (stride < 1) throw ShapeError("stride must be >= 1, got " + std::to_string(stride));
  if (pad < 0) throw ShapeError("pad must be >= 0, got " + std::to_string(pad));
  const int span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError("window of size " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

namespace {

thread_local bool t_grad_enabled = true;

// Dot product with eight fixed accumulators. The summation order depends only
// on n, so results are reproducible and the loop vectorizes.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void require_defined(const Tensor<T>& t, const char* op, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": " + what + " is undefined");
}

struct ConvGeom {
  int C, H, W, kh, kw, stride, pad, Ho, Wo;
  std::size_t K() const { return static_cast<std::size_t>(C) * kh * kw; }
  std::size_t P() const { return static_cast<std::size_t>(Ho) * Wo; }
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::size_t P = g.P();
  for (int c = 0; c < g.C; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        T* dst = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * P;
        for (int oh = 0; oh < g.Ho; ++oh) {
          const int ih = oh * g.stride - g.pad + i;
          T* row = dst + static_cast<std::size_t>(oh) * g.Wo;
          if (ih < 0 || ih >= g.H) {
            std::fill(row, row + g.Wo, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * g.H + ih) * g.W;
          for (int ow = 0; ow < g.Wo; ++ow) {
            const int iw = ow * g.stride - g.pad + j;
            row[ow] = (iw >= 0 && iw < g.W) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
  const std::size_t P = g.P();
  for (int c = 0; c < g.C; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const T* src = col + ((static_cast<std::size_t>(c) * g.kh + i) * g.kw + j) * P;
        for (int oh = 0; oh < g.Ho; ++oh) {
          const int ih = oh * g.stride - g.pad + i;
          if (ih < 0 || ih >= g.H) continue;
          T* dst = dx + (static_cast<std::size_t>(c) * g.H + ih) * g.W;
          const T* row = src + static_cast<std::size_t>(oh) * g.Wo;
          for (int ow = 0; ow < g.Wo; ++ow) {
            const int iw = ow * g.stride - g.pad + j;
            if (iw >= 0 && iw < g.W) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

template <class T>
void check_finite_value(T v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("grad_check: non-finite ") + what);
}

template <class T, class Builder>
double grad_check_impl(const Builder& build, std::vector<Tensor<T>> inputs, double eps) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor<T> loss = build(inputs);
  if (loss.numel() != 1) throw ShapeError("grad_check: builder must return a scalar, got " + shape_str(loss.shape()));
  check_finite_value(loss.item(), "loss");
  backward(loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_values();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const T original = values[e];
      values[e] = static_cast<T>(original + eps);
      const double plus = static_cast<double>(build(inputs).item());
      values[e] = static_cast<T>(original - eps);
      const double minus = static_cast<double>(build(inputs).item());
      values[e] = original;
      check_finite_value(plus, "loss under perturbation");
      check_finite_value(minus, "loss under perturbation");
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = static_cast<double>(analytic[t][e]);
      check_finite_value(a, "analytic gradient");
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_mode_enabled() { return t_grad_enabled; }

// Tensor ---------------------------------------------------------------------

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape.size() > 4) throw ShapeError("tensor rank must be <= 4, got " + std::to_string(shape.size()));
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->values.size(), T(0));
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
  return node_->values[0];
}

template <class T>
void Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on && node_->grad.size() != node_->values.size()) node_->grad.assign(node_->values.size(), T(0));
  if (!on) node_->grad.clear();
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  node_->grad_populated = false;
}

template <class T>
Tensor<T> Tensor<T>::make_result(const char* op, Shape shape, std::vector<T> values,
                                 std::initializer_list<const Tensor*> inputs) {
  Tensor out = from(std::move(shape), std::move(values), false);
  out.node_->op = op;
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const Tensor* in : inputs) {
    if (in && in->defined() && in->requires_grad()) any = true;
  }
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->grad.assign(out.node_->values.size(), T(0));
  for (const Tensor* in : inputs) {
    if (!in || !in->defined()) continue;
    if (in->requires_grad()) {
      out.node_->parents.push_back(in->node_);
    } else {
      out.node_->saved.push_back(in->node_);
    }
  }
  return out;
}

template <class T>
Tensor<T> Tensor<T>::make_result(const char* op, Shape shape, std::vector<T> values, const std::vector<Tensor>& inputs) {
  Tensor out = make_result(op, std::move(shape), std::move(values), {});
  if (!t_grad_enabled) return out;
  for (const auto& in : inputs) {
    if (in.defined() && in.requires_grad()) {
      if (!out.node_->requires_grad) {
        out.node_->requires_grad = true;
        out.node_->grad.assign(out.node_->values.size(), T(0));
      }
      out.node_->parents.push_back(in.node_);
    }
  }
  if (out.node_->requires_grad) {
    for (const auto& in : inputs) {
      if (in.defined() && !in.requires_grad()) out.node_->saved.push_back(in.node_);
    }
  }
  return out;
}

// Graph ----------------------------------------------------------------------

template <class T>
Graph<T> Graph<T>::trace(const Tensor<T>& root) {
  Graph g;
  if (!root.defined() || !root.requires_grad()) return g;
  std::unordered_set<const detail::Node<T>*> visited;
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw Error("backward: loss is undefined");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  auto* root = loss.node();
  if (root->backward_done) throw Error("backward: already called on this loss; rebuild the graph first");
  if (!root->requires_grad) throw Error("backward: loss does not depend on any tensor that tracks gradients");
  const Graph<T> graph = Graph<T>::trace(loss);
  root->grad[0] = T(1);
  const auto& order = graph.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->grad_populated = true;
    if ((*it)->backward_fn) (*it)->backward_fn();
  }
  root->backward_done = true;
}

// conv2d ---------------------------------------------------------------------

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  require_defined(input, "conv2d", "input");
  require_defined(weight, "conv2d", "weight");
  if (input.rank() != 4) throw ShapeError("conv2d: input must be NxCxHxW, got " + shape_str(input.shape()));
  if (weight.rank() != 4) throw ShapeError("conv2d: weight must be OxCxKhxKw, got " + shape_str(weight.shape()));
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input channel dimension (axis 1) is " + std::to_string(input.dim(1)) +
                     " but weight expects " + std::to_string(weight.dim(1)));
  }
  const std::size_t N = input.dim(0);
  const std::size_t O = weight.dim(0);
  if (bias.defined() && (bias.numel() != O)) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.numel()) + " does not match " +
                     std::to_string(O) + " output channels");
  }
  ConvGeom g{};
  g.C = static_cast<int>(input.dim(1));
  g.H = static_cast<int>(input.dim(2));
  g.W = static_cast<int>(input.dim(3));
  g.kh = static_cast<int>(weight.dim(2));
  g.kw = static_cast<int>(weight.dim(3));
  g.stride = stride;
  g.pad = pad;
  g.Ho = conv_output_size(g.H, g.kh, stride, pad);
  g.Wo = conv_output_size(g.W, g.kw, stride, pad);
  const std::size_t K = g.K();
  const std::size_t P = g.P();
  const std::size_t in_stride = static_cast<std::size_t>(g.C) * g.H * g.W;

  std::vector<T> out(N * O * P);
  const T* x = input.values().data();
  const T* w = weight.values().data();
  const T* b = bias.defined() ? bias.values().data() : nullptr;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
    std::vector<T> col(K * P);
    im2col(x + n * in_stride, g, col.data());
    T* y = out.data() + n * O * P;
    for (std::size_t o = 0; o < O; ++o) {
      T* yo = y + o * P;
      std::fill(yo, yo + P, b ? b[o] : T(0));
      const T* wo = w + o * K;
      for (std::size_t k = 0; k < K; ++k) axpy(wo[k], col.data() + k * P, yo, P);
    }
  }

  Tensor<T> result = Tensor<T>::make_result("conv2d", {N, O, static_cast<std::size_t>(g.Ho), static_cast<std::size_t>(g.Wo)},
                                            std::move(out), {&input, &weight, &bias});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    auto* w_node = weight.node();
    auto* b_node = bias.defined() ? bias.node() : nullptr;
    out_node->backward_fn = [=]() {
      const T* dy = out_node->grad.data();
      const T* xv = in_node->values.data();
      const T* wv = w_node->values.data();
      const bool need_dx = in_node->requires_grad;
      const bool need_dw = w_node->requires_grad;
      if (b_node && b_node->requires_grad) {
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) {
            const T* d = dy + (n * O + o) * P;
            b_node->grad[o] += std::accumulate(d, d + P, T(0));
          }
        }
      }
      if (!need_dx && !need_dw) return;
      // Per-sample weight-gradient partials, summed afterwards in sample order,
      // keep the result independent of the thread count.
      std::vector<T> dw_partial(need_dw ? N * O * K : 0);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(N); ++n) {
        std::vector<T> col(K * P);
        im2col(xv + n * in_stride, g, col.data());
        const T* dyn = dy + n * O * P;
        if (need_dw) {
          T* part = dw_partial.data() + n * O * K;
          for (std::size_t o = 0; o < O; ++o) {
            for (std::size_t k = 0; k < K; ++k) part[o * K + k] = dot(dyn + o * P, col.data() + k * P, P);
          }
        }
        if (need_dx) {
          std::fill(col.begin(), col.end(), T(0));
          for (std::size_t o = 0; o < O; ++o) {
            const T* wo = wv + o * K;
            for (std::size_t k = 0; k < K; ++k) axpy(wo[k], dyn + o * P, col.data() + k * P, P);
          }
          col2im_add(col.data(), g, in_node->grad.data() + n * in_stride);
        }
      }
      if (need_dw) {
        T* dw = w_node->grad.data();
        for (std::size_t n = 0; n < N; ++n) {
          const T* part = dw_partial.data() + n * O * K;
          for (std::size_t i = 0; i < O * K; ++i) dw[i] += part[i];
        }
      }
    };
  }
  return result;
}

// maxpool2d ------------------------------------------------------------------

template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride) {
  require_defined(input, "maxpool2d", "input");
  if (input.rank() != 4) throw ShapeError("maxpool2d: input must be NxCxHxW, got " + shape_str(input.shape()));
  if (kernel < 1) throw ShapeError("maxpool2d: kernel must be >= 1");
  const int H = static_cast<int>(input.dim(2));
  const int W = static_cast<int>(input.dim(3));
  if (kernel > H || kernel > W) {
    throw ShapeError("maxpool2d: window " + std::to_string(kernel) + " exceeds input " + std::to_string(H) + "x" +
                     std::to_string(W));
  }
  const int Ho = conv_output_size(H, kernel, stride, 0);
  const int Wo = conv_output_size(W, kernel, stride, 0);
  const std::size_t planes = input.dim(0) * input.dim(1);
  std::vector<T> out(planes * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* x = input.values().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * H * W;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        std::size_t best = base + static_cast<std::size_t>(oh * stride) * W + ow * stride;
        T best_v = x[best];
        for (int i = 0; i < kernel; ++i) {
          for (int j = 0; j < kernel; ++j) {
            const std::size_t idx = base + static_cast<std::size_t>(oh * stride + i) * W + (ow * stride + j);
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (p * Ho + oh) * Wo + ow;
        out[o] = best_v;
        (*argmax)[o] = best;
      }
    }
  }
  Tensor<T> result = Tensor<T>::make_result(
      "maxpool2d", {input.dim(0), input.dim(1), static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)},
      std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      for (std::size_t o = 0; o < argmax->size(); ++o) in_node->grad[(*argmax)[o]] += out_node->grad[o];
    };
  }
  return result;
}

// elementwise ----------------------------------------------------------------

template <class T>
Tensor<T> relu(const Tensor<T>& input) {
  require_defined(input, "relu", "input");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  Tensor<T> result = Tensor<T>::make_result("relu", input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      for (std::size_t i = 0; i < in_node->values.size(); ++i) {
        if (in_node->values[i] > T(0)) in_node->grad[i] += out_node->grad[i];
      }
    };
  }
  return result;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "add", "lhs");
  require_defined(b, "add", "rhs");
  if (a.shape() != b.shape()) throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  Tensor<T> result = Tensor<T>::make_result("add", a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* a_node = a.node();
    auto* b_node = b.node();
    out_node->backward_fn = [=]() {
      if (a_node->requires_grad) axpy(T(1), out_node->grad.data(), a_node->grad.data(), out_node->grad.size());
      if (b_node->requires_grad) axpy(T(1), out_node->grad.data(), b_node->grad.data(), out_node->grad.size());
    };
  }
  return result;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a, "mul", "lhs");
  require_defined(b, "mul", "rhs");
  if (a.shape() != b.shape()) throw ShapeError("mul: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Tensor<T> result = Tensor<T>::make_result("mul", a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* a_node = a.node();
    auto* b_node = b.node();
    out_node->backward_fn = [=]() {
      const auto& g = out_node->grad;
      if (a_node->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) a_node->grad[i] += g[i] * b_node->values[i];
      }
      if (b_node->requires_grad) {
        for (std::size_t i = 0; i < g.size(); ++i) b_node->grad[i] += g[i] * a_node->values[i];
      }
    };
  }
  return result;
}

template <class T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
  require_defined(input, "scale", "input");
  std::vector<T> out(input.values().begin(), input.values().end());
  for (auto& v : out) v *= factor;
  Tensor<T> result = Tensor<T>::make_result("scale", input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() { axpy(factor, out_node->grad.data(), in_node->grad.data(), in_node->grad.size()); };
  }
  return result;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  require_defined(input, "reshape", "input");
  if (shape_numel(shape) != input.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(input.values().begin(), input.values().end());
  Tensor<T> result = Tensor<T>::make_result("reshape", std::move(shape), std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() { axpy(T(1), out_node->grad.data(), in_node->grad.data(), in_node->grad.size()); };
  }
  return result;
}

template <class T>
Tensor<T> sum(const Tensor<T>& input) {
  require_defined(input, "sum", "input");
  T total = 0;
  for (T v : input.values()) total += v;
  Tensor<T> result = Tensor<T>::make_result("sum", {}, {total}, {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      const T g = out_node->grad[0];
      for (auto& v : in_node->grad) v += g;
    };
  }
  return result;
}

template <class T>
Tensor<T> mean(const Tensor<T>& input) {
  require_defined(input, "mean", "input");
  if (input.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(input), T(1) / static_cast<T>(input.numel()));
}

template <class T>
Tensor<T> average(const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw ShapeError("average: no inputs");
  Tensor<T> acc = inputs.front();
  for (std::size_t i = 1; i < inputs.size(); ++i) acc = add(acc, inputs[i]);
  if (inputs.size() == 1) return acc;
  return scale(acc, T(1) / static_cast<T>(inputs.size()));
}

// linear ---------------------------------------------------------------------

template <class T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_defined(input, "linear", "input");
  require_defined(weight, "linear", "weight");
  if (input.rank() < 1) throw ShapeError("linear: input needs a batch axis");
  if (weight.rank() != 2) throw ShapeError("linear: weight must be OxD, got " + shape_str(weight.shape()));
  const std::size_t N = input.dim(0);
  const std::size_t D = N ? input.numel() / N : 0;
  const std::size_t O = weight.dim(0);
  if (weight.dim(1) != D) {
    throw ShapeError("linear: flattened input has D=" + std::to_string(D) + " features but weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.defined() && bias.numel() != O) {
    throw ShapeError("linear: bias length " + std::to_string(bias.numel()) + " does not match " + std::to_string(O) +
                     " outputs");
  }
  std::vector<T> out(N * O);
  const T* x = input.values().data();
  const T* w = weight.values().data();
  const T* b = bias.defined() ? bias.values().data() : nullptr;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) out[n * O + o] = (b ? b[o] : T(0)) + dot(x + n * D, w + o * D, D);
  }
  Tensor<T> result = Tensor<T>::make_result("linear", {N, O}, std::move(out), {&input, &weight, &bias});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    auto* w_node = weight.node();
    auto* b_node = bias.defined() ? bias.node() : nullptr;
    out_node->backward_fn = [=]() {
      const T* dy = out_node->grad.data();
      if (in_node->requires_grad) {
        const T* wv = w_node->values.data();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) axpy(dy[n * O + o], wv + o * D, in_node->grad.data() + n * D, D);
        }
      }
      if (w_node->requires_grad) {
        const T* xv = in_node->values.data();
        for (std::size_t o = 0; o < O; ++o) {
          for (std::size_t n = 0; n < N; ++n) axpy(dy[n * O + o], xv + n * D, w_node->grad.data() + o * D, D);
        }
      }
      if (b_node && b_node->requires_grad) {
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t o = 0; o < O; ++o) b_node->grad[o] += dy[n * O + o];
        }
      }
    };
  }
  return result;
}

// dropout --------------------------------------------------------------------

template <class T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, RngStream& rng) {
  require_defined(input, "dropout", "input");
  if (!(rate >= 0.0 && rate < 1.0)) throw InputError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(input.numel());
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? T(0) : keep_scale;
    out[i] = input.values()[i] * (*mask)[i];
  }
  Tensor<T> result = Tensor<T>::make_result("dropout", input.shape(), std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      for (std::size_t i = 0; i < mask->size(); ++i) in_node->grad[i] += out_node->grad[i] * (*mask)[i];
    };
  }
  return result;
}

// concat / slicing -----------------------------------------------------------

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = inputs.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : inputs) {
    require_defined(t, "concat", "input");
    if (t.rank() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(t.shape()) + " vs " + shape_str(first));
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && t.dim(d) != first[d]) {
        throw ShapeError("concat: dimension " + std::to_string(d) + " differs (" + std::to_string(t.dim(d)) + " vs " +
                         std::to_string(first[d]) + ")");
      }
    }
    out_shape[axis] += t.dim(axis);
  }
  if (inputs.size() == 1) return inputs.front();
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& t : inputs) {
    offsets.push_back(offset);
    const std::size_t chunk = t.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(t.values().data() + o * chunk, chunk, out.data() + o * out_row + offset);
    }
    offset += chunk;
  }
  Tensor<T> result = Tensor<T>::make_result("concat", out_shape, std::move(out), inputs);
  if (result.requires_grad()) {
    auto* out_node = result.node();
    std::vector<detail::Node<T>*> in_nodes;
    for (const auto& t : inputs) in_nodes.push_back(t.node());
    out_node->backward_fn = [=]() {
      for (std::size_t i = 0; i < in_nodes.size(); ++i) {
        auto* in = in_nodes[i];
        if (!in->requires_grad) continue;
        const std::size_t chunk = in->values.size() / outer;
        for (std::size_t o = 0; o < outer; ++o) {
          axpy(T(1), out_node->grad.data() + o * out_row + offsets[i], in->grad.data() + o * chunk, chunk);
        }
      }
    };
  }
  return result;
}

template <class T>
Tensor<T> slice_axis(const Tensor<T>& input, std::size_t axis, std::size_t begin, std::size_t length) {
  require_defined(input, "slice_axis", "input");
  if (axis >= input.rank()) throw ShapeError("slice_axis: axis out of range");
  if (begin + length > input.dim(axis) || length == 0) {
    throw ShapeError("slice_axis: range [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                     ") outside axis " + std::to_string(axis) + " of size " + std::to_string(input.dim(axis)));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= input.dim(d);
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < input.rank(); ++d) inner *= input.dim(d);
  const std::size_t in_row = input.dim(axis) * inner;
  const std::size_t chunk = length * inner;
  Shape out_shape = input.shape();
  out_shape[axis] = length;
  std::vector<T> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(input.values().data() + o * in_row + begin * inner, chunk, out.data() + o * chunk);
  }
  Tensor<T> result = Tensor<T>::make_result("slice_axis", out_shape, std::move(out), {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      for (std::size_t o = 0; o < outer; ++o) {
        axpy(T(1), out_node->grad.data() + o * chunk, in_node->grad.data() + o * in_row + begin * inner, chunk);
      }
    };
  }
  return result;
}

template <class T>
Tensor<T> slice_region(const Tensor<T>& input, int row, int col, int height, int width) {
  require_defined(input, "slice_region", "input");
  if (input.rank() != 4) throw ShapeError("slice_region: input must be NxCxHxW, got " + shape_str(input.shape()));
  const int H = static_cast<int>(input.dim(2));
  const int W = static_cast<int>(input.dim(3));
  if (row < 0 || col < 0 || height < 1 || width < 1 || row + height > H || col + width > W) {
    throw ShapeError("slice_region: window (" + std::to_string(row) + "," + std::to_string(col) + ") size " +
                     std::to_string(height) + "x" + std::to_string(width) + " does not fit a " + std::to_string(H) +
                     "x" + std::to_string(W) + " map");
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  std::vector<T> out(planes * height * width);
  const T* x = input.values().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (int i = 0; i < height; ++i) {
      std::copy_n(x + (p * H + row + i) * W + col, width, out.data() + (p * height + i) * width);
    }
  }
  Tensor<T> result = Tensor<T>::make_result(
      "slice_region",
      {input.dim(0), input.dim(1), static_cast<std::size_t>(height), static_cast<std::size_t>(width)}, std::move(out),
      {&input});
  if (result.requires_grad()) {
    auto* out_node = result.node();
    auto* in_node = input.node();
    out_node->backward_fn = [=]() {
      for (std::size_t p = 0; p < planes; ++p) {
        for (int i = 0; i < height; ++i) {
          axpy(T(1), out_node->grad.data() + (p * height + i) * width, in_node->grad.data() + (p * H + row + i) * W + col,
               static_cast<std::size_t>(width));
        }
      }
    };
  }
  return result;
}

// grad check -----------------------------------------------------------------

double grad_check(const LossBuilder& build, std::vector<Tensor<double>> inputs, double eps) {
  return grad_check_impl<double>(build, std::move(inputs), eps);
}

double grad_check_f32(const std::function<Tensor<float>(const std::vector<Tensor<float>>&)>& build,
                      std::vector<Tensor<float>> inputs, double eps) {
  return grad_check_impl<float>(build, std::move(inputs), eps);
}

// Explicit instantiations ----------------------------------------------------

#define REN_INSTANTIATE(T)                                                                                    \
  template class Tensor<T>;                                                                                   \
  template class Graph<T>;                                                                                    \
  template void backward<T>(const Tensor<T>&);                                                                \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);               \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int);                                                \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                               \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, bool, RngStream&);                                  \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                                   \
  template Tensor<T> slice_region<T>(const Tensor<T>&, int, int, int, int);                                   \
  template Tensor<T> slice_axis<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                  \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                           \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                               \
  template Tensor<T> average<T>(const std::vector<Tensor<T>>&);

REN_INSTANTIATE(float)
REN_INSTANTIATE(double)

#undef REN_INSTANTIATE

}  // namespace ren
