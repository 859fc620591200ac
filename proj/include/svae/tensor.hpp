#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "svae/rng.hpp"

namespace svae {

// Dense double-precision tensors in row-major order with reverse-mode
// automatic differentiation. 4-D data uses [batch, channels, height, width].
//
// Determinism contract: every reduction runs in a fixed index order, and
// parallel sections only ever split work so that each output element is
// written by exactly one task. Identical inputs therefore produce bitwise
// identical outputs for any worker count.

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded differentiable operation. `seq` is the execution order used
// to replay the tape backwards.
struct Node {
  uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  TensorImpl* out = nullptr;
  std::function<void()> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // producer; null for leaves

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad();
};

bool grad_enabled();

}  // namespace detail

// Disables graph recording within a scope. Values are still computed; only
// the backward bookkeeping is skipped. Used by all inference paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int ndim() const;
  int dim(int i) const;
  int64_t numel() const;

  const double* data() const;
  double* data();
  const std::vector<double>& values() const;
  std::vector<double>& values();
  double item() const;  // requires numel() == 1
  double at(std::initializer_list<int> index) const;

  Tensor& set_requires_grad(bool on = true);
  bool requires_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  // Same values, detached from any recorded graph.
  Tensor detached() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_op(Shape, std::vector<double>, const char*, std::vector<Tensor>,
                        std::function<void(detail::TensorImpl&)>);
};

// Builds a tracked op result. When recording is enabled and any input requires
// gradients, `backward` is registered; it receives the output impl (upstream
// gradient in .grad) and must accumulate into the captured inputs' grads.
// This is the extension point other modules use for fused ops.
Tensor make_op(Shape shape, std::vector<double> values, const char* op,
               std::vector<Tensor> inputs,
               std::function<void(detail::TensorImpl&)> backward);

// ---- operations ------------------------------------------------------

// Strided cross-correlation with zero padding (no kernel flip).
// input [B,Cin,H,W], kernels [Cout,Cin,k,k], bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int padding);

// Adjoint of conv2d. kernels [Cin,Cout,k,k].
// H_out = (H-1)*stride - 2*padding + k + output_padding.
Tensor conv2d_transposed(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                         int stride, int padding, int output_padding);

Tensor elementwise_pow(const Tensor& x, int n);  // n >= 1

// Channel concat [x, x^2, ..., x^q]; block n-1 holds x^n.
Tensor power_stack(const Tensor& x, int q);

Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);

// Identical shapes, or either side scalar (numel 1). No general broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor sum(const Tensor& x);                     // scalar
Tensor mse(const Tensor& a, const Tensor& b);    // scalar mean of squared diff

// Copy of channels [c0, c1) of a [B,C,H,W] tensor.
Tensor slice_channels(const Tensor& x, int c0, int c1);

// ---- backward --------------------------------------------------------

// The ordered record of operations reachable from a root, replayed in
// reverse execution order; each node is visited exactly once.
class GradientTape {
 public:
  explicit GradientTape(const Tensor& root);
  void replay_backward();
  size_t recorded() const { return ordered_.size(); }

 private:
  std::vector<detail::Node*> ordered_;
};

// Populates gradients of all reachable leaves with d(loss)/d(leaf).
// `loss` must be a recorded scalar.
void backward(const Tensor& loss);

}  // namespace svae
