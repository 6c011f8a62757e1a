#ifndef DGSR_AUTOGRAD_HPP
#define DGSR_AUTOGRAD_HPP

#include "dgsr/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace dgsr {

// Reverse-mode automatic differentiation over rank-4 tensors.
//
// A Var is a handle to a node in a dynamically built graph. Parameters are
// long-lived leaf Vars with requires_grad set; every op on Vars records a
// closure that maps the output gradient to its inputs. The graph lives as long
// as the Vars that reference it.

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor<Scalar>&)> backward;

  void accumulate(const typename Tensor<Scalar>::Array& g) {
    if (grad.empty() && value.size() > 0) grad = Tensor<Scalar>(value.shape());
    grad.data() += g;
  }
  Tensor<Scalar>& grad_buffer() {
    if (grad.empty() && value.size() > 0) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<Scalar>& value() const { return node_->value; }
  /// Direct access for optimizer updates; only valid on leaves.
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient accumulated by backward(); zeros if nothing reached this node.
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Runs reverse accumulation from a single-element loss.
template <typename Scalar>
void backward(const Var<Scalar>& loss);

/// Whether ops currently record the graph (thread local).
bool grad_enabled();

/// Disables graph recording in its scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  return Var<Scalar>(std::move(value), false);
}

template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& x) {
  return Var<Scalar>(x.value(), false);
}

// Element-wise arithmetic. Shapes must match exactly.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, double s);
/// a * x + b * y with scalar coefficients.
template <typename Scalar>
Var<Scalar> axpby(double a, const Var<Scalar>& x, double b, const Var<Scalar>& y);

template <typename Scalar> Var<Scalar> square(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> silu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& x, double slope);
/// Gradient passes only where lo <= x <= hi.
template <typename Scalar> Var<Scalar> clamp(const Var<Scalar>& x, double lo, double hi);

/// x + noise_coef * noise where noise is a constant tensor; cheaper than axpby.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, double x_coef, const Tensor<Scalar>& offset);

/// 2-D convolution. weight: (Cout, Cin, k, k); bias: (1, Cout, 1, 1) or undefined.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   int stride, int padding);

/// x: (N, C, H, W) plus per-(n, c) offsets e: (N, C, 1, 1) or (1, C, 1, 1).
template <typename Scalar>
Var<Scalar> add_channelwise(const Var<Scalar>& x, const Var<Scalar>& e);

template <typename Scalar>
Var<Scalar> group_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       int groups, double eps = 1e-5);

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, int first, int count);

/// Per batch element n: [a_n | b_n] along channels if a_first[n], else [b_n | a_n].
template <typename Scalar>
Var<Scalar> ordered_concat(const Var<Scalar>& a, const Var<Scalar>& b,
                           const std::vector<std::uint8_t>& a_first);

template <typename Scalar> Var<Scalar> avg_pool2(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> upsample_nearest2(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

/// Scaled dot-product self-attention over spatial positions; q, k, v: (N, C, H, W).
template <typename Scalar>
Var<Scalar> spatial_attention(const Var<Scalar>& q, const Var<Scalar>& k, const Var<Scalar>& v);

template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);

template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& x);
/// Mean of squared differences over all elements.
template <typename Scalar> Var<Scalar> mse_loss(const Var<Scalar>& a, const Var<Scalar>& b);
/// Mean binary cross-entropy; probabilities are clamped to [eps, 1 - eps] first.
template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& prob, const std::vector<std::uint8_t>& labels,
                     double eps = 1e-7);

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Var<Scalar> operator*(double s, const Var<Scalar>& a) { return scale(a, s); }

}  // namespace dgsr

#endif  // DGSR_AUTOGRAD_HPP
