#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wdualmine/config.hpp"
#include "wdualmine/rng.hpp"

namespace wdualmine {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One record of the backward graph. `parents` keeps the inputs alive;
// `backward` reads this node's grad and accumulates into the parents'.
// The graph is a DAG by construction (ops only reference existing nodes).
struct TensorNode {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until touched; same length as value after
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};

// Dense n-dimensional tensor with reverse-mode autodiff. Value semantics
// over a shared node: copies alias the same storage, which is what the
// graph wants. Row-major layout throughout.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<real> data, bool requires_grad = false);
  static Tensor scalar(real v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }

  std::span<const real> data() const { return node_->value; }
  std::span<real> data() { return node_->value; }
  std::span<const real> grad() const { return node_->grad; }
  real item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool rg);
  void zero_grad();

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Thread-local switch: while disabled, ops compute values but record no
// graph. Used for inference and metric evaluation.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar loss. Parameter (leaf) grads accumulate
// across calls; intermediate grads are reset per sweep.
void backward(const Tensor& loss);

// Shared op constructor used by all op implementations.
Tensor make_op(const char* name, Shape shape, std::vector<real> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn);

// ---- elementwise (NumPy-style broadcasting: shapes right-aligned, extent-1
// axes stretch; anything else is rejected) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// Ties route value and gradient to the first argument.
Tensor maximum(const Tensor& a, const Tensor& b);
// 1 where a >= b else 0; constant (never part of the graph).
Tensor ge_mask(const Tensor& a, const Tensor& b);

Tensor scalar_mul(const Tensor& x, real s);
Tensor scalar_add(const Tensor& x, real s);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor clip(const Tensor& x, real lo, real hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, real s) { return scalar_mul(a, s); }
inline Tensor operator*(real s, const Tensor& a) { return scalar_mul(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- shape ops ----
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor concat_channels(const std::vector<Tensor>& xs);  // NCHW, axis 1
Tensor slice_channels(const Tensor& x, int64_t from, int64_t count);  // NCHW
Tensor upsample_nearest2x(const Tensor& x);             // NCHW
Tensor avg_pool2x2(const Tensor& x);                    // NCHW, even H and W
// Reflect padding (edge not repeated) on the last two axes. Pads larger
// than the extent fold back and forth.
Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop2d(const Tensor& x, int top, int left, int64_t h, int64_t w);

// ---- reductions (empty tensors rejected) ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axes(const Tensor& x, const std::vector<int>& axes, bool keepdim);
Tensor variance(const Tensor& x);                    // population (divide by N)
Tensor covariance(const Tensor& a, const Tensor& b); // population
Tensor global_avg_pool(const Tensor& x);             // NCHW -> NC

// ---- neural-net ops ----
// x: NCHW, w: OIkk, b: {O} or undefined. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int stride = 1, int dilation = 1, int padding = 0);
// 1-D convolution over the channel axis of an NC tensor, zero padded,
// odd kernel, no bias (used by channel attention).
Tensor conv1d_channel(const Tensor& x, const Tensor& w);
// a: {M,K}, b: {N,K} -> {M,N} with C[i][j] = dot(a[i], b[j]).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x: {N,C}, w: {D,C}, b: {D} or undefined -> {N,D}.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// Softmax over axis 1 of an NKHW tensor, max-stabilized.
Tensor softmax_channel(const Tensor& x);
// Per-channel |sobel_h| + |sobel_v| over the last two axes, reflect padded.
Tensor sobel_gradient_magnitude(const Tensor& x);

// Uniform random tensor, deterministic from the generator state.
Tensor rand_uniform(Shape shape, SplitMix64& rng, real lo, real hi,
                    bool requires_grad = false);

}  // namespace wdualmine
