#include "wdualmine/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <unordered_set>

namespace wdualmine {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

[[noreturn]] static void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, real v, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  int64_t count = shape_numel(shape);
  if (count < 0) fail("negative extent in shape " + shape_str(shape));
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(count), v);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<real> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    fail("data length " + std::to_string(data.size()) + " does not match shape " +
         shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(real v) { return from_data({}, {v}); }

real Tensor::item() const {
  if (!node_ || node_->numel() != 1) fail("item() on non-scalar tensor");
  return node_->value[0];
}

void Tensor::set_requires_grad(bool rg) {
  node_->requires_grad = rg;
  if (rg) node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_op(const char* name, Shape shape, std::vector<real> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parents)
      if (p.defined() && p.requires_grad()) track = true;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (Tensor& p : parents)
      if (p.defined()) n->parents.push_back(p.node());
    n->backward = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    fail("backward() requires a scalar loss, got " +
         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));

  // Post-order DFS restricted to the grad-requiring subgraph; the reversed
  // order is a topological order, so each node fires exactly once with its
  // full downstream gradient.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  TensorNode* root = loss.node().get();
  if (!root->requires_grad) {
    root->ensure_grad();
    root->grad[0] += real(1);
    return;  // nothing upstream wants gradients
  }
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Intermediates restart from zero each sweep; leaves (parameters and any
  // user tensor) keep accumulating until zero_grad.
  for (TensorNode* n : order) {
    if (!n->parents.empty())
      n->grad.assign(n->value.size(), real(0));
    else
      n->ensure_grad();
  }
  root->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// broadcasting
// ---------------------------------------------------------------------------

namespace {

// Right-aligned broadcast shape, or failure.
Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t ra = a.size(), rb = b.size(), r = std::max(ra, rb);
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int64_t ea = i < r - ra ? 1 : a[i - (r - ra)];
    int64_t eb = i < r - rb ? 1 : b[i - (r - rb)];
    if (ea != eb && ea != 1 && eb != 1)
      fail("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Row-major strides with 0 on broadcast axes, aligned to out rank.
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  size_t r = out.size(), ri = in.size();
  std::vector<int64_t> strides(r, 0);
  int64_t s = 1;
  for (size_t i = ri; i-- > 0;) {
    size_t oi = i + (r - ri);
    strides[oi] = (in[i] == 1 && out[oi] != 1) ? 0 : s;
    s *= in[i];
  }
  return strides;
}

struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> sa, sb;
  bool trivial;  // both inputs already have the output shape
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b) {
  BroadcastPlan p;
  p.out = broadcast_shape(a.shape(), b.shape());
  p.trivial = (a.shape() == p.out && b.shape() == p.out);
  if (!p.trivial) {
    p.sa = broadcast_strides(a.shape(), p.out);
    p.sb = broadcast_strides(b.shape(), p.out);
  }
  return p;
}

// Calls fn(out_index, a_index, b_index) over the broadcast output space.
template <typename Fn>
void for_broadcast(const BroadcastPlan& p, Fn&& fn) {
  int64_t n = shape_numel(p.out);
  if (p.trivial) {
    for (int64_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  size_t r = p.out.size();
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (size_t d = r; d-- > 0;) {
      idx[d]++;
      ia += p.sa[d];
      ib += p.sb[d];
      if (idx[d] < p.out[d]) break;
      ia -= p.sa[d] * p.out[d];
      ib -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

using BinFn = real (*)(real, real);

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, BinFn f,
                 BinFn dfa, BinFn dfb) {
  BroadcastPlan p = plan_broadcast(a, b);
  std::vector<real> out(static_cast<size_t>(shape_numel(p.out)));
  const real* av = a.data().data();
  const real* bv = b.data().data();
  for_broadcast(p, [&](int64_t i, int64_t ia, int64_t ib) {
    out[static_cast<size_t>(i)] = f(av[ia], bv[ib]);
  });
  return make_op(name, p.out, std::move(out), {a, b},
                 [p, dfa, dfb](TensorNode& self) {
                   TensorNode& pa = *self.parents[0];
                   TensorNode& pb = *self.parents[1];
                   const real* av = pa.value.data();
                   const real* bv = pb.value.data();
                   const real* g = self.grad.data();
                   // Accumulating through the broadcast index map performs
                   // the reduction over stretched axes implicitly.
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     real* ga = pa.grad.data();
                     for_broadcast(p, [&](int64_t i, int64_t ia, int64_t ib) {
                       ga[ia] += dfa(av[ia], bv[ib]) * g[i];
                     });
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     real* gb = pb.grad.data();
                     for_broadcast(p, [&](int64_t i, int64_t ia, int64_t ib) {
                       gb[ib] += dfb(av[ia], bv[ib]) * g[i];
                     });
                   }
                 });
}

using UnFn = real (*)(real);
using UnDFn = real (*)(real, real);  // (x, y) -> dy/dx

Tensor unary_op(const char* name, const Tensor& x, UnFn f, UnDFn df) {
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  Shape shp = x.shape();
  return make_op(name, std::move(shp), std::move(out), {x},
                 [df](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* xv = px.value.data();
                   const real* yv = self.value.data();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (size_t i = 0; i < self.value.size(); ++i)
                     gx[i] += df(xv[i], yv[i]) * g[i];
                 });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](real x, real y) { return x + y; },
      [](real, real) { return real(1); }, [](real, real) { return real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](real x, real y) { return x - y; },
      [](real, real) { return real(1); }, [](real, real) { return real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](real x, real y) { return x * y; },
      [](real, real y) { return y; }, [](real x, real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](real x, real y) { return x / y; },
      [](real, real y) { return real(1) / y; },
      [](real x, real y) { return -x / (y * y); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      "maximum", a, b, [](real x, real y) { return x >= y ? x : y; },
      [](real x, real y) { return x >= y ? real(1) : real(0); },
      [](real x, real y) { return x >= y ? real(0) : real(1); });
}

Tensor ge_mask(const Tensor& a, const Tensor& b) {
  BroadcastPlan p = plan_broadcast(a, b);
  std::vector<real> out(static_cast<size_t>(shape_numel(p.out)));
  const real* av = a.data().data();
  const real* bv = b.data().data();
  for_broadcast(p, [&](int64_t i, int64_t ia, int64_t ib) {
    out[static_cast<size_t>(i)] = av[ia] >= bv[ib] ? real(1) : real(0);
  });
  return Tensor::from_data(p.out, std::move(out));
}

Tensor scalar_mul(const Tensor& x, real s) {
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * s;
  Shape shp = x.shape();
  return make_op("scalar_mul", std::move(shp), std::move(out), {x},
                 [s](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (size_t i = 0; i < self.value.size(); ++i) gx[i] += s * g[i];
                 });
}

Tensor scalar_add(const Tensor& x, real s) {
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + s;
  Shape shp = x.shape();
  return make_op("scalar_add", std::move(shp), std::move(out), {x},
                 [](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i];
                 });
}

Tensor neg(const Tensor& x) { return scalar_mul(x, real(-1)); }

Tensor abs(const Tensor& x) {
  return unary_op(
      "abs", x, [](real v) { return v < 0 ? -v : v; },
      [](real v, real) { return v > 0 ? real(1) : (v < 0 ? real(-1) : real(0)); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](real v) { return v > 0 ? v : real(0); },
      [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](real v) { return std::tanh(v); },
      [](real, real y) { return real(1) - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](real v) {
        return v >= 0 ? real(1) / (real(1) + std::exp(-v))
                      : std::exp(v) / (real(1) + std::exp(v));
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](real v) {
        // max(v,0) + log1p(exp(-|v|)) avoids overflow on both tails
        real m = v > 0 ? v : real(0);
        return m + std::log1p(std::exp(v > 0 ? -v : v));
      },
      [](real v, real) {
        return v >= 0 ? real(1) / (real(1) + std::exp(-v))
                      : std::exp(v) / (real(1) + std::exp(v));
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](real v) { return std::exp(v); },
      [](real, real y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](real v) { return std::log(v); },
      [](real v, real) { return real(1) / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](real v) { return std::sqrt(v); },
      [](real, real y) { return y > 0 ? real(0.5) / y : real(0); });
}

Tensor clip(const Tensor& x, real lo, real hi) {
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = xv[i] < lo ? lo : (xv[i] > hi ? hi : xv[i]);
  Shape shp = x.shape();
  return make_op("clip", std::move(shp), std::move(out), {x},
                 [lo, hi](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* xv = px.value.data();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (size_t i = 0; i < self.value.size(); ++i)
                     if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
                 });
}

Tensor rand_uniform(Shape shape, SplitMix64& rng, real lo, real hi,
                    bool requires_grad) {
  int64_t n = shape_numel(shape);
  std::vector<real> data(static_cast<size_t>(n));
  for (auto& v : data) v = static_cast<real>(rng.uniform(lo, hi));
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

}  // namespace wdualmine
