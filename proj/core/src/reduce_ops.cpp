#include <algorithm>
#include <stdexcept>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

void check_nonempty(const Tensor& x, const char* who) {
  if (!x.defined() || x.numel() == 0) fail(std::string(who) + " on empty tensor");
}

}  // namespace

Tensor sum(const Tensor& x) {
  check_nonempty(x, "sum");
  const real* xv = x.data().data();
  real acc = 0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i) acc += xv[i];
  return make_op("sum", {}, {acc}, {x}, [](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    real g = self.grad[0];
    for (auto& gv : px.grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  check_nonempty(x, "mean");
  return scalar_mul(sum(x), real(1) / static_cast<real>(x.numel()));
}

Tensor sum_axes(const Tensor& x, const std::vector<int>& axes, bool keepdim) {
  check_nonempty(x, "sum_axes");
  const Shape& in = x.shape();
  std::vector<char> reduced(in.size(), 0);
  for (int a : axes) {
    if (a < 0 || a >= static_cast<int>(in.size()))
      fail("sum_axes: axis " + std::to_string(a) + " out of range for " + shape_str(in));
    reduced[static_cast<size_t>(a)] = 1;
  }
  Shape out_shape;
  for (size_t i = 0; i < in.size(); ++i) {
    if (reduced[i]) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(in[i]);
    }
  }

  // Map each input linear index to its output linear index once.
  std::vector<int64_t> out_strides(in.size(), 0);
  {
    int64_t s = 1;
    for (size_t i = in.size(); i-- > 0;) {
      if (!reduced[i]) {
        out_strides[i] = s;
        s *= in[i];
      }
    }
  }
  int64_t n_in = x.numel();
  int64_t n_out = shape_numel(out_shape);
  std::vector<real> out(static_cast<size_t>(n_out), real(0));
  const real* xv = x.data().data();

  // in-index walk with carry, tracking the mapped out index
  std::vector<int64_t> idx(in.size(), 0);
  int64_t oi = 0;
  for (int64_t i = 0; i < n_in; ++i) {
    out[static_cast<size_t>(oi)] += xv[i];
    for (size_t d = in.size(); d-- > 0;) {
      idx[d]++;
      oi += out_strides[d];
      if (idx[d] < in[d]) break;
      oi -= out_strides[d] * in[d];
      idx[d] = 0;
    }
  }

  Shape in_shape = in;
  return make_op("sum_axes", out_shape, std::move(out), {x},
                 [in_shape, out_strides](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   std::vector<int64_t> idx(in_shape.size(), 0);
                   int64_t oi = 0;
                   int64_t n_in = static_cast<int64_t>(px.value.size());
                   for (int64_t i = 0; i < n_in; ++i) {
                     gx[i] += g[oi];
                     for (size_t d = in_shape.size(); d-- > 0;) {
                       idx[d]++;
                       oi += out_strides[d];
                       if (idx[d] < in_shape[d]) break;
                       oi -= out_strides[d] * in_shape[d];
                       idx[d] = 0;
                     }
                   }
                 });
}

Tensor variance(const Tensor& x) {
  check_nonempty(x, "variance");
  Tensor m = mean(x);
  Tensor centered = sub(x, m);
  return mean(mul(centered, centered));
}

Tensor covariance(const Tensor& a, const Tensor& b) {
  check_nonempty(a, "covariance");
  if (a.shape() != b.shape())
    fail("covariance requires equal shapes, got " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
  Tensor ca = sub(a, mean(a));
  Tensor cb = sub(b, mean(b));
  return mean(mul(ca, cb));
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) fail("global_avg_pool expects NCHW, got " + shape_str(x.shape()));
  check_nonempty(x, "global_avg_pool");
  Tensor s = sum_axes(x, {2, 3}, /*keepdim=*/false);
  return scalar_mul(s, real(1) / static_cast<real>(x.dim(2) * x.dim(3)));
}

}  // namespace wdualmine
