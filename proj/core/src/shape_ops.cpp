#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

// Zigzag fold for reflect padding (edge sample not repeated): works for any
// offset, e.g. -1 -> 1, n -> n-2.
int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    fail("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
         " changes element count");
  std::vector<real> out(x.data().begin(), x.data().end());
  return make_op("reshape", std::move(new_shape), std::move(out), {x},
                 [](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   for (size_t i = 0; i < self.grad.size(); ++i)
                     px.grad[i] += self.grad[i];
                 });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_channels on empty list");
  for (const Tensor& t : xs)
    if (t.rank() != 4) fail("concat_channels expects NCHW, got " + shape_str(t.shape()));
  int64_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  int64_t c_total = 0;
  for (const Tensor& t : xs) {
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w)
      fail("concat_channels shape mismatch: " + shape_str(t.shape()) + " vs " +
           shape_str(xs[0].shape()));
    c_total += t.dim(1);
  }
  int64_t hw = h * w;
  std::vector<real> out(static_cast<size_t>(n * c_total * hw));
  std::vector<int64_t> chans;
  int64_t off_c = 0;
  for (const Tensor& t : xs) {
    int64_t c = t.dim(1);
    chans.push_back(c);
    const real* src = t.data().data();
    for (int64_t b = 0; b < n; ++b)
      std::copy(src + b * c * hw, src + (b + 1) * c * hw,
                out.begin() + (b * c_total + off_c) * hw);
    off_c += c;
  }
  std::vector<Tensor> parents(xs.begin(), xs.end());
  return make_op("concat_channels", {n, c_total, h, w}, std::move(out),
                 std::move(parents), [n, hw, c_total, chans](TensorNode& self) {
                   int64_t off_c = 0;
                   const real* g = self.grad.data();
                   for (size_t k = 0; k < self.parents.size(); ++k) {
                     TensorNode& p = *self.parents[k];
                     int64_t c = chans[k];
                     if (p.requires_grad) {
                       p.ensure_grad();
                       real* gp = p.grad.data();
                       for (int64_t b = 0; b < n; ++b) {
                         const real* gsrc = g + (b * c_total + off_c) * hw;
                         real* gdst = gp + b * c * hw;
                         for (int64_t i = 0; i < c * hw; ++i) gdst[i] += gsrc[i];
                       }
                     }
                     off_c += c;
                   }
                 });
}

Tensor slice_channels(const Tensor& x, int64_t from, int64_t count) {
  if (x.rank() != 4) fail("slice_channels expects NCHW, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (from < 0 || count < 1 || from + count > c)
    fail("slice_channels [" + std::to_string(from) + ", " + std::to_string(from + count) +
         ") out of range for " + shape_str(x.shape()));
  int64_t hw = h * w;
  std::vector<real> out(static_cast<size_t>(n * count * hw));
  const real* xv = x.data().data();
  for (int64_t b = 0; b < n; ++b)
    std::copy(xv + (b * c + from) * hw, xv + (b * c + from + count) * hw,
              out.begin() + b * count * hw);
  return make_op("slice_channels", {n, count, h, w}, std::move(out), {x},
                 [n, c, hw, from, count](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t b = 0; b < n; ++b) {
                     const real* gsrc = g + b * count * hw;
                     real* gdst = gx + (b * c + from) * hw;
                     for (int64_t i = 0; i < count * hw; ++i) gdst[i] += gsrc[i];
                   }
                 });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 4) fail("upsample_nearest2x expects NCHW, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t oh = 2 * h, ow = 2 * w;
  std::vector<real> out(static_cast<size_t>(n * c * oh * ow));
  const real* xv = x.data().data();
  for (int64_t bc = 0; bc < n * c; ++bc) {
    const real* src = xv + bc * h * w;
    real* dst = out.data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xcol = 0; xcol < ow; ++xcol)
        dst[y * ow + xcol] = src[(y / 2) * w + (xcol / 2)];
  }
  return make_op("upsample_nearest2x", {n, c, oh, ow}, std::move(out), {x},
                 [n, c, h, w](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   int64_t oh = 2 * h, ow = 2 * w;
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t bc = 0; bc < n * c; ++bc) {
                     const real* gsrc = g + bc * oh * ow;
                     real* gdst = gx + bc * h * w;
                     for (int64_t y = 0; y < oh; ++y)
                       for (int64_t xcol = 0; xcol < ow; ++xcol)
                         gdst[(y / 2) * w + (xcol / 2)] += gsrc[y * ow + xcol];
                   }
                 });
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.rank() != 4) fail("avg_pool2x2 expects NCHW, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) fail("avg_pool2x2 requires even extents, got " + shape_str(x.shape()));
  int64_t oh = h / 2, ow = w / 2;
  std::vector<real> out(static_cast<size_t>(n * c * oh * ow));
  const real* xv = x.data().data();
  for (int64_t bc = 0; bc < n * c; ++bc) {
    const real* src = xv + bc * h * w;
    real* dst = out.data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xc = 0; xc < ow; ++xc)
        dst[y * ow + xc] = (src[(2 * y) * w + 2 * xc] + src[(2 * y) * w + 2 * xc + 1] +
                            src[(2 * y + 1) * w + 2 * xc] + src[(2 * y + 1) * w + 2 * xc + 1]) *
                           real(0.25);
  }
  return make_op("avg_pool2x2", {n, c, oh, ow}, std::move(out), {x},
                 [n, c, h, w](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   int64_t oh = h / 2, ow = w / 2;
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t bc = 0; bc < n * c; ++bc) {
                     const real* gsrc = g + bc * oh * ow;
                     real* gdst = gx + bc * h * w;
                     for (int64_t y = 0; y < oh; ++y)
                       for (int64_t xc = 0; xc < ow; ++xc) {
                         real q = gsrc[y * ow + xc] * real(0.25);
                         gdst[(2 * y) * w + 2 * xc] += q;
                         gdst[(2 * y) * w + 2 * xc + 1] += q;
                         gdst[(2 * y + 1) * w + 2 * xc] += q;
                         gdst[(2 * y + 1) * w + 2 * xc + 1] += q;
                       }
                   }
                 });
}

Tensor reflect_pad2d(const Tensor& x, int top, int bottom, int left, int right) {
  if (x.rank() < 2) fail("reflect_pad2d expects rank >= 2, got " + shape_str(x.shape()));
  if (top < 0 || bottom < 0 || left < 0 || right < 0) fail("reflect_pad2d: negative pad");
  Shape in = x.shape();
  int64_t h = in[in.size() - 2], w = in[in.size() - 1];
  int64_t planes = x.numel() / (h * w);
  int64_t oh = h + top + bottom, ow = w + left + right;
  Shape out_shape = in;
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<real> out(static_cast<size_t>(planes * oh * ow));
  const real* xv = x.data().data();
  for (int64_t p = 0; p < planes; ++p) {
    const real* src = xv + p * h * w;
    real* dst = out.data() + p * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      int64_t sy = reflect_index(y - top, h);
      for (int64_t xc = 0; xc < ow; ++xc)
        dst[y * ow + xc] = src[sy * w + reflect_index(xc - left, w)];
    }
  }
  return make_op("reflect_pad2d", std::move(out_shape), std::move(out), {x},
                 [planes, h, w, top, left, oh = oh, ow = ow](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t p = 0; p < planes; ++p) {
                     const real* gsrc = g + p * oh * ow;
                     real* gdst = gx + p * h * w;
                     for (int64_t y = 0; y < oh; ++y) {
                       int64_t sy = reflect_index(y - top, h);
                       for (int64_t xc = 0; xc < ow; ++xc)
                         gdst[sy * w + reflect_index(xc - left, w)] += gsrc[y * ow + xc];
                     }
                   }
                 });
}

Tensor crop2d(const Tensor& x, int top, int left, int64_t h, int64_t w) {
  if (x.rank() < 2) fail("crop2d expects rank >= 2, got " + shape_str(x.shape()));
  Shape in = x.shape();
  int64_t ih = in[in.size() - 2], iw = in[in.size() - 1];
  if (top < 0 || left < 0 || top + h > ih || left + w > iw)
    fail("crop2d window out of bounds for " + shape_str(in));
  int64_t planes = x.numel() / (ih * iw);
  Shape out_shape = in;
  out_shape[out_shape.size() - 2] = h;
  out_shape[out_shape.size() - 1] = w;
  std::vector<real> out(static_cast<size_t>(planes * h * w));
  const real* xv = x.data().data();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < h; ++y)
      std::copy(xv + p * ih * iw + (y + top) * iw + left,
                xv + p * ih * iw + (y + top) * iw + left + w,
                out.begin() + p * h * w + y * w);
  return make_op("crop2d", std::move(out_shape), std::move(out), {x},
                 [planes, ih, iw, top, left, h, w](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t p = 0; p < planes; ++p)
                     for (int64_t y = 0; y < h; ++y)
                       for (int64_t xc = 0; xc < w; ++xc)
                         gx[p * ih * iw + (y + top) * iw + left + xc] +=
                             g[p * h * w + y * w + xc];
                 });
}

Tensor softmax_channel(const Tensor& x) {
  if (x.rank() != 4) fail("softmax_channel expects NKHW, got " + shape_str(x.shape()));
  int64_t n = x.dim(0), k = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 2) fail("softmax_channel needs K >= 2, got " + shape_str(x.shape()));
  int64_t hw = h * w;
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (int64_t b = 0; b < n; ++b) {
    const real* src = xv + b * k * hw;
    real* dst = out.data() + b * k * hw;
    for (int64_t p = 0; p < hw; ++p) {
      real m = src[p];
      for (int64_t c = 1; c < k; ++c) m = std::max(m, src[c * hw + p]);
      real z = 0;
      for (int64_t c = 0; c < k; ++c) {
        real e = std::exp(src[c * hw + p] - m);
        dst[c * hw + p] = e;
        z += e;
      }
      real inv = real(1) / z;
      for (int64_t c = 0; c < k; ++c) dst[c * hw + p] *= inv;
    }
  }
  Shape shp = x.shape();
  return make_op("softmax_channel", std::move(shp), std::move(out), {x},
                 [n, k, hw](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* y = self.value.data();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t b = 0; b < n; ++b) {
                     const real* yb = y + b * k * hw;
                     const real* gb = g + b * k * hw;
                     real* gxb = gx + b * k * hw;
                     for (int64_t p = 0; p < hw; ++p) {
                       real dot = 0;
                       for (int64_t c = 0; c < k; ++c)
                         dot += gb[c * hw + p] * yb[c * hw + p];
                       for (int64_t c = 0; c < k; ++c)
                         gxb[c * hw + p] +=
                             yb[c * hw + p] * (gb[c * hw + p] - dot);
                     }
                   }
                 });
}

namespace {

// 3x3 Sobel responses with reflect boundary; correlation convention.
constexpr int kSobelH[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelV[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace

Tensor sobel_gradient_magnitude(const Tensor& x) {
  if (x.rank() < 2) fail("sobel expects rank >= 2, got " + shape_str(x.shape()));
  Shape in = x.shape();
  int64_t h = in[in.size() - 2], w = in[in.size() - 1];
  // the reflect fold is defined for any extent, so small feature maps
  // (the deepest pyramid scale of small inputs) pass through the mixer
  if (h < 1 || w < 1) fail("sobel requires non-empty extents, got " + shape_str(in));
  int64_t planes = x.numel() / (h * w);
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const real* xv = x.data().data();
  for (int64_t p = 0; p < planes; ++p) {
    const real* src = xv + p * h * w;
    real* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xc = 0; xc < w; ++xc) {
        real gh = 0, gv = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          int64_t sy = reflect_index(y + dy, h);
          for (int dx = -1; dx <= 1; ++dx) {
            real v = src[sy * w + reflect_index(xc + dx, w)];
            gh += real(kSobelH[dy + 1][dx + 1]) * v;
            gv += real(kSobelV[dy + 1][dx + 1]) * v;
          }
        }
        dst[y * w + xc] = std::abs(gh) + std::abs(gv);
      }
    }
  }
  return make_op("sobel_gradient_magnitude", in, std::move(out), {x},
                 [planes, h, w](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const real* xv = px.value.data();
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   for (int64_t p = 0; p < planes; ++p) {
                     const real* src = xv + p * h * w;
                     const real* gsrc = g + p * h * w;
                     real* gdst = gx + p * h * w;
                     for (int64_t y = 0; y < h; ++y) {
                       for (int64_t xc = 0; xc < w; ++xc) {
                         // recompute the two responses for the sign
                         real gh = 0, gv = 0;
                         for (int dy = -1; dy <= 1; ++dy) {
                           int64_t sy = reflect_index(y + dy, h);
                           for (int dx = -1; dx <= 1; ++dx) {
                             real v = src[sy * w + reflect_index(xc + dx, w)];
                             gh += real(kSobelH[dy + 1][dx + 1]) * v;
                             gv += real(kSobelV[dy + 1][dx + 1]) * v;
                           }
                         }
                         real sh = gh > 0 ? real(1) : (gh < 0 ? real(-1) : real(0));
                         real sv = gv > 0 ? real(1) : (gv < 0 ? real(-1) : real(0));
                         real go = gsrc[y * w + xc];
                         if (sh == 0 && sv == 0) continue;
                         for (int dy = -1; dy <= 1; ++dy) {
                           int64_t sy = reflect_index(y + dy, h);
                           for (int dx = -1; dx <= 1; ++dx) {
                             int64_t sx = reflect_index(xc + dx, w);
                             gdst[sy * w + sx] +=
                                 go * (sh * real(kSobelH[dy + 1][dx + 1]) +
                                       sv * real(kSobelV[dy + 1][dx + 1]));
                           }
                         }
                       }
                     }
                   }
                 });
}

}  // namespace wdualmine
