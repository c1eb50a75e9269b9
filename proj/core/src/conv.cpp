#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

// Row-parallel GEMMs. Every output element is produced by exactly one
// thread with a fixed accumulation order, so results are bit-identical
// regardless of thread count.

// C(MxN) += A(MxK) * B(KxN)
void gemm_nn(int64_t m, int64_t n, int64_t k, const real* a, const real* b, real* c) {
#pragma omp parallel for schedule(static) if (m * n * k > (1 << 14))
  for (int64_t i = 0; i < m; ++i) {
    real* crow = c + i * n;
    const real* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      real av = arow[kk];
      if (av == real(0)) continue;
      const real* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(MxN) += A(MxK) * B(NxK)^T
void gemm_nt(int64_t m, int64_t n, int64_t k, const real* a, const real* b, real* c) {
#pragma omp parallel for schedule(static) if (m * n * k > (1 << 14))
  for (int64_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const real* brow = b + j * k;
      real acc = 0;
      for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// C(MxN) += A(KxM)^T * B(KxN)
void gemm_tn(int64_t m, int64_t n, int64_t k, const real* a, const real* b, real* c) {
#pragma omp parallel for schedule(static) if (m * n * k > (1 << 14))
  for (int64_t i = 0; i < m; ++i) {
    real* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      real av = a[kk * m + i];
      if (av == real(0)) continue;
      const real* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct ConvDims {
  int64_t n, ci, h, w;     // input
  int64_t co, kh, kw;      // kernel
  int64_t oh, ow;          // output
  int stride, dilation, padding;
  int64_t patch() const { return ci * kh * kw; }
  int64_t ohw() const { return oh * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int dilation,
                   int padding) {
  if (x.rank() != 4) fail("conv2d input must be NCHW, got " + shape_str(x.shape()));
  if (w.rank() != 4) fail("conv2d kernel must be OIkk, got " + shape_str(w.shape()));
  if (stride < 1 || dilation < 1 || padding < 0) fail("conv2d: bad stride/dilation/padding");
  ConvDims d;
  d.n = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.dilation = dilation;
  d.padding = padding;
  if (w.dim(1) != d.ci)
    fail("conv2d channel mismatch: kernel expects " + std::to_string(w.dim(1)) +
         " input channels but input is " + shape_str(x.shape()) + " (kernel " +
         shape_str(w.shape()) + ")");
  d.oh = (d.h + 2 * padding - dilation * (d.kh - 1) - 1) / stride + 1;
  d.ow = (d.w + 2 * padding - dilation * (d.kw - 1) - 1) / stride + 1;
  if (d.oh < 1 || d.ow < 1)
    fail("conv2d: kernel " + shape_str(w.shape()) + " does not fit input " +
         shape_str(x.shape()) + " with padding " + std::to_string(padding));
  return d;
}

// col is patch() x ohw(), zero-filled outside the image.
void im2col(const ConvDims& d, const real* x, real* col) {
  for (int64_t c = 0; c < d.ci; ++c) {
    const real* plane = x + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        real* row = col + ((c * d.kh + ki) * d.kw + kj) * d.ohw();
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          int64_t sy = oy * d.stride - d.padding + ki * d.dilation;
          real* out_row = row + oy * d.ow;
          if (sy < 0 || sy >= d.h) {
            std::fill(out_row, out_row + d.ow, real(0));
            continue;
          }
          const real* src_row = plane + sy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            int64_t sx = ox * d.stride - d.padding + kj * d.dilation;
            out_row[ox] = (sx >= 0 && sx < d.w) ? src_row[sx] : real(0);
          }
        }
      }
    }
  }
}

void col2im_accum(const ConvDims& d, const real* col, real* gx) {
  for (int64_t c = 0; c < d.ci; ++c) {
    real* plane = gx + c * d.h * d.w;
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        const real* row = col + ((c * d.kh + ki) * d.kw + kj) * d.ohw();
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          int64_t sy = oy * d.stride - d.padding + ki * d.dilation;
          if (sy < 0 || sy >= d.h) continue;
          const real* src_row = row + oy * d.ow;
          real* dst_row = plane + sy * d.w;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            int64_t sx = ox * d.stride - d.padding + kj * d.dilation;
            if (sx >= 0 && sx < d.w) dst_row[sx] += src_row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int dilation, int padding) {
  ConvDims d = conv_dims(x, w, stride, dilation, padding);
  bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != d.co))
    fail("conv2d bias must be {" + std::to_string(d.co) + "}, got " + shape_str(b.shape()));

  std::vector<real> out(static_cast<size_t>(d.n * d.co * d.ohw()), real(0));
  std::vector<real> col(static_cast<size_t>(d.patch() * d.ohw()));
  const real* xv = x.data().data();
  const real* wv = w.data().data();
  for (int64_t bi = 0; bi < d.n; ++bi) {
    im2col(d, xv + bi * d.ci * d.h * d.w, col.data());
    gemm_nn(d.co, d.ohw(), d.patch(), wv, col.data(),
            out.data() + bi * d.co * d.ohw());
  }
  if (has_bias) {
    const real* bv = b.data().data();
    for (int64_t bi = 0; bi < d.n; ++bi)
      for (int64_t o = 0; o < d.co; ++o) {
        real bias = bv[o];
        real* row = out.data() + (bi * d.co + o) * d.ohw();
        for (int64_t p = 0; p < d.ohw(); ++p) row[p] += bias;
      }
  }

  std::vector<Tensor> parents = has_bias ? std::vector<Tensor>{x, w, b}
                                         : std::vector<Tensor>{x, w};
  return make_op(
      "conv2d", {d.n, d.co, d.oh, d.ow}, std::move(out), std::move(parents),
      [d, has_bias](TensorNode& self) {
        TensorNode& px = *self.parents[0];
        TensorNode& pw = *self.parents[1];
        const real* g = self.grad.data();
        const real* xv = px.value.data();
        const real* wv = pw.value.data();

        if (has_bias) {
          TensorNode& pb = *self.parents[2];
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t bi = 0; bi < d.n; ++bi)
              for (int64_t o = 0; o < d.co; ++o) {
                const real* row = g + (bi * d.co + o) * d.ohw();
                real acc = 0;
                for (int64_t p = 0; p < d.ohw(); ++p) acc += row[p];
                pb.grad[static_cast<size_t>(o)] += acc;
              }
          }
        }

        bool need_x = px.requires_grad, need_w = pw.requires_grad;
        if (!need_x && !need_w) return;
        if (need_x) px.ensure_grad();
        if (need_w) pw.ensure_grad();
        // the col buffer is recomputed here rather than kept from forward;
        // backward trades a little time for graph memory
        std::vector<real> col(static_cast<size_t>(d.patch() * d.ohw()));
        std::vector<real> colg;
        if (need_x) colg.resize(static_cast<size_t>(d.patch() * d.ohw()));
        for (int64_t bi = 0; bi < d.n; ++bi) {
          const real* gout = g + bi * d.co * d.ohw();
          if (need_w) {
            im2col(d, xv + bi * d.ci * d.h * d.w, col.data());
            gemm_nt(d.co, d.patch(), d.ohw(), gout, col.data(), pw.grad.data());
          }
          if (need_x) {
            std::fill(colg.begin(), colg.end(), real(0));
            gemm_tn(d.patch(), d.ohw(), d.co, wv, gout, colg.data());
            col2im_accum(d, colg.data(), px.grad.data() + bi * d.ci * d.h * d.w);
          }
        }
      });
}

Tensor conv1d_channel(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2) fail("conv1d_channel expects NC input, got " + shape_str(x.shape()));
  if (w.rank() != 1 || w.dim(0) % 2 == 0)
    fail("conv1d_channel kernel must be odd 1-D, got " + shape_str(w.shape()));
  int64_t n = x.dim(0), c = x.dim(1), k = w.dim(0), half = k / 2;
  std::vector<real> out(static_cast<size_t>(n * c), real(0));
  const real* xv = x.data().data();
  const real* wv = w.data().data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < c; ++i) {
      real acc = 0;
      for (int64_t j = 0; j < k; ++j) {
        int64_t s = i + j - half;
        if (s >= 0 && s < c) acc += wv[j] * xv[b * c + s];
      }
      out[static_cast<size_t>(b * c + i)] = acc;
    }
  return make_op("conv1d_channel", {n, c}, std::move(out), {x, w},
                 [n, c, k, half](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   TensorNode& pw = *self.parents[1];
                   const real* g = self.grad.data();
                   const real* xv = px.value.data();
                   const real* wv = pw.value.data();
                   if (pw.requires_grad) {
                     pw.ensure_grad();
                     for (int64_t b = 0; b < n; ++b)
                       for (int64_t i = 0; i < c; ++i)
                         for (int64_t j = 0; j < k; ++j) {
                           int64_t s = i + j - half;
                           if (s >= 0 && s < c)
                             pw.grad[static_cast<size_t>(j)] +=
                                 g[b * c + i] * xv[b * c + s];
                         }
                   }
                   if (px.requires_grad) {
                     px.ensure_grad();
                     for (int64_t b = 0; b < n; ++b)
                       for (int64_t i = 0; i < c; ++i)
                         for (int64_t j = 0; j < k; ++j) {
                           int64_t s = i + j - half;
                           if (s >= 0 && s < c)
                             px.grad[static_cast<size_t>(b * c + s)] +=
                                 g[b * c + i] * wv[j];
                         }
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    fail("matmul_nt expects {M,K} x {N,K}, got " + shape_str(a.shape()) + " and " +
         shape_str(b.shape()));
  int64_t m = a.dim(0), n = b.dim(0), k = a.dim(1);
  std::vector<real> out(static_cast<size_t>(m * n), real(0));
  gemm_nt(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_op("matmul_nt", {m, n}, std::move(out), {a, b},
                 [m, n, k](TensorNode& self) {
                   TensorNode& pa = *self.parents[0];
                   TensorNode& pb = *self.parents[1];
                   const real* g = self.grad.data();
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     gemm_nn(m, k, n, g, pb.value.data(), pa.grad.data());
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     gemm_tn(n, k, m, g, pa.value.data(), pb.grad.data());
                   }
                 });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul_nt(x, w);
  if (!b.defined()) return y;
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    fail("linear bias must be {" + std::to_string(w.dim(0)) + "}, got " +
         shape_str(b.shape()));
  return add(y, b);
}

}  // namespace wdualmine
