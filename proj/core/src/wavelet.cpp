#include "wdualmine/wavelet.hpp"

#include <stdexcept>

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

// Band index: 0=LL 1=LH 2=HL 3=HH. Signs of (a, b, c, d) per band.
constexpr real kSign[4][4] = {
    {1, 1, 1, 1},
    {1, -1, 1, -1},
    {1, 1, -1, -1},
    {1, -1, -1, 1},
};

Tensor haar_band(const Tensor& x, int band) {
  const Shape& in = x.shape();
  int64_t h = in[in.size() - 2], w = in[in.size() - 1];
  int64_t planes = x.numel() / (h * w);
  int64_t oh = h / 2, ow = w / 2;
  Shape out_shape = in;
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<real> out(static_cast<size_t>(planes * oh * ow));
  const real* xv = x.data().data();
  const real* s = kSign[band];
  for (int64_t p = 0; p < planes; ++p) {
    const real* src = xv + p * h * w;
    real* dst = out.data() + p * oh * ow;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xc = 0; xc < ow; ++xc) {
        real a = src[(2 * y) * w + 2 * xc];
        real b = src[(2 * y) * w + 2 * xc + 1];
        real c = src[(2 * y + 1) * w + 2 * xc];
        real d = src[(2 * y + 1) * w + 2 * xc + 1];
        dst[y * ow + xc] = (s[0] * a + s[1] * b + s[2] * c + s[3] * d) * real(0.5);
      }
  }
  static const char* names[4] = {"haar_ll", "haar_lh", "haar_hl", "haar_hh"};
  return make_op(names[band], std::move(out_shape), std::move(out), {x},
                 [planes, h, w, band](TensorNode& self) {
                   TensorNode& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   int64_t oh = h / 2, ow = w / 2;
                   const real* g = self.grad.data();
                   real* gx = px.grad.data();
                   const real* s = kSign[band];
                   for (int64_t p = 0; p < planes; ++p) {
                     const real* gsrc = g + p * oh * ow;
                     real* gdst = gx + p * h * w;
                     for (int64_t y = 0; y < oh; ++y)
                       for (int64_t xc = 0; xc < ow; ++xc) {
                         real gv = gsrc[y * ow + xc] * real(0.5);
                         gdst[(2 * y) * w + 2 * xc] += s[0] * gv;
                         gdst[(2 * y) * w + 2 * xc + 1] += s[1] * gv;
                         gdst[(2 * y + 1) * w + 2 * xc] += s[2] * gv;
                         gdst[(2 * y + 1) * w + 2 * xc + 1] += s[3] * gv;
                       }
                   }
                 });
}

}  // namespace

WaveletBands haar_dwt(const Tensor& x) {
  if (x.rank() < 2) fail("haar_dwt expects rank >= 2, got " + shape_str(x.shape()));
  const Shape& in = x.shape();
  int64_t h = in[in.size() - 2], w = in[in.size() - 1];
  if (h % 2 || w % 2)
    fail("haar_dwt requires even spatial extents, got " + shape_str(in) +
         " (pad to even upstream)");
  return {haar_band(x, 0), haar_band(x, 1), haar_band(x, 2), haar_band(x, 3)};
}

Tensor haar_idwt(const WaveletBands& bands) {
  const Tensor* bs[4] = {&bands.ll, &bands.lh, &bands.hl, &bands.hh};
  for (int i = 1; i < 4; ++i)
    if (bs[i]->shape() != bs[0]->shape())
      fail("haar_idwt band shape mismatch: " + shape_str(bs[i]->shape()) + " vs " +
           shape_str(bs[0]->shape()));
  const Shape& in = bs[0]->shape();
  if (in.size() < 2) fail("haar_idwt expects rank >= 2 bands");
  int64_t bh = in[in.size() - 2], bw = in[in.size() - 1];
  int64_t planes = bs[0]->numel() / (bh * bw);
  int64_t h = 2 * bh, w = 2 * bw;
  Shape out_shape = in;
  out_shape[out_shape.size() - 2] = h;
  out_shape[out_shape.size() - 1] = w;
  std::vector<real> out(static_cast<size_t>(planes * h * w));
  const real* v[4];
  for (int i = 0; i < 4; ++i) v[i] = bs[i]->data().data();
  for (int64_t p = 0; p < planes; ++p) {
    real* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < bh; ++y)
      for (int64_t xc = 0; xc < bw; ++xc) {
        int64_t bi = p * bh * bw + y * bw + xc;
        // transpose of the forward matrix, same 1/2 scaling
        for (int corner = 0; corner < 4; ++corner) {
          real acc = 0;
          for (int band = 0; band < 4; ++band) acc += kSign[band][corner] * v[band][bi];
          int64_t yy = 2 * y + corner / 2, xx = 2 * xc + corner % 2;
          dst[yy * w + xx] = acc * real(0.5);
        }
      }
  }
  return make_op("haar_idwt", std::move(out_shape), std::move(out),
                 {bands.ll, bands.lh, bands.hl, bands.hh},
                 [planes, bh, bw](TensorNode& self) {
                   int64_t h = 2 * bh, w = 2 * bw;
                   const real* g = self.grad.data();
                   for (int band = 0; band < 4; ++band) {
                     TensorNode& pb = *self.parents[static_cast<size_t>(band)];
                     if (!pb.requires_grad) continue;
                     pb.ensure_grad();
                     real* gb = pb.grad.data();
                     for (int64_t p = 0; p < planes; ++p) {
                       const real* gsrc = g + p * h * w;
                       for (int64_t y = 0; y < bh; ++y)
                         for (int64_t xc = 0; xc < bw; ++xc) {
                           real acc = 0;
                           for (int corner = 0; corner < 4; ++corner) {
                             int64_t yy = 2 * y + corner / 2, xx = 2 * xc + corner % 2;
                             acc += kSign[band][corner] * gsrc[yy * w + xx];
                           }
                           gb[p * bh * bw + y * bw + xc] += acc * real(0.5);
                         }
                     }
                   }
                 });
}

}  // namespace wdualmine
