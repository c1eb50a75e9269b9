#include "wdualmine/model.hpp"

#include <stdexcept>
#include <string>

namespace wdualmine {

namespace {

constexpr real kReliabilityEps = real(1e-6);

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

}  // namespace

void ModelConfig::validate() const {
  for (int64_t w : widths)
    if (w < 1) fail("model widths must be positive");
  if (proj_dim < 1 || rec_hidden < 1) fail("proj_dim and rec_hidden must be positive");
  if (eca_kernel < 1 || eca_kernel % 2 == 0) fail("eca_kernel must be odd");
  if (!use_gce && !use_we) fail("at least one expert (GCE or WE) must be enabled");
}

FusionNet::FusionNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  SplitMix64 rng(seed);
  const auto& c = cfg_.widths;

  for (int s = 0; s < 4; ++s) {
    std::string p = "encoder.stage" + std::to_string(s + 1);
    int64_t in_c = s == 0 ? 1 : c[s - 1];
    stages_[s].stem_w = params_.add(p + ".stem.w", kaiming_conv_weight(rng, c[s], in_c, 3, 3));
    stages_[s].stem_b = params_.add(p + ".stem.b", Tensor::zeros({c[s]}));
    stages_[s].res = ResBlock(params_, rng, p + ".res", c[s], c[s]);
    stages_[s].eca = EcaBlock(params_, rng, p + ".eca", cfg_.eca_kernel);
  }
  for (int s = 0; s < 4; ++s) {
    std::string p = "reliability.s" + std::to_string(s + 1);
    rel_[s].w1 = params_.add(p + ".conv1.w", kaiming_conv_weight(rng, c[s], 2 * c[s], 3, 3));
    rel_[s].b1 = params_.add(p + ".conv1.b", Tensor::zeros({c[s]}));
    rel_[s].w2 = params_.add(p + ".conv2.w", kaiming_conv_weight(rng, 2, c[s], 1, 1));
    rel_[s].b2 = params_.add(p + ".conv2.b", Tensor::zeros({2}));
  }
  for (int s = 0; s < 4; ++s) {
    std::string p = "spatial.s" + std::to_string(s + 1);
    spatial_[s].local_w = params_.add(p + ".local.w", kaiming_conv_weight(rng, c[s], c[s], 3, 3));
    spatial_[s].local_b = params_.add(p + ".local.b", Tensor::zeros({c[s]}));
    spatial_[s].dilated_w =
        params_.add(p + ".dilated.w", kaiming_conv_weight(rng, c[s], c[s], 3, 3));
    spatial_[s].dilated_b = params_.add(p + ".dilated.b", Tensor::zeros({c[s]}));
    spatial_[s].reduce_w =
        params_.add(p + ".reduce.w", kaiming_conv_weight(rng, c[s], 2 * c[s], 1, 1));
    spatial_[s].reduce_b = params_.add(p + ".reduce.b", Tensor::zeros({c[s]}));
  }
  for (int s = 0; s < 4; ++s) {
    std::string p = "mixer.s" + std::to_string(s + 1);
    mixer_[s].w = params_.add(p + ".w", kaiming_conv_weight(rng, 2, 2 * c[s], 1, 1));
    mixer_[s].b = params_.add(p + ".b", Tensor::zeros({2}));
  }
  dec_res_[0] = ResBlock(params_, rng, "decoder.up3.res", c[3] + c[2], c[2]);
  dec_res_[1] = ResBlock(params_, rng, "decoder.up2.res", c[2] + c[1], c[1]);
  dec_res_[2] = ResBlock(params_, rng, "decoder.up1.res", c[1] + c[0], c[0]);
  dec_out_w = params_.add("decoder.out.w", kaiming_conv_weight(rng, 1, c[0], 3, 3));
  dec_out_b = params_.add("decoder.out.b", Tensor::zeros({1}));

  for (int r = 0; r < 2; ++r) {
    std::string p = "recon" + std::to_string(r + 1);
    int64_t rc = cfg_.rec_hidden;
    rec_[r].w1 = params_.add(p + ".conv1.w", kaiming_conv_weight(rng, rc, 1, 3, 3));
    rec_[r].b1 = params_.add(p + ".conv1.b", Tensor::zeros({rc}));
    rec_[r].w2 = params_.add(p + ".conv2.w", kaiming_conv_weight(rng, rc, rc, 3, 3));
    rec_[r].b2 = params_.add(p + ".conv2.b", Tensor::zeros({rc}));
    rec_[r].w3 = params_.add(p + ".conv3.w", kaiming_conv_weight(rng, 1, rc, 3, 3));
    rec_[r].b3 = params_.add(p + ".conv3.b", Tensor::zeros({1}));
  }
  proj_ = ProjectionHead(params_, rng, "proj", c[3], cfg_.proj_dim);
}

FeaturePyramid FusionNet::encode(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 1)
    fail("encode expects N x 1 x H x W, got " + shape_str(image.shape()));
  if (image.dim(2) % 16 || image.dim(3) % 16)
    fail("encode requires H, W divisible by 16, got " + shape_str(image.shape()) +
         " (use fuse_padded)");
  FeaturePyramid out;
  Tensor x = image;
  for (int s = 0; s < 4; ++s) {
    int stride = s == 0 ? 1 : 2;
    x = relu(conv2d(x, stages_[s].stem_w, stages_[s].stem_b, stride, 1, 1));
    x = stages_[s].res.forward(x);
    x = stages_[s].eca.forward(x);
    out.levels[s] = x;
  }
  return out;
}

std::pair<Tensor, Tensor> FusionNet::reliability_scores(const Tensor& f1, const Tensor& f2,
                                                        int scale) const {
  if (f1.shape() != f2.shape())
    fail("reliability head requires equal feature shapes, got " + shape_str(f1.shape()) +
         " vs " + shape_str(f2.shape()));
  const auto& head = rel_[static_cast<size_t>(scale)];
  auto raw = [&](const Tensor& a, const Tensor& b) {
    Tensor h = relu(conv2d(concat_channels({a, b}), head.w1, head.b1, 1, 1, 1));
    return softplus(conv2d(h, head.w2, head.b2));  // N x 2 x h x w, >= 0
  };
  Tensor s12 = raw(f1, f2);
  Tensor r1 = slice_channels(s12, 0, 1);
  Tensor r2 = slice_channels(s12, 1, 1);
  if (cfg_.symmetric_reliability) {
    Tensor s21 = raw(f2, f1);
    r1 = scalar_mul(add(r1, slice_channels(s21, 1, 1)), real(0.5));
    r2 = scalar_mul(add(r2, slice_channels(s21, 0, 1)), real(0.5));
  }
  return {r1, r2};
}

ReliabilityMaps FusionNet::reliability_weights(const Tensor& f1, const Tensor& f2,
                                               int scale) const {
  auto [r1, r2] = reliability_scores(f1, f2, scale);
  Tensor denom = scalar_add(add(r1, r2), kReliabilityEps);
  Tensor w1 = div(r1, denom);
  // w2 = 1 - w1 keeps the pair convex to the last ulp; the symmetrized
  // diagnostic mode normalizes both scores instead so that swapping the
  // modalities swaps the maps bit-for-bit
  Tensor w2 = cfg_.symmetric_reliability ? div(r2, denom)
                                         : scalar_add(neg(w1), real(1));
  return {w1, w2};
}

Tensor FusionNet::spatial_expert(const Tensor& f_base, int scale) const {
  const auto& e = spatial_[static_cast<size_t>(scale)];
  Tensor local = relu(conv2d(f_base, e.local_w, e.local_b, 1, 1, 1));
  Tensor dilated = relu(conv2d(f_base, e.dilated_w, e.dilated_b, 1, 2, 2));
  return conv2d(concat_channels({local, dilated}), e.reduce_w, e.reduce_b);
}

Tensor FusionNet::wavelet_expert(const Tensor& f1, const Tensor& f2, const Tensor& w1,
                                 const Tensor& w2) {
  WaveletBands a = haar_dwt(f1);
  WaveletBands b = haar_dwt(f2);
  // gates live on the full-resolution grid; pool them onto the band grid
  Tensor w1d = avg_pool2x2(w1);
  Tensor w2d = avg_pool2x2(w2);
  Tensor ll = add(mul(w1d, a.ll), mul(w2d, b.ll));
  auto pick_max = [](const Tensor& d1, const Tensor& d2) {
    Tensor m = ge_mask(abs(d1), abs(d2));
    return add(mul(m, d1), mul(scalar_add(neg(m), real(1)), d2));
  };
  return haar_idwt({ll, pick_max(a.lh, b.lh), pick_max(a.hl, b.hl), pick_max(a.hh, b.hh)});
}

Tensor FusionNet::soft_gradient_mixer(const Tensor& e_spatial, const Tensor& e_wave,
                                      int scale, Tensor* alpha1_out) const {
  if (e_spatial.shape() != e_wave.shape())
    fail("mixer requires equal expert shapes, got " + shape_str(e_spatial.shape()) +
         " vs " + shape_str(e_wave.shape()));
  const auto& m = mixer_[static_cast<size_t>(scale)];
  Tensor gs = add(e_spatial, sobel_gradient_magnitude(e_spatial));
  Tensor gw = add(e_wave, sobel_gradient_magnitude(e_wave));
  Tensor logits = conv2d(concat_channels({gs, gw}), m.w, m.b);
  Tensor alpha = softmax_channel(logits);  // N x 2 x h x w
  Tensor a1 = slice_channels(alpha, 0, 1);
  Tensor a2 = slice_channels(alpha, 1, 1);
  if (alpha1_out) *alpha1_out = a1;
  return add(mul(a1, e_spatial), mul(a2, e_wave));
}

Tensor FusionNet::fuse_levels(const FeaturePyramid& p1, const FeaturePyramid& p2,
                              int scale, FusionDiagnostics* diag) const {
  const Tensor& f1 = p1.levels[static_cast<size_t>(scale)];
  const Tensor& f2 = p2.levels[static_cast<size_t>(scale)];
  ReliabilityMaps w = reliability_weights(f1, f2, scale);
  if (diag) diag->reliability_w1[static_cast<size_t>(scale)] = w.w1;

  Tensor e_wave, e_spatial;
  if (cfg_.use_we) e_wave = wavelet_expert(f1, f2, w.w1, w.w2);
  if (cfg_.use_gce) {
    Tensor f_base = add(mul(w.w1, f1), mul(w.w2, f2));
    e_spatial = spatial_expert(f_base, scale);
  }
  if (!cfg_.use_we) return e_spatial;
  if (!cfg_.use_gce) return e_wave;
  if (!cfg_.use_sgm) return scalar_mul(add(e_spatial, e_wave), real(0.5));
  Tensor a1;
  Tensor mixed = soft_gradient_mixer(e_spatial, e_wave, scale, &a1);
  if (diag) diag->mixer_alpha1[static_cast<size_t>(scale)] = a1;
  return mixed;
}

Tensor FusionNet::decode(const std::array<Tensor, 4>& fused_levels) const {
  Tensor x = fused_levels[3];
  for (int s = 2; s >= 0; --s) {
    Tensor up = upsample_nearest2x(x);
    x = dec_res_[static_cast<size_t>(2 - s)].forward(
        concat_channels({up, fused_levels[static_cast<size_t>(s)]}));
  }
  return conv2d(x, dec_out_w, dec_out_b, 1, 1, 1);
}

FusionOutput FusionNet::fuse(const Tensor& i1, const Tensor& i2) const {
  if (i1.shape() != i2.shape())
    fail("fuse requires co-registered equal-shape images, got " + shape_str(i1.shape()) +
         " vs " + shape_str(i2.shape()));
  return fuse_from(encode(i1), encode(i2), i1, i2);
}

FusionOutput FusionNet::fuse_from(const FeaturePyramid& p1, const FeaturePyramid& p2,
                                  const Tensor& i1, const Tensor& i2) const {
  FusionOutput out;
  std::array<Tensor, 4> fused_levels;
  for (int s = 0; s < 4; ++s)
    fused_levels[static_cast<size_t>(s)] = fuse_levels(p1, p2, s, &out.diag);
  out.residual = decode(fused_levels);
  Tensor avg = scalar_mul(add(i1, i2), real(0.5));
  out.fused = clip(add(avg, scalar_mul(tanh(out.residual), cfg_.residual_scale)),
                   real(0), real(1));
  return out;
}

FusionOutput FusionNet::fuse_padded(const Tensor& i1, const Tensor& i2) const {
  if (i1.shape() != i2.shape())
    fail("fuse requires co-registered equal-shape images, got " + shape_str(i1.shape()) +
         " vs " + shape_str(i2.shape()));
  int64_t h = i1.dim(2), w = i1.dim(3);
  int pad_b = static_cast<int>((16 - h % 16) % 16);
  int pad_r = static_cast<int>((16 - w % 16) % 16);
  if (pad_b == 0 && pad_r == 0) return fuse(i1, i2);
  FusionOutput out = fuse(reflect_pad2d(i1, 0, pad_b, 0, pad_r),
                          reflect_pad2d(i2, 0, pad_b, 0, pad_r));
  out.fused = crop2d(out.fused, 0, 0, h, w);
  out.residual = crop2d(out.residual, 0, 0, h, w);
  out.diag.pad_bottom = pad_b;
  out.diag.pad_right = pad_r;
  return out;
}

std::pair<Tensor, Tensor> FusionNet::reconstruction_heads(const Tensor& fused) const {
  auto run = [&](const RecHead& h) {
    Tensor x = relu(conv2d(fused, h.w1, h.b1, 1, 1, 1));
    x = relu(conv2d(x, h.w2, h.b2, 1, 1, 1));
    return sigmoid(conv2d(x, h.w3, h.b3, 1, 1, 1));
  };
  return {run(rec_[0]), run(rec_[1])};
}

Tensor FusionNet::project(const Tensor& deepest_features) const {
  return proj_.forward(deepest_features);
}

}  // namespace wdualmine
