#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "wdualmine/nn.hpp"
#include "wdualmine/tensor.hpp"
#include "wdualmine/wavelet.hpp"

namespace wdualmine {

// Network topology. The ablation switches select which expert path feeds
// the decoder; they change the forward graph only, never the parameter
// set, so checkpoints stay layout-compatible across ablation rows.
struct ModelConfig {
  std::array<int64_t, 4> widths{16, 32, 64, 128};
  int64_t proj_dim = 128;
  int64_t rec_hidden = 16;
  int64_t eca_kernel = 3;
  real residual_scale = real(0.5);

  bool use_gce = true;  // global-context spatial expert
  bool use_we = true;   // wavelet expert
  bool use_sgm = true;  // learned mixer (off: plain averaging of the experts)

  // Evaluates the reliability head symmetrized over a modality swap.
  // Diagnostic mode: makes w-maps exactly swap-equivariant.
  bool symmetric_reliability = false;

  void validate() const;
};

// Four per-modality feature levels; each level halves the previous one's
// spatial extents.
struct FeaturePyramid {
  std::array<Tensor, 4> levels;
};

// Convex per-pixel gates, w1 + w2 = 1.
struct ReliabilityMaps {
  Tensor w1, w2;  // N x 1 x h x w
};

struct FusionDiagnostics {
  std::array<Tensor, 4> reliability_w1;  // per scale
  std::array<Tensor, 4> mixer_alpha1;    // per scale; undefined when SGM is off
  int pad_bottom = 0, pad_right = 0;     // recorded crop from fuse_padded
};

struct FusionOutput {
  Tensor fused;     // N x 1 x H x W in [0, 1]
  Tensor residual;  // raw decoder output before tanh
  FusionDiagnostics diag;
};

// The fusion network: Siamese four-stage encoder, per-scale reliability
// gating, spatial + wavelet experts arbitrated by a gradient-conditioned
// mixer, and a residual decoder anchored to the source average:
//   fused = clip((I1 + I2)/2 + residual_scale * tanh(R), 0, 1)
// which bounds |fused - average| by residual_scale for any parameters.
class FusionNet {
 public:
  FusionNet(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  FeaturePyramid encode(const Tensor& image) const;  // N x 1 x H x W, H,W % 16 == 0

  // Raw non-negative per-modality scores from the shared head.
  std::pair<Tensor, Tensor> reliability_scores(const Tensor& f1, const Tensor& f2,
                                               int scale) const;
  ReliabilityMaps reliability_weights(const Tensor& f1, const Tensor& f2,
                                      int scale) const;

  Tensor spatial_expert(const Tensor& f_base, int scale) const;

  // Parameter-free frequency-domain fusion: reliability-weighted LL,
  // magnitude-max detail bands (ties take the first argument).
  static Tensor wavelet_expert(const Tensor& f1, const Tensor& f2, const Tensor& w1,
                               const Tensor& w2);

  // alpha1_out, when given, receives the spatial expert's mixing weight.
  Tensor soft_gradient_mixer(const Tensor& e_spatial, const Tensor& e_wave, int scale,
                             Tensor* alpha1_out = nullptr) const;

  Tensor decode(const std::array<Tensor, 4>& fused_levels) const;

  FusionOutput fuse(const Tensor& i1, const Tensor& i2) const;
  // Same pipeline on already-encoded pyramids; lets training reuse them
  // for the contrastive projections instead of encoding twice.
  FusionOutput fuse_from(const FeaturePyramid& p1, const FeaturePyramid& p2,
                         const Tensor& i1, const Tensor& i2) const;
  // Reflect-pads to the next multiple of 16, fuses, crops back; the pad is
  // recorded in the diagnostics.
  FusionOutput fuse_padded(const Tensor& i1, const Tensor& i2) const;

  std::pair<Tensor, Tensor> reconstruction_heads(const Tensor& fused) const;

  Tensor project(const Tensor& deepest_features) const;  // -> {N, proj_dim}

 private:
  Tensor fuse_levels(const FeaturePyramid& p1, const FeaturePyramid& p2, int scale,
                     FusionDiagnostics* diag) const;

  ModelConfig cfg_;
  ModelParams params_;

  struct Stage {
    Tensor stem_w, stem_b;
    ResBlock res;
    EcaBlock eca;
  };
  std::array<Stage, 4> stages_;

  struct ReliabilityHead {
    Tensor w1, b1, w2, b2;
  };
  std::array<ReliabilityHead, 4> rel_;

  struct SpatialExpert {
    Tensor local_w, local_b, dilated_w, dilated_b, reduce_w, reduce_b;
  };
  std::array<SpatialExpert, 4> spatial_;

  struct Mixer {
    Tensor w, b;
  };
  std::array<Mixer, 4> mixer_;

  std::array<ResBlock, 3> dec_res_;  // coarse-to-fine
  Tensor dec_out_w, dec_out_b;

  struct RecHead {
    Tensor w1, b1, w2, b2, w3, b3;
  };
  std::array<RecHead, 2> rec_;

  ProjectionHead proj_;
};

}  // namespace wdualmine
