#pragma once

#include "wdualmine/tensor.hpp"

namespace wdualmine {

// Weights of the compound objective. Zeroing a weight drops its term from
// the graph entirely (the ablation harness relies on that).
struct LossWeights {
  real lambda_avg = real(5);
  real lambda_grad = real(2);
  real lambda_cc = real(1);
  real lambda_mi = real(0.1);
  real lambda_rec = real(0.1);
  real tau = real(0.5);  // InfoNCE temperature
};

struct LossBreakdown {
  Tensor total;  // scalar, carries the graph
  double total_value = 0;
  double avg = 0, grad = 0, cc = 0, mi = 0, rec = 0;
};

// Mean absolute deviation of the fusion from the source average.
Tensor loss_avg(const Tensor& fused, const Tensor& i1, const Tensor& i2);

// Mean L1 gap between the fused Sobel magnitude and the elementwise max of
// the source magnitudes.
Tensor loss_grad(const Tensor& fused, const Tensor& i1, const Tensor& i2);

// 1 - Pearson(fused, average); variances floored at 1e-8.
Tensor loss_cc(const Tensor& fused, const Tensor& i1, const Tensor& i2);

// Symmetric InfoNCE over L2-normalized embeddings: for each batch row the
// fused embedding is pulled toward both source embeddings, negatives drawn
// from the same source across the batch. Requires N >= 2.
Tensor loss_mi_infonce(const Tensor& z_fused, const Tensor& z1, const Tensor& z2,
                       real tau);

// Sum of the two mean-L1 reconstruction errors.
Tensor loss_rec(const Tensor& rec1, const Tensor& rec2, const Tensor& i1,
                const Tensor& i2);

// Weighted sum of the active terms. Terms with zero weight may pass
// undefined tensors for their inputs (z_*, rec_*).
LossBreakdown loss_total(const Tensor& fused, const Tensor& i1, const Tensor& i2,
                         const Tensor& z_fused, const Tensor& z1, const Tensor& z2,
                         const Tensor& rec1, const Tensor& rec2,
                         const LossWeights& weights);

}  // namespace wdualmine
