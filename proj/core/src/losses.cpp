#include "wdualmine/losses.hpp"

#include <stdexcept>

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    fail(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
         shape_str(b.shape()));
}

Tensor source_average(const Tensor& i1, const Tensor& i2) {
  return scalar_mul(add(i1, i2), real(0.5));
}

}  // namespace

Tensor loss_avg(const Tensor& fused, const Tensor& i1, const Tensor& i2) {
  check_same_shape(fused, i1, "loss_avg");
  check_same_shape(i1, i2, "loss_avg");
  return mean(abs(sub(fused, source_average(i1, i2))));
}

Tensor loss_grad(const Tensor& fused, const Tensor& i1, const Tensor& i2) {
  check_same_shape(fused, i1, "loss_grad");
  check_same_shape(i1, i2, "loss_grad");
  Tensor target = maximum(sobel_gradient_magnitude(i1), sobel_gradient_magnitude(i2));
  return mean(abs(sub(sobel_gradient_magnitude(fused), target)));
}

Tensor loss_cc(const Tensor& fused, const Tensor& i1, const Tensor& i2) {
  check_same_shape(fused, i1, "loss_cc");
  check_same_shape(i1, i2, "loss_cc");
  Tensor avg = source_average(i1, i2);
  Tensor cov = covariance(fused, avg);
  Tensor var_f = maximum(variance(fused), Tensor::scalar(real(1e-8)));
  Tensor var_a = maximum(variance(avg), Tensor::scalar(real(1e-8)));
  Tensor pearson = div(cov, sqrt(mul(var_f, var_a)));
  return scalar_add(neg(pearson), real(1));
}

Tensor loss_mi_infonce(const Tensor& z_fused, const Tensor& z1, const Tensor& z2,
                       real tau) {
  if (z_fused.rank() != 2) fail("loss_mi_infonce expects {N, D} embeddings");
  check_same_shape(z_fused, z1, "loss_mi_infonce");
  check_same_shape(z_fused, z2, "loss_mi_infonce");
  int64_t n = z_fused.dim(0);
  if (n < 2) fail("loss_mi_infonce needs batch >= 2 (no negatives otherwise)");
  if (tau <= 0) fail("loss_mi_infonce: temperature must be positive");

  // identity mask selecting the diagonal (the positive pair per row)
  std::vector<real> eye(static_cast<size_t>(n * n), real(0));
  for (int64_t i = 0; i < n; ++i) eye[static_cast<size_t>(i * n + i)] = real(1);
  Tensor diag_mask = Tensor::from_data({n, n}, std::move(eye));

  auto direction = [&](const Tensor& z_src) {
    Tensor sim = scalar_mul(matmul_nt(z_fused, z_src), real(1) / tau);   // {N, N}
    Tensor p = softmax_channel(reshape(sim, {n, n, 1, 1}));
    Tensor log_diag = mul(reshape(log(p), {n, n}), diag_mask);
    return scalar_mul(sum(log_diag), real(-1) / static_cast<real>(n));
  };
  return scalar_mul(add(direction(z1), direction(z2)), real(0.5));
}

Tensor loss_rec(const Tensor& rec1, const Tensor& rec2, const Tensor& i1,
                const Tensor& i2) {
  check_same_shape(rec1, i1, "loss_rec");
  check_same_shape(rec2, i2, "loss_rec");
  return add(mean(abs(sub(rec1, i1))), mean(abs(sub(rec2, i2))));
}

LossBreakdown loss_total(const Tensor& fused, const Tensor& i1, const Tensor& i2,
                         const Tensor& z_fused, const Tensor& z1, const Tensor& z2,
                         const Tensor& rec1, const Tensor& rec2,
                         const LossWeights& w) {
  if (w.lambda_avg < 0 || w.lambda_grad < 0 || w.lambda_cc < 0 || w.lambda_mi < 0 ||
      w.lambda_rec < 0)
    fail("loss_total: negative loss weight");
  LossBreakdown out;
  Tensor total = Tensor::scalar(real(0));
  auto accumulate = [&](real lambda, const Tensor& term, double& slot) {
    slot = static_cast<double>(term.item());
    total = add(total, scalar_mul(term, lambda));
  };
  if (w.lambda_avg > 0) accumulate(w.lambda_avg, loss_avg(fused, i1, i2), out.avg);
  if (w.lambda_grad > 0) accumulate(w.lambda_grad, loss_grad(fused, i1, i2), out.grad);
  if (w.lambda_cc > 0) accumulate(w.lambda_cc, loss_cc(fused, i1, i2), out.cc);
  if (w.lambda_mi > 0)
    accumulate(w.lambda_mi, loss_mi_infonce(z_fused, z1, z2, w.tau), out.mi);
  if (w.lambda_rec > 0) accumulate(w.lambda_rec, loss_rec(rec1, rec2, i1, i2), out.rec);
  out.total = total;
  out.total_value = static_cast<double>(total.item());
  return out;
}

}  // namespace wdualmine
