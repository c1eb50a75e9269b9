#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <wdualmine/losses.hpp>

#include "testutil.hpp"

using namespace wdualmine;
using testutil::random_tensor;

namespace {

double naive_mean_abs_dev(const Tensor& f, const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (int64_t i = 0; i < f.numel(); ++i)
    acc += std::abs(static_cast<double>(f.data()[static_cast<size_t>(i)]) -
                    0.5 * (a.data()[static_cast<size_t>(i)] + b.data()[static_cast<size_t>(i)]));
  return acc / static_cast<double>(f.numel());
}

}  // namespace

TEST_CASE("loss_avg: zero at the average, constant offsets, loop oracle") {
  Tensor i1 = random_tensor({1, 1, 8, 8}, 1, 0, 1);
  Tensor i2 = random_tensor({1, 1, 8, 8}, 2, 0, 1);
  Tensor avg = scalar_mul(add(i1, i2), real(0.5));
  CHECK(loss_avg(avg, i1, i2).item() == doctest::Approx(0.0));
  CHECK(loss_avg(scalar_add(avg, real(0.1)), i1, i2).item() ==
        doctest::Approx(0.1).epsilon(1e-5));

  Tensor f = random_tensor({1, 1, 8, 8}, 3, 0, 1);
  CHECK(loss_avg(f, i1, i2).item() ==
        doctest::Approx(naive_mean_abs_dev(f, i1, i2)).epsilon(1e-6));
}

TEST_CASE("loss_grad: identical images, flat-vs-edge case, non-negativity") {
  Tensor i = random_tensor({1, 1, 8, 8}, 4, 0, 1);
  CHECK(loss_grad(i, i, i).item() == doctest::Approx(0.0));

  // flat fusion against a step-edge source: the loss is the mean of the
  // max-magnitude target field
  std::vector<real> step(64, 0);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) step[static_cast<size_t>(y * 8 + x)] = 1;
  Tensor edge = Tensor::from_data({1, 1, 8, 8}, std::move(step));
  Tensor flat = Tensor::full({1, 1, 8, 8}, real(0.5));
  Tensor target = maximum(sobel_gradient_magnitude(edge), sobel_gradient_magnitude(flat));
  CHECK(loss_grad(flat, edge, flat).item() ==
        doctest::Approx(mean(target).item()).epsilon(1e-6));

  Tensor f = random_tensor({1, 1, 8, 8}, 5, 0, 1);
  Tensor a = random_tensor({1, 1, 8, 8}, 6, 0, 1);
  Tensor b = random_tensor({1, 1, 8, 8}, 7, 0, 1);
  CHECK(loss_grad(f, a, b).item() >= 0);
}

TEST_CASE("loss_cc: perfect, affine, and anti-correlated cases") {
  Tensor i1 = random_tensor({1, 1, 8, 8}, 8, 0, 1);
  Tensor i2 = random_tensor({1, 1, 8, 8}, 9, 0, 1);
  Tensor avg = scalar_mul(add(i1, i2), real(0.5));
  CHECK(loss_cc(avg, i1, i2).item() == doctest::Approx(0.0).epsilon(1e-5));

  Tensor affine = scalar_add(scalar_mul(avg, real(2.5)), real(0.3));
  CHECK(loss_cc(affine, i1, i2).item() == doctest::Approx(0.0).epsilon(1e-5));

  Tensor anti = neg(avg);
  CHECK(loss_cc(anti, i1, i2).item() == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("infonce: closed form on an orthogonal batch") {
  // z_f = z1 = z2, orthonormal rows: positives at similarity 1, the single
  // negative at 0; with tau = 0.5 each term is -log(e^2 / (e^2 + 1))
  Tensor z = Tensor::from_data({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  double expect = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  CHECK(loss_mi_infonce(z, z, z, real(0.5)).item() ==
        doctest::Approx(expect).epsilon(1e-4));
  CHECK(expect == doctest::Approx(0.126928).epsilon(1e-4));
}

TEST_CASE("infonce: batch order invariance") {
  Tensor zf = random_tensor({4, 8}, 10, -1, 1);
  Tensor z1 = random_tensor({4, 8}, 11, -1, 1);
  Tensor z2 = random_tensor({4, 8}, 12, -1, 1);
  double base = loss_mi_infonce(zf, z1, z2, real(0.5)).item();

  // permute rows 0<->2, 1<->3 consistently
  auto permute = [](const Tensor& t) {
    std::vector<real> v(static_cast<size_t>(t.numel()));
    int64_t d = t.dim(1);
    int perm[4] = {2, 3, 0, 1};
    for (int64_t r = 0; r < 4; ++r)
      for (int64_t c = 0; c < d; ++c)
        v[static_cast<size_t>(r * d + c)] = t.data()[static_cast<size_t>(perm[r] * d + c)];
    return Tensor::from_data(t.shape(), std::move(v));
  };
  double permuted = loss_mi_infonce(permute(zf), permute(z1), permute(z2), real(0.5)).item();
  CHECK(base == doctest::Approx(permuted).epsilon(1e-6));
}

TEST_CASE("infonce: raising a positive similarity lowers the loss") {
  Tensor z1 = Tensor::from_data({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor z2 = Tensor::from_data({2, 3}, {0, 0, 1, 1, 0, 0});
  auto zf_at = [&](real align) {
    // fused embedding drifts toward z1[0] as align grows
    real n = std::sqrt(align * align + 1);
    return Tensor::from_data({2, 3}, {align / n, 1 / n, 0, 0, 1, 0});
  };
  double lo = loss_mi_infonce(zf_at(real(0.2)), z1, z2, real(0.5)).item();
  double hi = loss_mi_infonce(zf_at(real(0.9)), z1, z2, real(0.5)).item();
  CHECK(hi < lo);
  CHECK_THROWS(loss_mi_infonce(Tensor::zeros({1, 3}), Tensor::zeros({1, 3}),
                               Tensor::zeros({1, 3}), real(0.5)));
}

TEST_CASE("loss_rec: perfect, offset, loop oracle") {
  Tensor i1 = random_tensor({1, 1, 8, 8}, 13, 0, 1);
  Tensor i2 = random_tensor({1, 1, 8, 8}, 14, 0, 1);
  CHECK(loss_rec(i1, i2, i1, i2).item() == doctest::Approx(0.0));
  CHECK(loss_rec(scalar_add(i1, real(0.05)), scalar_add(i2, real(-0.2)), i1, i2).item() ==
        doctest::Approx(0.25).epsilon(1e-5));

  Tensor r1 = random_tensor({1, 1, 8, 8}, 15, 0, 1);
  Tensor r2 = random_tensor({1, 1, 8, 8}, 16, 0, 1);
  double naive = 0;
  for (int64_t i = 0; i < 64; ++i)
    naive += std::abs(static_cast<double>(r1.data()[static_cast<size_t>(i)]) -
                      i1.data()[static_cast<size_t>(i)]);
  double naive2 = 0;
  for (int64_t i = 0; i < 64; ++i)
    naive2 += std::abs(static_cast<double>(r2.data()[static_cast<size_t>(i)]) -
                       i2.data()[static_cast<size_t>(i)]);
  CHECK(loss_rec(r1, r2, i1, i2).item() ==
        doctest::Approx(naive / 64 + naive2 / 64).epsilon(1e-6));
}

TEST_CASE("loss_total: selectors and recomposition") {
  Tensor i1 = random_tensor({2, 1, 16, 16}, 17, 0, 1);
  Tensor i2 = random_tensor({2, 1, 16, 16}, 18, 0, 1);
  Tensor f = random_tensor({2, 1, 16, 16}, 19, 0, 1);
  Tensor zf = random_tensor({2, 8}, 20, -1, 1);
  Tensor z1 = random_tensor({2, 8}, 21, -1, 1);
  Tensor z2 = random_tensor({2, 8}, 22, -1, 1);
  Tensor r1 = random_tensor({2, 1, 16, 16}, 23, 0, 1);
  Tensor r2 = random_tensor({2, 1, 16, 16}, 24, 0, 1);

  LossWeights all_zero;
  all_zero.lambda_avg = all_zero.lambda_grad = all_zero.lambda_cc = 0;
  all_zero.lambda_mi = all_zero.lambda_rec = 0;
  CHECK(loss_total(f, i1, i2, zf, z1, z2, r1, r2, all_zero).total_value ==
        doctest::Approx(0.0));

  LossWeights only_avg;
  only_avg.lambda_avg = 1;
  only_avg.lambda_grad = only_avg.lambda_cc = only_avg.lambda_mi = only_avg.lambda_rec = 0;
  CHECK(loss_total(f, i1, i2, zf, z1, z2, r1, r2, only_avg).total_value ==
        doctest::Approx(loss_avg(f, i1, i2).item()).epsilon(1e-6));

  LossWeights w;  // paper defaults
  LossBreakdown lb = loss_total(f, i1, i2, zf, z1, z2, r1, r2, w);
  double recomposed = 5.0 * lb.avg + 2.0 * lb.grad + 1.0 * lb.cc + 0.1 * lb.mi + 0.1 * lb.rec;
  CHECK(lb.total_value == doctest::Approx(recomposed).epsilon(1e-5));
  CHECK(lb.cc >= 0);
  CHECK(lb.cc <= 2);
  CHECK(lb.avg >= 0);
  CHECK(lb.grad >= 0);
  CHECK(lb.rec >= 0);

  LossWeights negative;
  negative.lambda_avg = -1;
  CHECK_THROWS(loss_total(f, i1, i2, zf, z1, z2, r1, r2, negative));
}
