#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <wdualmine/nn.hpp>

#include "testutil.hpp"

using namespace wdualmine;
using testutil::random_tensor;

TEST_CASE("model params: unique names, grad buffers, ordering") {
  ModelParams params;
  Tensor a = params.add("w.a", Tensor::zeros({2, 2}));
  params.add("w.b", Tensor::zeros({3}), /*trainable=*/false);
  CHECK(a.requires_grad());
  CHECK_FALSE(params.get("w.b").requires_grad());
  CHECK_THROWS(params.add("w.a", Tensor::zeros({1})));
  CHECK(params.entries()[0].name == "w.a");
  CHECK(params.entries()[1].name == "w.b");
  CHECK(params.scalar_count() == 7);
}

TEST_CASE("adam: first-step closed form moves by lr") {
  ModelParams params;
  Tensor p = params.add("p", Tensor::from_data({1}, {1}));
  AdamState adam(1e-5);
  p.node()->grad[0] = 1;
  adam.step(params);
  CHECK(p.data()[0] == doctest::Approx(1.0 - 1e-5).epsilon(1e-9));
  CHECK(p.grad()[0] == 0);  // consumed
  CHECK(adam.t() == 1);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  ModelParams params;
  Tensor p = params.add("p", Tensor::from_data({3}, {1, -2, 3}));
  AdamState adam(0.1);
  adam.step(params);
  CHECK(p.data()[0] == doctest::Approx(1.0));
  CHECK(p.data()[1] == doctest::Approx(-2.0));
  CHECK(p.data()[2] == doctest::Approx(3.0));
}

TEST_CASE("adam: 200 steps on p^2 converge near zero") {
  ModelParams params;
  Tensor p = params.add("p", Tensor::from_data({1}, {1}));
  AdamState adam(0.1);
  for (int i = 0; i < 200; ++i) {
    p.zero_grad();
    backward(mul(p, p));
    adam.step(params);
  }
  CHECK(std::abs(p.data()[0]) < 1e-2);
}

TEST_CASE("adam: missing grad buffer on a trainable parameter fails") {
  ModelParams params;
  Tensor p = params.add("p", Tensor::from_data({2}, {1, 2}));
  p.node()->grad.clear();
  AdamState adam(0.1);
  CHECK_THROWS(adam.step(params));
}

TEST_CASE("init: deterministic per seed, bounded by the Kaiming limit") {
  SplitMix64 a(9), b(9), c(10);
  Tensor wa = kaiming_conv_weight(a, 8, 4, 3, 3);
  Tensor wb = kaiming_conv_weight(b, 8, 4, 3, 3);
  Tensor wc = kaiming_conv_weight(c, 8, 4, 3, 3);
  bool identical = true, different = false;
  for (int64_t i = 0; i < wa.numel(); ++i) {
    identical &= wa.data()[static_cast<size_t>(i)] == wb.data()[static_cast<size_t>(i)];
    different |= wa.data()[static_cast<size_t>(i)] != wc.data()[static_cast<size_t>(i)];
  }
  CHECK(identical);
  CHECK(different);
  double bound = std::sqrt(6.0 / (4 * 3 * 3));
  for (real v : wa.data()) CHECK(std::abs(static_cast<double>(v)) <= bound);
}

TEST_CASE("res_block: zero branch reduces to relu(x)") {
  ModelParams params;
  SplitMix64 rng(3);
  ResBlock block(params, rng, "res", 4, 4);
  for (Tensor t : {block.w1, block.b1, block.w2, block.b2})
    for (real& v : t.data()) v = 0;
  Tensor x = random_tensor({1, 4, 6, 6}, 5, -1, 1);
  Tensor y = block.forward(x);
  Tensor expect = relu(x);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[static_cast<size_t>(i)] == expect.data()[static_cast<size_t>(i)]);
}

TEST_CASE("res_block: preserves spatial shape, gradients reach both paths") {
  ModelParams params;
  SplitMix64 rng(4);
  ResBlock block(params, rng, "res", 3, 5);  // projection path engaged
  for (auto [h, w] : {std::pair{3, 4}, std::pair{7, 5}, std::pair{8, 8}}) {
    Tensor x = random_tensor({2, 3, h, w}, 6, -1, 1);
    CHECK(block.forward(x).shape() == Shape{2, 5, h, w});
  }
  Tensor x = random_tensor({2, 3, 6, 6}, 7, -1, 1, true);
  backward(sum(block.forward(x)));
  auto nonzero = [](const Tensor& t) {
    for (real v : t.grad())
      if (v != 0) return true;
    return false;
  };
  CHECK(nonzero(block.w1));  // branch
  CHECK(nonzero(block.wp));  // skip projection
}

TEST_CASE("eca: zero weights gate everything by one half") {
  ModelParams params;
  SplitMix64 rng(8);
  EcaBlock eca(params, rng, "eca", 3);
  for (real& v : eca.w.data()) v = 0;
  Tensor x = random_tensor({2, 6, 4, 4}, 9, -1, 1);
  Tensor y = eca.forward(x);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data()[static_cast<size_t>(i)] ==
          doctest::Approx(0.5 * x.data()[static_cast<size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("eca: gate stays in (0,1) and reacts to channel energy") {
  ModelParams params;
  SplitMix64 rng(10);
  EcaBlock eca(params, rng, "eca", 3);
  Tensor x = random_tensor({1, 6, 4, 4}, 11, real(0.1), real(1));
  Tensor y = eca.forward(x);
  for (int64_t i = 0; i < x.numel(); ++i) {
    double ratio = y.data()[static_cast<size_t>(i)] / x.data()[static_cast<size_t>(i)];
    CHECK(ratio > 0.0);
    CHECK(ratio < 1.0);
  }
  // doubling one channel's input moves that channel's gate
  Tensor x2 = Tensor::from_data(x.shape(), {x.data().begin(), x.data().end()});
  for (int i = 0; i < 16; ++i) x2.data()[static_cast<size_t>(i)] *= 2;
  Tensor y2 = eca.forward(x2);
  double gate_before = y.data()[0] / x.data()[0];
  double gate_after = y2.data()[0] / x2.data()[0];
  CHECK(std::abs(gate_before - gate_after) > 1e-6);
}

TEST_CASE("projection head: unit rows, deterministic, self-similarity one") {
  ModelParams params;
  SplitMix64 rng(12);
  ProjectionHead proj(params, rng, "proj", 8, 16);
  Tensor f = random_tensor({3, 8, 4, 4}, 13, -1, 1);
  Tensor z = proj.forward(f);
  CHECK(z.shape() == Shape{3, 16});
  for (int64_t r = 0; r < 3; ++r) {
    double norm = 0, self = 0;
    for (int64_t d = 0; d < 16; ++d) {
      double v = z.data()[static_cast<size_t>(r * 16 + d)];
      norm += v * v;
      self += v * v;
    }
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(self == doctest::Approx(1.0).epsilon(1e-6));  // cosine with itself
  }
  Tensor z2 = proj.forward(f);
  for (int64_t i = 0; i < z.numel(); ++i)
    CHECK(z.data()[static_cast<size_t>(i)] == z2.data()[static_cast<size_t>(i)]);
}
