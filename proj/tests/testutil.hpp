#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <wdualmine/rng.hpp>
#include <wdualmine/tensor.hpp>

namespace testutil {

using wdualmine::real;
using wdualmine::Shape;
using wdualmine::Tensor;

inline Tensor random_tensor(Shape shape, uint64_t seed, real lo = real(-1),
                            real hi = real(1), bool requires_grad = false) {
  wdualmine::SplitMix64 rng(seed);
  return wdualmine::rand_uniform(std::move(shape), rng, lo, hi, requires_grad);
}

struct GradCheck {
  double max_rel = 0;
  double norm_rel = 0;  // ||fd - analytic|| / ||fd|| over the sampled set
  int checked = 0;
};

// Central finite differences on sampled elements of `x` against the
// analytic gradient of the scalar `forward()`. The forward must rebuild
// its graph from x's current values on every call.
inline GradCheck gradcheck(const std::function<Tensor()>& forward, Tensor& x,
                           int max_samples = 64, double eps = 1e-3,
                           uint64_t seed = 1234) {
  x.zero_grad();
  Tensor loss = forward();
  wdualmine::backward(loss);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  int64_t n = x.numel();
  std::vector<int64_t> idx;
  if (n <= max_samples) {
    for (int64_t i = 0; i < n; ++i) idx.push_back(i);
  } else {
    wdualmine::SplitMix64 rng(seed);
    for (int s = 0; s < max_samples; ++s)
      idx.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  }

  GradCheck result;
  double dot_diff = 0, dot_fd = 0;
  wdualmine::NoGradGuard no_grad;
  for (int64_t i : idx) {
    real saved = x.data()[static_cast<size_t>(i)];
    x.data()[static_cast<size_t>(i)] = saved + static_cast<real>(eps);
    double fp = static_cast<double>(forward().item());
    x.data()[static_cast<size_t>(i)] = saved - static_cast<real>(eps);
    double fm = static_cast<double>(forward().item());
    x.data()[static_cast<size_t>(i)] = saved;
    double fd = (fp - fm) / (2 * eps);
    double an = analytic[static_cast<size_t>(i)];
    double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
    result.max_rel = std::max(result.max_rel, rel);
    dot_diff += (fd - an) * (fd - an);
    dot_fd += fd * fd;
    ++result.checked;
  }
  result.norm_rel = dot_fd > 0 ? std::sqrt(dot_diff / dot_fd) : std::sqrt(dot_diff);
  return result;
}

// Direct six-loop convolution used as the value oracle for conv2d.
inline std::vector<real> naive_conv2d(const std::vector<real>& x, int64_t n, int64_t ci,
                                      int64_t h, int64_t w, const std::vector<real>& k,
                                      int64_t co, int64_t kh, int64_t kw,
                                      const std::vector<real>& bias, int stride,
                                      int dilation, int padding, int64_t& oh,
                                      int64_t& ow) {
  oh = (h + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
  ow = (w + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
  std::vector<real> out(static_cast<size_t>(n * co * oh * ow), real(0));
  for (int64_t b = 0; b < n; ++b)
    for (int64_t o = 0; o < co; ++o)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[static_cast<size_t>(o)]);
          for (int64_t c = 0; c < ci; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t sy = oy * stride - padding + ky * dilation;
                int64_t sx = ox * stride - padding + kx * dilation;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += static_cast<double>(x[static_cast<size_t>(((b * ci + c) * h + sy) * w + sx)]) *
                       k[static_cast<size_t>(((o * ci + c) * kh + ky) * kw + kx)];
              }
          out[static_cast<size_t>(((b * co + o) * oh + oy) * ow + ox)] = static_cast<real>(acc);
        }
  return out;
}

}  // namespace testutil
