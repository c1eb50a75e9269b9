#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include <wdualmine/metrics.hpp>
#include <wdualmine/rng.hpp>

using namespace wdualmine;

namespace {

Image random_image(int h, int w, uint64_t seed) {
  SplitMix64 rng(seed);
  Image img(h, w);
  for (auto& v : img.pixels) v = static_cast<float>(rng.next_unit());
  return img;
}

int q8(float v) {
  int q = static_cast<int>(v * 255.f + 0.5f);
  return q < 0 ? 0 : (q > 255 ? 255 : q);
}

// --- independent scalar-loop oracles, no shared machinery ---

double oracle_entropy(const Image& img) {
  std::map<int, double> hist;
  for (float v : img.pixels) hist[q8(v)] += 1;
  double h = 0, n = static_cast<double>(img.size());
  for (auto& [bin, c] : hist) h -= (c / n) * std::log2(c / n);
  return h;
}

double oracle_mi(const Image& a, const Image& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ha, hb;
  for (size_t i = 0; i < a.size(); ++i) {
    joint[{q8(a.pixels[i]), q8(b.pixels[i])}] += 1;
    ha[q8(a.pixels[i])] += 1;
    hb[q8(b.pixels[i])] += 1;
  }
  double n = static_cast<double>(a.size()), mi = 0;
  for (auto& [xy, j] : joint)
    mi += (j / n) * std::log2((j / n) / ((ha[xy.first] / n) * (hb[xy.second] / n)));
  return mi;
}

double oracle_pearson(const Image& a, const Image& b) {
  double ma = 0, mb = 0, n = static_cast<double>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a.pixels[i];
    mb += b.pixels[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (a.pixels[i] - ma) * (b.pixels[i] - mb);
    va += (a.pixels[i] - ma) * (a.pixels[i] - ma);
    vb += (b.pixels[i] - mb) * (b.pixels[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

double oracle_psnr(const Image& f, const Image& a, const Image& b) {
  double m1 = 0, m2 = 0, n = static_cast<double>(f.size());
  for (size_t i = 0; i < f.size(); ++i) {
    double d1 = 255.0 * (f.pixels[i] - a.pixels[i]);
    double d2 = 255.0 * (f.pixels[i] - b.pixels[i]);
    m1 += d1 * d1;
    m2 += d2 * d2;
  }
  double mse = 0.5 * (m1 / n + m2 / n);
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::vector<double> oracle_dct_features(const Image& img) {
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  int bh = (img.height + 7) / 8, bw = (img.width + 7) / 8;
  std::vector<double> f;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx)
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          if (u == 0 && v == 0) continue;
          double acc = 0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
              acc += img.at(reflect(by * 8 + y, img.height), reflect(bx * 8 + x, img.width)) *
                     std::cos((2.0 * y + 1.0) * u * M_PI / 16.0) *
                     std::cos((2.0 * x + 1.0) * v * M_PI / 16.0);
          double cu = u ? 0.5 : std::sqrt(1.0 / 8.0);
          double cv = v ? 0.5 : std::sqrt(1.0 / 8.0);
          f.push_back(std::abs(cu * cv * acc));
        }
  return f;
}

double oracle_nmi_features(const std::vector<double>& fa, const std::vector<double>& fb) {
  double mx = 0;
  for (double v : fa) mx = std::max(mx, v);
  for (double v : fb) mx = std::max(mx, v);
  if (mx <= 0) return 0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ha, hb;
  for (size_t i = 0; i < fa.size(); ++i) {
    int qa = q8(static_cast<float>(fa[i] / mx)), qb = q8(static_cast<float>(fb[i] / mx));
    joint[{qa, qb}] += 1;
    ha[qa] += 1;
    hb[qb] += 1;
  }
  double n = static_cast<double>(fa.size()), mi = 0, ea = 0, eb = 0;
  for (auto& [xy, j] : joint)
    mi += (j / n) * std::log2((j / n) / ((ha[xy.first] / n) * (hb[xy.second] / n)));
  for (auto& [bin, c] : ha) ea -= (c / n) * std::log2(c / n);
  for (auto& [bin, c] : hb) eb -= (c / n) * std::log2(c / n);
  if (ea + eb <= 0) return 0;
  return 2 * mi / (ea + eb);
}

double oracle_fmi(const Image& f, const Image& a, const Image& b) {
  auto ff = oracle_dct_features(f);
  return 0.5 * (oracle_nmi_features(ff, oracle_dct_features(a)) +
                oracle_nmi_features(ff, oracle_dct_features(b)));
}

}  // namespace

TEST_CASE("entropy closed forms") {
  CHECK(metrics::entropy(Image(8, 8, 0.4f)) == doctest::Approx(0.0));

  Image coin(8, 8);
  for (int i = 0; i < 64; ++i) coin.pixels[static_cast<size_t>(i)] = (i % 2) ? 1.f : 0.f;
  CHECK(metrics::entropy(coin) == doctest::Approx(1.0).epsilon(1e-12));

  Image ramp(16, 16);
  for (int i = 0; i < 256; ++i) ramp.pixels[static_cast<size_t>(i)] = static_cast<float>(i) / 255.f;
  CHECK(metrics::entropy(ramp) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(metrics::entropy(random_image(32, 32, 5)) <= 8.0);
}

TEST_CASE("mutual information: self case and independence") {
  Image i = random_image(32, 32, 1);
  CHECK(metrics::mutual_information(i, i, i) ==
        doctest::Approx(2.0 * metrics::entropy(i)).epsilon(1e-9));

  Image f = random_image(64, 64, 2), a = random_image(64, 64, 3), b = random_image(64, 64, 4);
  CHECK(metrics::mutual_information(f, a, b) < 0.3);  // two independent terms < 0.15 each
}

TEST_CASE("mutual information: symmetry per term and the entropy bound") {
  Image a = random_image(24, 24, 6), b = random_image(24, 24, 7);
  CHECK(metrics::mutual_information(a, b, b) ==
        doctest::Approx(metrics::mutual_information(b, a, a)).epsilon(1e-9));
  double term = 0.5 * metrics::mutual_information(a, b, b);
  CHECK(term <= std::min(metrics::entropy(a), metrics::entropy(b)) + 1e-9);
}

TEST_CASE("correlation coefficient closed forms") {
  Image i = random_image(24, 24, 8);
  CHECK(metrics::correlation_coefficient(i, i, i) == doctest::Approx(1.0).epsilon(1e-12));

  // fused = average of independent equal-variance sources: CC -> 1/sqrt(2)
  double acc = 0;
  int reps = 6;
  for (int r = 0; r < reps; ++r) {
    Image a = random_image(64, 64, 100 + static_cast<uint64_t>(r));
    Image b = random_image(64, 64, 200 + static_cast<uint64_t>(r));
    Image f(64, 64);
    for (size_t k = 0; k < f.size(); ++k) f.pixels[k] = 0.5f * (a.pixels[k] + b.pixels[k]);
    acc += metrics::correlation_coefficient(f, a, b);
  }
  CHECK(acc / reps == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.03));

  // anti-correlated pair
  Image a = random_image(24, 24, 9);
  Image neg(24, 24);
  for (size_t k = 0; k < a.size(); ++k) neg.pixels[k] = -a.pixels[k];
  bool degenerate = false;
  CHECK(metrics::correlation_coefficient(neg, a, a, &degenerate) ==
        doctest::Approx(-1.0).epsilon(1e-9));

  bool flag = false;
  metrics::correlation_coefficient(Image(8, 8, 0.5f), a, a, &flag);
  CHECK(flag);  // constant fused image trips the variance guard
}

TEST_CASE("psnr closed forms and sentinel") {
  Image i = random_image(16, 16, 10);
  bool degenerate = false;
  CHECK(metrics::psnr(i, i, i, &degenerate) == doctest::Approx(metrics::kPsnrSentinel));
  CHECK(degenerate);

  // unit squared error in 8-bit units against both sources
  Image off(16, 16);
  for (size_t k = 0; k < i.size(); ++k) off.pixels[k] = i.pixels[k] + 1.f / 255.f;
  CHECK(metrics::psnr(off, i, i) == doctest::Approx(48.1308).epsilon(0.0002));
}

TEST_CASE("fmi: self case, constant guard, noise monotonicity") {
  Image i = random_image(32, 32, 11);
  CHECK(metrics::fmi_dct(i, i, i) == doctest::Approx(1.0).epsilon(1e-9));

  bool flag = false;
  CHECK(metrics::fmi_dct(Image(16, 16, 0.3f), Image(16, 16, 0.3f), Image(16, 16, 0.3f),
                         &flag) == doctest::Approx(0.0));
  CHECK(flag);

  // structured base image: blocks of distinct intensity plus a ramp
  Image base(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      base.at(y, x) = 0.25f + 0.5f * ((y / 8 + x / 8) % 2) + 0.005f * static_cast<float>(x);
  SplitMix64 rng(12);
  double prev = 1.1;
  for (double sigma : {0.0, 0.08, 0.2, 0.45}) {
    Image noisy = base;
    for (auto& v : noisy.pixels)
      v = static_cast<float>(std::clamp(v + sigma * (rng.next_unit() - 0.5), 0.0, 1.0));
    double fmi = metrics::fmi_dct(noisy, base, base);
    CHECK(fmi < prev);
    prev = fmi;
  }
}

TEST_CASE("all metrics match their scalar-loop oracles on random images") {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    Image f = random_image(16, 16, 300 + seed);
    Image a = random_image(16, 16, 400 + seed);
    Image b = random_image(16, 16, 500 + seed);
    CHECK(metrics::entropy(f) == doctest::Approx(oracle_entropy(f)).epsilon(1e-9));
    CHECK(metrics::mutual_information(f, a, b) ==
          doctest::Approx(oracle_mi(f, a) + oracle_mi(f, b)).epsilon(1e-9));
    CHECK(metrics::correlation_coefficient(f, a, b) ==
          doctest::Approx(0.5 * (oracle_pearson(f, a) + oracle_pearson(f, b)))
              .epsilon(1e-9));
    CHECK(metrics::psnr(f, a, b) == doctest::Approx(oracle_psnr(f, a, b)).epsilon(1e-9));
    CHECK(metrics::fmi_dct(f, a, b) == doctest::Approx(oracle_fmi(f, a, b)).epsilon(1e-9));
  }
}

TEST_CASE("histogram metrics are invariant to a common pixel permutation") {
  Image f = random_image(16, 16, 13), a = random_image(16, 16, 14), b = random_image(16, 16, 15);
  // deterministic shuffle applied to all three images
  std::vector<size_t> perm(f.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  SplitMix64 rng(16);
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.next_below(i)]);
  auto apply = [&](const Image& src) {
    Image out(src.height, src.width);
    for (size_t i = 0; i < perm.size(); ++i) out.pixels[i] = src.pixels[perm[i]];
    return out;
  };
  Image pf = apply(f), pa = apply(a), pb = apply(b);
  CHECK(metrics::entropy(pf) == doctest::Approx(metrics::entropy(f)).epsilon(1e-12));
  CHECK(metrics::mutual_information(pf, pa, pb) ==
        doctest::Approx(metrics::mutual_information(f, a, b)).epsilon(1e-9));
  CHECK(metrics::correlation_coefficient(pf, pa, pb) ==
        doctest::Approx(metrics::correlation_coefficient(f, a, b)).epsilon(1e-9));
}

TEST_CASE("evaluate_set: aggregation, identity fuser, skip recording") {
  std::vector<ImagePair> pairs;
  for (int k = 0; k < 3; ++k) {
    ImagePair p;
    p.id = "p" + std::to_string(k);
    p.a = random_image(16, 16, 600 + static_cast<uint64_t>(k));
    p.b = random_image(16, 16, 700 + static_cast<uint64_t>(k));
    pairs.push_back(std::move(p));
  }

  metrics::MetricReport single = metrics::evaluate_set(
      {pairs[0]}, [](const ImagePair& p) { return p.a; });
  CHECK(single.pairs.size() == 1);
  CHECK(single.stddev().en == doctest::Approx(0.0));

  metrics::MetricReport rep = metrics::evaluate_set(pairs, [](const ImagePair& p) {
    if (p.id == "p1") throw std::runtime_error("corrupt pair");
    return p.a;  // identity fuser
  });
  CHECK(rep.pairs.size() == 2);
  REQUIRE(rep.skipped.size() == 1);
  CHECK(rep.skipped[0].first == "p1");

  // identity fuser: CC = (1 + pearson(a, b)) / 2
  const ImagePair& p0 = pairs[0];
  CHECK(rep.pairs[0].cc ==
        doctest::Approx(0.5 * (1.0 + oracle_pearson(p0.a, p0.b))).epsilon(1e-9));

  // aggregates recompute from the per-pair rows
  metrics::PairMetrics m = rep.mean(), s = rep.stddev();
  double en_mean = (rep.pairs[0].en + rep.pairs[1].en) / 2;
  CHECK(m.en == doctest::Approx(en_mean).epsilon(1e-12));
  double var = 0;
  for (const auto& pr : rep.pairs) var += (pr.en - en_mean) * (pr.en - en_mean);
  CHECK(s.en == doctest::Approx(std::sqrt(var / 2)).epsilon(1e-12));

  // CSV schedule: header, one row per pair, mean and std footers
  std::string csv = rep.to_csv();
  CHECK(csv.rfind("pair,en,mi,cc,psnr,fmi\n", 0) == 0);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("\nstd,") != std::string::npos);
}
