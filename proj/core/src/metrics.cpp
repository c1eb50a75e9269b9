#include "wdualmine/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace wdualmine::metrics {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

void check_same(const Image& a, const Image& b, const char* who) {
  if (a.height != b.height || a.width != b.width)
    fail(std::string(who) + ": image size mismatch");
}

int bin256(float v) {
  int q = static_cast<int>(v * 255.f + 0.5f);
  return q < 0 ? 0 : (q > 255 ? 255 : q);
}

double hist_entropy(const std::vector<double>& hist, double total) {
  double h = 0;
  for (double c : hist)
    if (c > 0) {
      double p = c / total;
      h -= p * std::log2(p);
    }
  return h;
}

// MI between two already-quantized sequences (values in [0, 255]).
double mi_binned(const std::vector<int>& qa, const std::vector<int>& qb) {
  std::vector<double> joint(256 * 256, 0.0), ha(256, 0.0), hb(256, 0.0);
  size_t n = qa.size();
  for (size_t i = 0; i < n; ++i) {
    joint[static_cast<size_t>(qa[i]) * 256 + qb[i]] += 1;
    ha[static_cast<size_t>(qa[i])] += 1;
    hb[static_cast<size_t>(qb[i])] += 1;
  }
  double total = static_cast<double>(n), mi = 0;
  for (int x = 0; x < 256; ++x) {
    if (ha[static_cast<size_t>(x)] == 0) continue;
    for (int y = 0; y < 256; ++y) {
      double j = joint[static_cast<size_t>(x) * 256 + y];
      if (j == 0) continue;
      double pxy = j / total;
      mi += pxy * std::log2(pxy * total * total /
                            (ha[static_cast<size_t>(x)] * hb[static_cast<size_t>(y)]));
    }
  }
  return mi;
}

std::vector<int> quantize_image(const Image& img) {
  std::vector<int> q(img.size());
  for (size_t i = 0; i < img.size(); ++i) q[i] = bin256(img.pixels[i]);
  return q;
}

double mi_images(const Image& a, const Image& b) {
  return mi_binned(quantize_image(a), quantize_image(b));
}

double pearson(const Image& a, const Image& b, bool* degenerate) {
  double ma = 0, mb = 0;
  size_t n = a.size();
  for (size_t i = 0; i < n; ++i) {
    ma += a.pixels[i];
    mb += b.pixels[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0 || vb <= 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return cov / std::sqrt(va * vb);
}

// ---- FMI machinery: 8x8 DCT-II magnitude features without the DC term ----

struct DctTables {
  std::array<std::array<double, 8>, 8> cosines;  // cosines[u][x]
  DctTables() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        cosines[static_cast<size_t>(u)][static_cast<size_t>(x)] =
            std::cos((2.0 * x + 1.0) * u * M_PI / 16.0);
  }
};

// 63 AC magnitudes per 8x8 block, blocks in raster order. Images whose
// extents are not multiples of 8 are reflect-padded on the bottom/right.
std::vector<double> dct_features(const Image& img) {
  static const DctTables t;
  int bh = (img.height + 7) / 8, bw = (img.width + 7) / 8;
  auto sample = [&](int y, int x) {
    auto reflect = [](int i, int n) {
      if (n == 1) return 0;
      int period = 2 * (n - 1);
      i = ((i % period) + period) % period;
      return i < n ? i : period - i;
    };
    return static_cast<double>(img.at(reflect(y, img.height), reflect(x, img.width)));
  };
  std::vector<double> features;
  features.reserve(static_cast<size_t>(bh) * bw * 63);
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      double block[8][8];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) block[y][x] = sample(by * 8 + y, bx * 8 + x);
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
          if (u == 0 && v == 0) continue;  // drop DC
          double acc = 0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
              acc += block[y][x] * t.cosines[static_cast<size_t>(u)][static_cast<size_t>(y)] *
                     t.cosines[static_cast<size_t>(v)][static_cast<size_t>(x)];
          double cu = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
          double cv = v == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
          features.push_back(std::abs(cu * cv * acc));
        }
    }
  return features;
}

// Normalized MI between two feature sequences, quantized to 256 bins after
// joint max-normalization. Returns 0 (degenerate) if either entropy is 0.
double feature_nmi(const std::vector<double>& fa, const std::vector<double>& fb,
                   bool* degenerate) {
  double mx = 0;
  for (double v : fa) mx = std::max(mx, v);
  for (double v : fb) mx = std::max(mx, v);
  // constant blocks leave only cosine-sum rounding residue (~1e-16)
  if (mx <= 1e-9) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  auto quantize = [&](const std::vector<double>& f) {
    std::vector<int> q(f.size());
    for (size_t i = 0; i < f.size(); ++i)
      q[i] = bin256(static_cast<float>(f[i] / mx));
    return q;
  };
  std::vector<int> qa = quantize(fa), qb = quantize(fb);
  std::vector<double> hista(256, 0.0), histb(256, 0.0);
  for (int v : qa) hista[static_cast<size_t>(v)] += 1;
  for (int v : qb) histb[static_cast<size_t>(v)] += 1;
  double total = static_cast<double>(qa.size());
  double ha = hist_entropy(hista, total), hb = hist_entropy(histb, total);
  if (ha + hb <= 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return 2.0 * mi_binned(qa, qb) / (ha + hb);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double entropy(const Image& img) {
  if (img.size() == 0) fail("entropy of empty image");
  std::vector<double> hist(256, 0.0);
  for (float v : img.pixels) hist[static_cast<size_t>(bin256(v))] += 1;
  return hist_entropy(hist, static_cast<double>(img.size()));
}

double mutual_information(const Image& fused, const Image& a, const Image& b) {
  check_same(fused, a, "mutual_information");
  check_same(fused, b, "mutual_information");
  return mi_images(fused, a) + mi_images(fused, b);
}

double correlation_coefficient(const Image& fused, const Image& a, const Image& b,
                               bool* degenerate) {
  check_same(fused, a, "correlation_coefficient");
  check_same(fused, b, "correlation_coefficient");
  return 0.5 * (pearson(fused, a, degenerate) + pearson(fused, b, degenerate));
}

double psnr(const Image& fused, const Image& a, const Image& b, bool* degenerate) {
  check_same(fused, a, "psnr");
  check_same(fused, b, "psnr");
  auto mse8 = [](const Image& x, const Image& y) {
    double acc = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      double d = 255.0 * (static_cast<double>(x.pixels[i]) - y.pixels[i]);
      acc += d * d;
    }
    return acc / static_cast<double>(x.size());
  };
  double mse = 0.5 * (mse8(fused, a) + mse8(fused, b));
  if (mse <= 0) {
    if (degenerate) *degenerate = true;
    return kPsnrSentinel;
  }
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double fmi_dct(const Image& fused, const Image& a, const Image& b, bool* degenerate) {
  check_same(fused, a, "fmi_dct");
  check_same(fused, b, "fmi_dct");
  std::vector<double> ff = dct_features(fused);
  double n1 = feature_nmi(ff, dct_features(a), degenerate);
  double n2 = feature_nmi(ff, dct_features(b), degenerate);
  return 0.5 * (n1 + n2);
}

PairMetrics compute_pair_metrics(const std::string& id, const Image& fused,
                                 const Image& a, const Image& b,
                                 std::vector<std::string>* flags) {
  PairMetrics m;
  m.pair_id = id;
  m.en = entropy(fused);
  m.mi = mutual_information(fused, a, b);
  bool cc_deg = false, psnr_deg = false, fmi_deg = false;
  m.cc = correlation_coefficient(fused, a, b, &cc_deg);
  m.psnr = psnr(fused, a, b, &psnr_deg);
  m.fmi = fmi_dct(fused, a, b, &fmi_deg);
  if (flags) {
    if (cc_deg) flags->push_back(id + ":cc_zero_variance");
    if (psnr_deg) flags->push_back(id + ":psnr_sentinel");
    if (fmi_deg) flags->push_back(id + ":fmi_zero_entropy");
  }
  return m;
}

PairMetrics MetricReport::mean() const {
  PairMetrics m;
  m.pair_id = "mean";
  if (pairs.empty()) return m;
  for (const auto& p : pairs) {
    m.en += p.en;
    m.mi += p.mi;
    m.cc += p.cc;
    m.psnr += p.psnr;
    m.fmi += p.fmi;
  }
  double n = static_cast<double>(pairs.size());
  m.en /= n;
  m.mi /= n;
  m.cc /= n;
  m.psnr /= n;
  m.fmi /= n;
  return m;
}

PairMetrics MetricReport::stddev() const {
  PairMetrics s;
  s.pair_id = "std";
  if (pairs.empty()) return s;
  PairMetrics m = mean();
  for (const auto& p : pairs) {
    s.en += (p.en - m.en) * (p.en - m.en);
    s.mi += (p.mi - m.mi) * (p.mi - m.mi);
    s.cc += (p.cc - m.cc) * (p.cc - m.cc);
    s.psnr += (p.psnr - m.psnr) * (p.psnr - m.psnr);
    s.fmi += (p.fmi - m.fmi) * (p.fmi - m.fmi);
  }
  double n = static_cast<double>(pairs.size());
  s.en = std::sqrt(s.en / n);
  s.mi = std::sqrt(s.mi / n);
  s.cc = std::sqrt(s.cc / n);
  s.psnr = std::sqrt(s.psnr / n);
  s.fmi = std::sqrt(s.fmi / n);
  return s;
}

std::string MetricReport::to_csv() const {
  std::string out = "pair,en,mi,cc,psnr,fmi\n";
  auto row = [&](const PairMetrics& p) {
    out += p.pair_id + "," + fmt_double(p.en) + "," + fmt_double(p.mi) + "," +
           fmt_double(p.cc) + "," + fmt_double(p.psnr) + "," + fmt_double(p.fmi) + "\n";
  };
  for (const auto& p : pairs) row(p);
  row(mean());
  row(stddev());
  return out;
}

std::string MetricReport::metadata_json() const {
  std::string out = "{\n";
  out += "  \"dataset\": \"" + dataset + "\",\n";
  out += "  \"checkpoint\": \"" + checkpoint_id + "\",\n";
  out += "  \"timestamp\": \"" + timestamp + "\",\n";
  out += "  \"conventions\": {\n";
  out += "    \"histogram_bins\": 256,\n";
  out += "    \"quantization\": \"round(255*v)\",\n";
  out += "    \"log_base\": 2,\n";
  out += "    \"mi\": \"sum over the two sources\",\n";
  out += "    \"cc\": \"mean of the two Pearson coefficients\",\n";
  out += "    \"psnr\": \"10*log10(255^2 / mean of the two MSEs), sentinel 999 when exact\",\n";
  out += "    \"fmi\": \"8x8 DCT-II AC magnitudes, joint-max normalized, NMI averaged\",\n";
  out += "    \"luma\": \"BT.601\"\n";
  out += "  },\n";
  out += "  \"skipped\": [";
  for (size_t i = 0; i < skipped.size(); ++i) {
    if (i) out += ", ";
    out += "{\"pair\": \"" + skipped[i].first + "\", \"reason\": \"" + skipped[i].second +
           "\"}";
  }
  out += "],\n  \"flags\": [";
  for (size_t i = 0; i < flags.size(); ++i) {
    if (i) out += ", ";
    out += "\"" + flags[i] + "\"";
  }
  out += "]\n}\n";
  return out;
}

MetricReport evaluate_set(const std::vector<ImagePair>& pairs,
                          const std::function<Image(const ImagePair&)>& fuse) {
  if (pairs.empty()) fail("evaluate_set needs at least one pair");
  std::vector<const ImagePair*> sorted;
  sorted.reserve(pairs.size());
  for (const auto& p : pairs) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const ImagePair* x, const ImagePair* y) { return x->id < y->id; });
  MetricReport report;
  for (const ImagePair* p : sorted) {
    try {
      Image fused = fuse(*p);
      report.pairs.push_back(compute_pair_metrics(p->id, fused, p->a, p->b, &report.flags));
    } catch (const std::exception& e) {
      report.skipped.emplace_back(p->id, e.what());
    }
  }
  return report;
}

void write_report(const MetricReport& report, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) fail("cannot write '" + csv_path + "'");
  out << report.to_csv();
  std::ofstream meta(csv_path + ".meta.json", std::ios::trunc);
  if (!meta) fail("cannot write '" + csv_path + ".meta.json'");
  meta << report.metadata_json();
}

}  // namespace wdualmine::metrics
