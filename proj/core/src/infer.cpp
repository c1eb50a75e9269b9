#include <chrono>
#include <ctime>
#include <filesystem>
#include <stdexcept>

#include "wdualmine/pipeline.hpp"
#include "wdualmine/wavelet.hpp"

namespace wdualmine {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void dump_map(const std::string& path, const Tensor& map) {
  if (!map.defined()) return;
  save_png_gray(path, tensor_to_image(map));
}

}  // namespace

metrics::MetricReport infer(const std::string& checkpoint_path,
                            const DatasetManifest& manifest, const std::string& out_dir,
                            const InferOptions& opts) {
  LoadedModel lm = load_model_checkpoint(checkpoint_path);
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> entries = manifest.split_or_all(opts.split);
  if (entries.empty()) fail("infer: manifest has no entries");

  NoGradGuard no_grad;
  metrics::MetricReport report;
  report.dataset = manifest.name;
  report.checkpoint_id = fs::path(checkpoint_path).filename().string();
  report.timestamp = iso_now();
  for (const auto& entry : entries) {
    try {
      ImagePair pair = load_pair(entry);
      FusionOutput out = lm.net.fuse_padded(image_to_tensor(pair.a), image_to_tensor(pair.b));
      Image fused = tensor_to_image(out.fused);
      save_png_gray(out_dir + "/" + pair.id + "_fused.png", fused);
      if (opts.color_reinject && pair.chroma.present()) {
        ChromaPlanes chroma = pair.chroma;
        if (chroma.height != fused.height || chroma.width != fused.width)
          chroma = resize_bilinear(chroma, fused.height, fused.width);
        save_png_ycbcr(out_dir + "/" + pair.id + "_fused_color.png", fused, chroma);
      }
      if (opts.dump_maps) {
        for (int s = 0; s < 4; ++s) {
          std::string tag = "_s" + std::to_string(s + 1) + ".png";
          dump_map(out_dir + "/" + pair.id + "_w1" + tag,
                   out.diag.reliability_w1[static_cast<size_t>(s)]);
          dump_map(out_dir + "/" + pair.id + "_alpha1" + tag,
                   out.diag.mixer_alpha1[static_cast<size_t>(s)]);
        }
      }
      report.pairs.push_back(
          metrics::compute_pair_metrics(pair.id, fused, pair.a, pair.b, &report.flags));
    } catch (const std::exception& e) {
      report.skipped.emplace_back(entry.id, e.what());
    }
  }
  metrics::write_report(report, out_dir + "/metrics.csv");
  return report;
}

metrics::MetricReport evaluate_fused_dir(const std::string& fused_dir,
                                         const DatasetManifest& manifest,
                                         const std::string& csv_path) {
  metrics::MetricReport report;
  report.dataset = manifest.name;
  report.checkpoint_id = "external:" + fused_dir;
  report.timestamp = iso_now();
  for (const auto& entry : manifest.entries) {
    try {
      std::string found;
      for (const char* pattern : {"_fused.png", "_fused.pgm", ".png", ".pgm"}) {
        std::string candidate = fused_dir + "/" + entry.id + pattern;
        if (fs::exists(candidate)) {
          found = candidate;
          break;
        }
      }
      if (found.empty()) fail("no fused image for pair '" + entry.id + "' in " + fused_dir);
      ImagePair pair = load_pair(entry);
      Image fused = load_image_gray(found);
      if (fused.height != pair.a.height || fused.width != pair.a.width)
        fail("fused image size mismatch for pair '" + entry.id + "'");
      report.pairs.push_back(
          metrics::compute_pair_metrics(entry.id, fused, pair.a, pair.b, &report.flags));
    } catch (const std::exception& e) {
      report.skipped.emplace_back(entry.id, e.what());
    }
  }
  if (!csv_path.empty()) metrics::write_report(report, csv_path);
  return report;
}

BaselineMethod baseline_method_from_string(const std::string& name) {
  if (name == "average") return BaselineMethod::kAverage;
  if (name == "dwt_max") return BaselineMethod::kDwtMax;
  fail("unknown baseline method '" + name + "' (expected average | dwt_max)");
}

namespace {

// Two-level Haar fusion: LL averaged, every detail band magnitude-max.
Image dwt_max_fuse(const Image& ia, const Image& ib) {
  NoGradGuard no_grad;
  Tensor a = image_to_tensor(ia);
  Tensor b = image_to_tensor(ib);
  int64_t h = a.dim(2), w = a.dim(3);
  int pad_b = static_cast<int>((4 - h % 4) % 4);
  int pad_r = static_cast<int>((4 - w % 4) % 4);
  if (pad_b || pad_r) {
    a = reflect_pad2d(a, 0, pad_b, 0, pad_r);
    b = reflect_pad2d(b, 0, pad_b, 0, pad_r);
  }
  auto pick_max = [](const Tensor& d1, const Tensor& d2) {
    Tensor m = ge_mask(abs(d1), abs(d2));
    return add(mul(m, d1), mul(scalar_add(neg(m), real(1)), d2));
  };
  WaveletBands a1 = haar_dwt(a), b1 = haar_dwt(b);
  WaveletBands a2 = haar_dwt(a1.ll), b2 = haar_dwt(b1.ll);
  WaveletBands f2{scalar_mul(add(a2.ll, b2.ll), real(0.5)), pick_max(a2.lh, b2.lh),
                  pick_max(a2.hl, b2.hl), pick_max(a2.hh, b2.hh)};
  WaveletBands f1{haar_idwt(f2), pick_max(a1.lh, b1.lh), pick_max(a1.hl, b1.hl),
                  pick_max(a1.hh, b1.hh)};
  Tensor fused = clip(haar_idwt(f1), real(0), real(1));
  if (pad_b || pad_r) fused = crop2d(fused, 0, 0, h, w);
  return tensor_to_image(fused);
}

}  // namespace

Image baseline_fuse(const ImagePair& pair, BaselineMethod method) {
  if (pair.a.height != pair.b.height || pair.a.width != pair.b.width)
    fail("baseline_fuse: pair images differ in size");
  if (method == BaselineMethod::kAverage) {
    Image out(pair.a.height, pair.a.width);
    for (size_t i = 0; i < out.size(); ++i)
      out.pixels[i] = 0.5f * (pair.a.pixels[i] + pair.b.pixels[i]);
    return out;
  }
  return dwt_max_fuse(pair.a, pair.b);
}

}  // namespace wdualmine
