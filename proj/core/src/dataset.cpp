#include "wdualmine/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace wdualmine {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("manifest '" + path + "' is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  m.name = j.value("name", std::string("dataset"));
  if (!j.contains("pairs") || !j["pairs"].is_array())
    fail("manifest '" + path + "' needs a \"pairs\" array");
  fs::path base = fs::path(path).parent_path();
  std::vector<std::string> seen;
  for (const auto& e : j["pairs"]) {
    ManifestEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.path_a = e.at("a").get<std::string>();
    entry.path_b = e.at("b").get<std::string>();
    entry.modality_a = e.value("modality_a", std::string("A"));
    entry.modality_b = e.value("modality_b", std::string("B"));
    entry.split = e.value("split", std::string("train"));
    entry.color = e.value("color", std::string("auto"));
    // relative paths resolve against the manifest location
    for (std::string* p : {&entry.path_a, &entry.path_b})
      if (!fs::path(*p).is_absolute()) *p = (base / *p).string();
    if (std::find(seen.begin(), seen.end(), entry.id) != seen.end())
      fail("manifest '" + path + "': duplicate pair id '" + entry.id + "'");
    seen.push_back(entry.id);
    m.entries.push_back(std::move(entry));
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["name"] = name;
  j["pairs"] = json::array();
  fs::path base = fs::path(path).parent_path();
  for (const auto& e : entries) {
    json p;
    p["id"] = e.id;
    p["a"] = fs::relative(e.path_a, base).string();
    p["b"] = fs::relative(e.path_b, base).string();
    p["modality_a"] = e.modality_a;
    p["modality_b"] = e.modality_b;
    p["split"] = e.split;
    p["color"] = e.color;
    j["pairs"].push_back(p);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& tag) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == tag) out.push_back(e);
  return out;
}

std::vector<ManifestEntry> DatasetManifest::split_or_all(const std::string& tag) const {
  std::vector<ManifestEntry> out = split(tag);
  return out.empty() ? entries : out;
}

ImagePair load_pair(const ManifestEntry& entry, int resize_to) {
  ImagePair pair;
  pair.id = entry.id;
  pair.modality_a = entry.modality_a;
  pair.modality_b = entry.modality_b;
  bool want_chroma = entry.color != "gray";
  ChromaPlanes ca, cb;
  pair.a = load_image_gray(entry.path_a, want_chroma ? &ca : nullptr);
  pair.b = load_image_gray(entry.path_b, want_chroma ? &cb : nullptr);
  if (ca.present()) {
    pair.chroma = std::move(ca);
    pair.chroma_source = 1;
  } else if (cb.present()) {
    pair.chroma = std::move(cb);
    pair.chroma_source = 2;
  }
  if (resize_to > 0) {
    pair.a = resize_bilinear(pair.a, resize_to, resize_to);
    pair.b = resize_bilinear(pair.b, resize_to, resize_to);
    if (pair.chroma.present()) pair.chroma = resize_bilinear(pair.chroma, resize_to, resize_to);
  } else if (pair.a.height != pair.b.height || pair.a.width != pair.b.width) {
    pair.b = resize_bilinear(pair.b, pair.a.height, pair.a.width);
  }
  return pair;
}

namespace {

Image flip_h(const Image& src) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) out.at(y, x) = src.at(y, src.width - 1 - x);
  return out;
}

Image flip_v(const Image& src) {
  Image out(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) out.at(y, x) = src.at(src.height - 1 - y, x);
  return out;
}

Image rot90cw(const Image& src) {
  Image out(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) out.at(x, src.height - 1 - y) = src.at(y, x);
  return out;
}

}  // namespace

void augment_pair(ImagePair& pair, SplitMix64& rng, const AugmentConfig& cfg) {
  bool do_h = cfg.hflip && (rng.next_u64() & 1);
  bool do_v = cfg.vflip && (rng.next_u64() & 1);
  int quarter = cfg.rot90 ? static_cast<int>(rng.next_below(4)) : 0;
  auto apply = [&](Image& img) {
    if (do_h) img = flip_h(img);
    if (do_v) img = flip_v(img);
    for (int k = 0; k < quarter; ++k) img = rot90cw(img);
  };
  apply(pair.a);
  apply(pair.b);
  // chroma follows so reinjection stays aligned
  if (pair.chroma.present()) {
    Image cbp(pair.chroma.height, pair.chroma.width), crp(pair.chroma.height, pair.chroma.width);
    cbp.pixels = pair.chroma.cb;
    crp.pixels = pair.chroma.cr;
    apply(cbp);
    apply(crp);
    pair.chroma.height = cbp.height;
    pair.chroma.width = cbp.width;
    pair.chroma.cb = std::move(cbp.pixels);
    pair.chroma.cr = std::move(crp.pixels);
  }
}

ImagePair make_synthetic_pair(int size, uint64_t seed, const std::string& id) {
  SplitMix64 rng(seed);
  ImagePair pair;
  pair.id = id;
  pair.modality_a = "synthA";
  pair.modality_b = "synthB";
  pair.a = Image(size, size);
  pair.b = Image(size, size);

  struct Blob {
    double cx, cy, sigma, gain;
  };
  auto draw_blobs = [&](int count, double gain_lo, double gain_hi) {
    std::vector<Blob> blobs;
    for (int i = 0; i < count; ++i)
      blobs.push_back({rng.uniform(0.1, 0.9) * size, rng.uniform(0.1, 0.9) * size,
                       rng.uniform(0.08, 0.25) * size, rng.uniform(gain_lo, gain_hi)});
    return blobs;
  };
  auto field = [&](const std::vector<Blob>& blobs, int y, int x) {
    double v = 0;
    for (const auto& b : blobs) {
      double dx = x - b.cx, dy = y - b.cy;
      v += b.gain * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
    }
    return v;
  };

  std::vector<Blob> shared = draw_blobs(4, -0.6, 0.9);
  std::vector<Blob> only_a = draw_blobs(2, -0.5, 0.8);
  std::vector<Blob> only_b = draw_blobs(2, -0.5, 0.8);
  double ramp_a = rng.uniform(-0.2, 0.2), ramp_b = rng.uniform(-0.2, 0.2);

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double ramp = static_cast<double>(x + y) / (2.0 * size);
      double va = 0.45 + 0.8 * field(shared, y, x) + 0.6 * field(only_a, y, x) + ramp_a * ramp;
      double vb = 0.45 + 0.6 * field(shared, y, x) + 0.8 * field(only_b, y, x) + ramp_b * ramp;
      pair.a.at(y, x) = static_cast<float>(std::clamp(va, 0.0, 1.0));
      pair.b.at(y, x) = static_cast<float>(std::clamp(vb, 0.0, 1.0));
    }
  return pair;
}

DatasetManifest write_synthetic_dataset(const std::string& dir, int pair_count,
                                        int train_count, int size, uint64_t seed) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.name = "synthetic";
  for (int i = 0; i < pair_count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "pair%03d", i);
    ImagePair pair = make_synthetic_pair(size, derive_stream(seed, static_cast<uint64_t>(i)), id);
    std::string pa = dir + "/" + pair.id + "_a.pgm";
    std::string pb = dir + "/" + pair.id + "_b.pgm";
    save_pgm(pa, pair.a);
    save_pgm(pb, pair.b);
    ManifestEntry e;
    e.id = pair.id;
    e.path_a = pa;
    e.path_b = pb;
    e.modality_a = pair.modality_a;
    e.modality_b = pair.modality_b;
    e.split = i < train_count ? "train" : "test";
    m.entries.push_back(e);
  }
  m.save(dir + "/manifest.json");
  return m;
}

}  // namespace wdualmine
