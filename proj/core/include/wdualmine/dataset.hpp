#pragma once

#include <string>
#include <vector>

#include "wdualmine/image.hpp"
#include "wdualmine/rng.hpp"

namespace wdualmine {

struct ManifestEntry {
  std::string id;
  std::string path_a, path_b;
  std::string modality_a = "A", modality_b = "B";
  std::string split = "train";
  // "auto": RGB files go through luma extraction, gray files load directly.
  // "gray": force grayscale interpretation (chroma discarded).
  std::string color = "auto";
};

struct DatasetManifest {
  std::string name = "dataset";
  std::vector<ManifestEntry> entries;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;

  std::vector<ManifestEntry> split(const std::string& tag) const;
  // entries tagged `tag`, or every entry when none carries the tag
  std::vector<ManifestEntry> split_or_all(const std::string& tag) const;
};

// Decodes both sides of a pair; `resize_to > 0` resizes (bilinear) to a
// square target. Sides that disagree in size are resized to side A's.
ImagePair load_pair(const ManifestEntry& entry, int resize_to = 0);

struct AugmentConfig {
  bool hflip = true;
  bool vflip = true;
  bool rot90 = true;
};

// Applies one randomly drawn transform (flips + quarter rotation) to both
// images of the pair, keeping per-pixel correspondence.
void augment_pair(ImagePair& pair, SplitMix64& rng, const AugmentConfig& cfg);

// Deterministic smooth synthetic pairs: shared structures plus
// per-modality content, suitable for desk-scale training and CI.
ImagePair make_synthetic_pair(int size, uint64_t seed, const std::string& id);
// Writes PGM pairs plus a manifest ("train" split for the first
// `train_count` pairs, "test" for the rest).
DatasetManifest write_synthetic_dataset(const std::string& dir, int pair_count,
                                        int train_count, int size, uint64_t seed);

}  // namespace wdualmine
