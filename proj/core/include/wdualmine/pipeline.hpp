#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wdualmine/dataset.hpp"
#include "wdualmine/losses.hpp"
#include "wdualmine/metrics.hpp"
#include "wdualmine/model.hpp"
#include "wdualmine/nn.hpp"

namespace wdualmine {

// Everything a run needs, serialized verbatim into the checkpoint sidecar
// so results are reproducible from the artifact alone.
struct RunConfig {
  double learning_rate = 1e-5;
  int batch_size = 8;
  int epochs = 100;
  int max_steps = 0;  // 0: epochs decide; otherwise a hard cap
  int patch_size = 256;
  uint64_t seed = 0;

  AugmentConfig augment;
  LossWeights weights;
  bool use_loss_avg = true, use_loss_grad = true, use_loss_cc = true,
       use_loss_mi = true, use_loss_rec = true;

  bool use_gce = true, use_we = true, use_sgm = true;
  std::array<int64_t, 4> widths{16, 32, 64, 128};
  int64_t proj_dim = 128;
  int64_t rec_hidden = 16;

  std::string manifest;
  std::string output_dir = "runs/default";
  std::string resume;  // checkpoint path to continue from
  int checkpoint_every_epochs = 1;

  // 64x64 patches, narrow widths, 200 steps: finishes on a laptop CPU in
  // a couple of minutes.
  void apply_desk_profile();

  // Unknown keys are rejected.
  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;

  void validate() const;
  LossWeights effective_weights() const;  // toggled-off terms zeroed
  ModelConfig model_config() const;
};

struct TrainResult {
  std::string checkpoint_path;       // final
  std::string best_checkpoint_path;  // lowest total loss
  std::string log_path;              // per-step loss CSV
  int steps_run = 0;
  double final_total = 0;
  double best_total = 0;
  LossBreakdown last;
};

// Mini-batch loop: sample -> fuse -> heads -> compound loss -> backward ->
// Adam. Deterministic for a fixed (seed, config, manifest); a non-finite
// loss aborts with the step index and the last finite breakdown.
TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg);

// Checkpoint glue shared by train/infer/ablate.
void save_model_checkpoint(const std::string& path, const FusionNet& net,
                           const AdamState* adam, const RunConfig& cfg, int step,
                           int epoch, double best_total);
struct LoadedModel {
  FusionNet net;
  RunConfig run;
  int step = 0;
  int epoch = 0;
  double best_total = 0;
};
LoadedModel load_model_checkpoint(const std::string& path, AdamState* adam = nullptr);

struct InferOptions {
  bool dump_maps = false;
  bool color_reinject = false;
  std::string split = "test";  // falls back to all entries when untagged
};

// Fuses every selected pair, writes 8-bit PNGs (plus optional chroma
// reinjection and diagnostic maps) and the metrics CSV. Returns the report.
metrics::MetricReport infer(const std::string& checkpoint_path,
                            const DatasetManifest& manifest, const std::string& out_dir,
                            const InferOptions& opts);

// Metrics for already-fused images (`<id>_fused.png` or `<id>.png` in dir).
metrics::MetricReport evaluate_fused_dir(const std::string& fused_dir,
                                         const DatasetManifest& manifest,
                                         const std::string& csv_path);

enum class BaselineMethod { kAverage, kDwtMax };
BaselineMethod baseline_method_from_string(const std::string& name);

// Classical anchors: pixel average, or 2-level Haar with averaged LL and
// magnitude-max detail bands.
Image baseline_fuse(const ImagePair& pair, BaselineMethod method);

enum class AblationGrid { kArchitecture, kLoss };

struct AblationRow {
  std::string row_id;
  std::vector<std::pair<std::string, bool>> toggles;  // column -> on/off
  metrics::PairMetrics mean, stddev;
  bool failed = false;
  std::string error;
};

struct AblationReport {
  AblationGrid grid;
  std::vector<AblationRow> rows;
  std::string csv_path;
};

// Trains and evaluates every configuration row of the requested grid
// (architecture: GCE/WE/SGM toggles; loss: each lambda zeroed), then the
// full model, and writes one consolidated CSV. Failed rows are recorded
// and the suite continues.
AblationReport ablation_suite(const DatasetManifest& manifest, const RunConfig& base,
                              AblationGrid grid, const std::string& out_dir);

}  // namespace wdualmine
