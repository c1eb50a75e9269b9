// Command-line front end: train / infer / eval / baseline / ablate / synth.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "wdualmine/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wdualmine;

namespace {

int cmd_train(const std::string& config_path, bool desk) {
  RunConfig cfg = RunConfig::from_json_file(config_path);
  if (desk) cfg.apply_desk_profile();
  if (cfg.manifest.empty()) {
    std::fprintf(stderr, "config must name a manifest\n");
    return 1;
  }
  DatasetManifest manifest = DatasetManifest::load(cfg.manifest);
  TrainResult result = train(manifest, cfg);
  std::printf("trained %d steps; final total %.6f (best %.6f)\n", result.steps_run,
              result.final_total, result.best_total);
  std::printf("checkpoint: %s\n", result.checkpoint_path.c_str());
  std::printf("log: %s\n", result.log_path.c_str());
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& out_dir, bool dump_maps, bool color_reinject,
              const std::string& split) {
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  InferOptions opts;
  opts.dump_maps = dump_maps;
  opts.color_reinject = color_reinject;
  opts.split = split;
  metrics::MetricReport report = infer(checkpoint, manifest, out_dir, opts);
  metrics::PairMetrics m = report.mean();
  std::printf("fused %zu pairs (%zu skipped) -> %s\n", report.pairs.size(),
              report.skipped.size(), out_dir.c_str());
  std::printf("mean: EN %.4f  MI %.4f  CC %.4f  PSNR %.4f  FMI %.4f\n", m.en, m.mi, m.cc,
              m.psnr, m.fmi);
  return report.pairs.empty() ? 1 : 0;
}

int cmd_eval(const std::string& fused_dir, const std::string& manifest_path,
             const std::string& out_csv) {
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  std::string csv = out_csv.empty() ? fused_dir + "/metrics.csv" : out_csv;
  metrics::MetricReport report = evaluate_fused_dir(fused_dir, manifest, csv);
  metrics::PairMetrics m = report.mean();
  std::printf("evaluated %zu pairs (%zu skipped) -> %s\n", report.pairs.size(),
              report.skipped.size(), csv.c_str());
  std::printf("mean: EN %.4f  MI %.4f  CC %.4f  PSNR %.4f  FMI %.4f\n", m.en, m.mi, m.cc,
              m.psnr, m.fmi);
  return report.pairs.empty() ? 1 : 0;
}

int cmd_baseline(const std::string& method_name, const std::string& manifest_path,
                 const std::string& out_dir) {
  BaselineMethod method = baseline_method_from_string(method_name);
  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  fs::create_directories(out_dir);
  metrics::MetricReport report;
  report.dataset = manifest.name;
  report.checkpoint_id = "baseline:" + method_name;
  for (const auto& entry : manifest.entries) {
    try {
      ImagePair pair = load_pair(entry);
      Image fused = baseline_fuse(pair, method);
      save_png_gray(out_dir + "/" + pair.id + "_fused.png", fused);
      report.pairs.push_back(
          metrics::compute_pair_metrics(pair.id, fused, pair.a, pair.b, &report.flags));
    } catch (const std::exception& e) {
      report.skipped.emplace_back(entry.id, e.what());
    }
  }
  metrics::write_report(report, out_dir + "/metrics.csv");
  metrics::PairMetrics m = report.mean();
  std::printf("baseline %s on %zu pairs -> %s\n", method_name.c_str(), report.pairs.size(),
              out_dir.c_str());
  std::printf("mean: EN %.4f  MI %.4f  CC %.4f  PSNR %.4f  FMI %.4f\n", m.en, m.mi, m.cc,
              m.psnr, m.fmi);
  return report.pairs.empty() ? 1 : 0;
}

int cmd_ablate(const std::string& grid_name, const std::string& config_path, bool desk,
               const std::string& out_dir) {
  AblationGrid grid;
  if (grid_name == "arch")
    grid = AblationGrid::kArchitecture;
  else if (grid_name == "loss")
    grid = AblationGrid::kLoss;
  else {
    std::fprintf(stderr, "unknown grid '%s' (expected arch | loss)\n", grid_name.c_str());
    return 1;
  }
  RunConfig base = RunConfig::from_json_file(config_path);
  if (desk) base.apply_desk_profile();
  if (base.manifest.empty()) {
    std::fprintf(stderr, "config must name a manifest\n");
    return 1;
  }
  DatasetManifest manifest = DatasetManifest::load(base.manifest);
  std::string dir = out_dir.empty() ? base.output_dir + "/ablation_" + grid_name : out_dir;
  AblationReport report = ablation_suite(manifest, base, grid, dir);
  int failed = 0;
  for (const auto& row : report.rows) {
    if (row.failed) {
      ++failed;
      std::printf("row %-4s FAILED: %s\n", row.row_id.c_str(), row.error.c_str());
    } else {
      std::printf("row %-4s EN %.4f  MI %.4f  CC %.4f  PSNR %.4f  FMI %.4f\n",
                  row.row_id.c_str(), row.mean.en, row.mean.mi, row.mean.cc, row.mean.psnr,
                  row.mean.fmi);
    }
  }
  std::printf("grid written to %s\n", report.csv_path.c_str());
  return failed ? 1 : 0;
}

int cmd_synth(const std::string& out_dir, int pairs, int train_count, int size,
              uint64_t seed) {
  DatasetManifest m = write_synthetic_dataset(out_dir, pairs, train_count, size, seed);
  std::printf("wrote %zu synthetic pairs to %s (manifest.json alongside)\n",
              m.entries.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"W-DUALMINE image fusion pipeline"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, manifest_path, out_dir, out_csv, fused_dir;
  std::string method = "average", grid = "arch", split = "test";
  bool desk = false, dump_maps = false, color_reinject = false;
  int pairs = 8, train_count = 4, size = 64;
  uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Train a fusion model");
  train_cmd->add_option("--config", config_path, "RunConfig JSON")->required();
  train_cmd->add_flag("--desk", desk, "Desk-scale profile (64x64, narrow widths, 200 steps)");

  auto* infer_cmd = app.add_subcommand("infer", "Fuse pairs with a checkpoint");
  infer_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (.wdlm)")->required();
  infer_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  infer_cmd->add_option("--out", out_dir, "Output directory")->required();
  infer_cmd->add_option("--split", split, "Manifest split to fuse (default test, falls back to all)");
  infer_cmd->add_flag("--dump-maps", dump_maps, "Write reliability/mixing maps per scale");
  infer_cmd->add_flag("--color-reinject", color_reinject,
                      "Reinject chroma from the color source into the fused output");

  auto* eval_cmd = app.add_subcommand("eval", "Metrics for externally fused images");
  eval_cmd->add_option("--fused", fused_dir, "Directory of fused images")->required();
  eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  eval_cmd->add_option("--out", out_csv, "Metrics CSV path (default <fused>/metrics.csv)");

  auto* baseline_cmd = app.add_subcommand("baseline", "Classical fusion baselines");
  baseline_cmd->add_option("--method", method, "average | dwt_max")->required();
  baseline_cmd->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
  baseline_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Architecture / loss ablation grids");
  ablate_cmd->add_option("--grid", grid, "arch | loss")->required();
  ablate_cmd->add_option("--config", config_path, "Base RunConfig JSON")->required();
  ablate_cmd->add_option("--out", out_dir, "Output directory (default <output_dir>/ablation_<grid>)");
  ablate_cmd->add_flag("--desk", desk, "Desk-scale profile");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic desk-scale dataset");
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--pairs", pairs, "Total pair count (default 8)");
  synth_cmd->add_option("--train", train_count, "Pairs tagged train (default 4)");
  synth_cmd->add_option("--size", size, "Image size (default 64)");
  synth_cmd->add_option("--seed", seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, desk);
    if (infer_cmd->parsed())
      return cmd_infer(checkpoint, manifest_path, out_dir, dump_maps, color_reinject, split);
    if (eval_cmd->parsed()) return cmd_eval(fused_dir, manifest_path, out_csv);
    if (baseline_cmd->parsed()) return cmd_baseline(method, manifest_path, out_dir);
    if (ablate_cmd->parsed()) return cmd_ablate(grid, config_path, desk, out_dir);
    if (synth_cmd->parsed()) return cmd_synth(out_dir, pairs, train_count, size, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
