#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "wdualmine/pipeline.hpp"

namespace wdualmine {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RowSpec {
  std::string id;
  std::vector<std::pair<std::string, bool>> toggles;
  void (*apply)(RunConfig&, const RowSpec&);
};

void apply_arch(RunConfig& cfg, const RowSpec& row) {
  cfg.use_gce = row.toggles[0].second;
  cfg.use_we = row.toggles[1].second;
  cfg.use_sgm = row.toggles[2].second;
}

void apply_loss(RunConfig& cfg, const RowSpec& row) {
  cfg.use_loss_avg = row.toggles[0].second;
  cfg.use_loss_grad = row.toggles[1].second;
  cfg.use_loss_cc = row.toggles[2].second;
  cfg.use_loss_mi = row.toggles[3].second;
  cfg.use_loss_rec = row.toggles[4].second;
}

// Architecture grid: each expert removed in turn, the mixer replaced by
// averaging, then the full model. Loss grid: each objective term removed
// in turn, then the full model.
std::vector<RowSpec> grid_rows(AblationGrid grid) {
  if (grid == AblationGrid::kArchitecture)
    return {
        {"1", {{"gce", false}, {"we", true}, {"sgm", false}}, apply_arch},
        {"2", {{"gce", true}, {"we", false}, {"sgm", false}}, apply_arch},
        {"3", {{"gce", true}, {"we", true}, {"sgm", false}}, apply_arch},
        {"full", {{"gce", true}, {"we", true}, {"sgm", true}}, apply_arch},
    };
  return {
      {"1", {{"l_avg", false}, {"l_grad", true}, {"l_cc", true}, {"l_mi", true}, {"l_rec", true}}, apply_loss},
      {"2", {{"l_avg", true}, {"l_grad", false}, {"l_cc", true}, {"l_mi", true}, {"l_rec", true}}, apply_loss},
      {"3", {{"l_avg", true}, {"l_grad", true}, {"l_cc", false}, {"l_mi", true}, {"l_rec", true}}, apply_loss},
      {"4", {{"l_avg", true}, {"l_grad", true}, {"l_cc", true}, {"l_mi", false}, {"l_rec", true}}, apply_loss},
      {"5", {{"l_avg", true}, {"l_grad", true}, {"l_cc", true}, {"l_mi", true}, {"l_rec", false}}, apply_loss},
      {"full", {{"l_avg", true}, {"l_grad", true}, {"l_cc", true}, {"l_mi", true}, {"l_rec", true}}, apply_loss},
  };
}

}  // namespace

AblationReport ablation_suite(const DatasetManifest& manifest, const RunConfig& base,
                              AblationGrid grid, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<RowSpec> rows = grid_rows(grid);

  AblationReport report;
  report.grid = grid;
  json failures = json::array();
  for (const RowSpec& spec : rows) {
    AblationRow row;
    row.row_id = spec.id;
    row.toggles = spec.toggles;
    try {
      RunConfig cfg = base;
      spec.apply(cfg, spec);
      cfg.output_dir = out_dir + "/row_" + spec.id;
      cfg.resume.clear();
      cfg.validate();
      TrainResult tr = train(manifest, cfg);
      InferOptions opts;
      opts.split = "test";
      metrics::MetricReport mr =
          infer(tr.checkpoint_path, manifest, cfg.output_dir + "/eval", opts);
      if (mr.pairs.empty()) fail("row produced no evaluated pairs");
      row.mean = mr.mean();
      row.stddev = mr.stddev();
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      failures.push_back({{"row", spec.id}, {"error", e.what()}});
    }
    report.rows.push_back(std::move(row));
  }

  const char* grid_name = grid == AblationGrid::kArchitecture ? "arch" : "loss";
  report.csv_path = out_dir + "/ablation_" + grid_name + ".csv";
  std::ofstream csv(report.csv_path, std::ios::trunc);
  if (!csv) fail("cannot write '" + report.csv_path + "'");
  csv << "row";
  for (const auto& t : rows[0].toggles) csv << "," << t.first;
  csv << ",en_mean,en_std,mi_mean,mi_std,cc_mean,cc_std,psnr_mean,psnr_std,fmi_mean,fmi_std\n";
  for (const auto& row : report.rows) {
    if (row.failed) continue;
    csv << row.row_id;
    for (const auto& t : row.toggles) csv << "," << (t.second ? 1 : 0);
    csv << "," << fmt(row.mean.en) << "," << fmt(row.stddev.en) << "," << fmt(row.mean.mi)
        << "," << fmt(row.stddev.mi) << "," << fmt(row.mean.cc) << "," << fmt(row.stddev.cc)
        << "," << fmt(row.mean.psnr) << "," << fmt(row.stddev.psnr) << ","
        << fmt(row.mean.fmi) << "," << fmt(row.stddev.fmi) << "\n";
  }
  if (!failures.empty()) {
    std::ofstream f(out_dir + "/ablation_" + grid_name + "_failures.json", std::ios::trunc);
    f << failures.dump(2) << "\n";
  }
  return report;
}

}  // namespace wdualmine
