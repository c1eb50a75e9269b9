#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "wdualmine/checkpoint.hpp"
#include "wdualmine/pipeline.hpp"

namespace wdualmine {

namespace fs = std::filesystem;
using nlohmann::json;

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

json model_config_json(const ModelConfig& mc) {
  json j;
  j["widths"] = {mc.widths[0], mc.widths[1], mc.widths[2], mc.widths[3]};
  j["proj_dim"] = mc.proj_dim;
  j["rec_hidden"] = mc.rec_hidden;
  j["eca_kernel"] = mc.eca_kernel;
  j["residual_scale"] = static_cast<double>(mc.residual_scale);
  j["use_gce"] = mc.use_gce;
  j["use_we"] = mc.use_we;
  j["use_sgm"] = mc.use_sgm;
  j["symmetric_reliability"] = mc.symmetric_reliability;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig mc;
  for (int i = 0; i < 4; ++i) mc.widths[static_cast<size_t>(i)] = j.at("widths")[static_cast<size_t>(i)];
  mc.proj_dim = j.at("proj_dim");
  mc.rec_hidden = j.at("rec_hidden");
  mc.eca_kernel = j.at("eca_kernel");
  mc.residual_scale = static_cast<real>(j.at("residual_scale").get<double>());
  mc.use_gce = j.at("use_gce");
  mc.use_we = j.at("use_we");
  mc.use_sgm = j.at("use_sgm");
  mc.symmetric_reliability = j.value("symmetric_reliability", false);
  return mc;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct StepBatch {
  Tensor i1, i2;
};

StepBatch assemble_batch(const std::vector<ImagePair>& pairs, const RunConfig& cfg,
                         int step) {
  SplitMix64 rng(derive_stream(cfg.seed, 0x7261696eull ^ static_cast<uint64_t>(step)));
  int64_t n = static_cast<int64_t>(pairs.size());
  int64_t h = pairs[0].a.height, w = pairs[0].a.width;
  int64_t b = cfg.batch_size;
  std::vector<real> da, db;
  da.reserve(static_cast<size_t>(b * h * w));
  db.reserve(static_cast<size_t>(b * h * w));
  for (int64_t s = 0; s < b; ++s) {
    ImagePair sample = pairs[static_cast<size_t>(rng.next_below(static_cast<uint64_t>(n)))];
    augment_pair(sample, rng, cfg.augment);
    for (float v : sample.a.pixels) da.push_back(static_cast<real>(v));
    for (float v : sample.b.pixels) db.push_back(static_cast<real>(v));
  }
  return {Tensor::from_data({b, 1, h, w}, std::move(da)),
          Tensor::from_data({b, 1, h, w}, std::move(db))};
}

}  // namespace

void save_model_checkpoint(const std::string& path, const FusionNet& net,
                           const AdamState* adam, const RunConfig& cfg, int step,
                           int epoch, double best_total) {
  std::vector<CheckpointEntry> entries;
  for (const auto& e : net.params().entries()) {
    CheckpointEntry ce;
    ce.name = e.name;
    ce.shape = e.tensor.shape();
    ce.data.reserve(static_cast<size_t>(e.tensor.numel()));
    for (real v : e.tensor.data()) ce.data.push_back(static_cast<float>(v));
    entries.push_back(std::move(ce));
  }
  if (adam) {
    auto* mut = const_cast<AdamState*>(adam);
    for (const auto& e : net.params().entries()) {
      if (!e.trainable) continue;
      for (const char* which : {"m", "v"}) {
        auto& store = which[0] == 'm' ? mut->moment1() : mut->moment2();
        auto it = store.find(e.name);
        CheckpointEntry ce;
        ce.name = std::string("opt.adam.") + which + "." + e.name;
        ce.shape = e.tensor.shape();
        if (it != store.end()) {
          ce.data.reserve(it->second.size());
          for (real v : it->second) ce.data.push_back(static_cast<float>(v));
        } else {
          ce.data.assign(static_cast<size_t>(e.tensor.numel()), 0.f);
        }
        entries.push_back(std::move(ce));
      }
    }
  }
  write_checkpoint(path, entries);

  json side;
  side["format_version"] = kCheckpointVersion;
  side["model"] = model_config_json(net.config());
  side["run"] = json::parse(cfg.to_json_text());
  side["state"] = {{"step", step},
                   {"epoch", epoch},
                   {"best_total", best_total},
                   {"adam_t", adam ? adam->t() : 0},
                   {"learning_rate", adam ? adam->lr() : cfg.learning_rate},
                   {"has_optimizer", adam != nullptr}};
  side["created"] = iso_now();
  std::ofstream out(path + ".json", std::ios::trunc);
  if (!out) fail("cannot write checkpoint sidecar '" + path + ".json'");
  out << side.dump(2) << "\n";
}

LoadedModel load_model_checkpoint(const std::string& path, AdamState* adam) {
  std::ifstream side_in(path + ".json");
  if (!side_in)
    fail("checkpoint sidecar '" + path + ".json' missing (needed for model config)");
  json side;
  try {
    side_in >> side;
  } catch (const json::exception& e) {
    fail("checkpoint sidecar is not valid JSON: " + std::string(e.what()));
  }
  ModelConfig mc = model_config_from_json(side.at("model"));
  LoadedModel lm{FusionNet(mc, 0), RunConfig::from_json_text(side.at("run").dump()), 0, 0, 0.0};
  lm.step = side.at("state").value("step", 0);
  lm.epoch = side.at("state").value("epoch", 0);
  lm.best_total = side.at("state").value("best_total", 0.0);

  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  for (const auto& p : lm.net.params().entries()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) fail("checkpoint '" + path + "' lacks parameter '" + p.name + "'");
    const CheckpointEntry& ce = *it->second;
    if (ce.shape != p.tensor.shape())
      fail("checkpoint '" + path + "' parameter '" + p.name + "' has shape " +
           shape_str(ce.shape) + ", model expects " + shape_str(p.tensor.shape()));
    auto dst = lm.net.params().get(p.name).data();
    for (size_t i = 0; i < ce.data.size(); ++i) dst[i] = static_cast<real>(ce.data[i]);
  }
  if (adam) {
    if (!side.at("state").value("has_optimizer", false))
      fail("checkpoint '" + path + "' carries no optimizer state; cannot resume");
    adam->set_t(side.at("state").value("adam_t", 0));
    adam->set_lr(side.at("state").value("learning_rate", adam->lr()));
    for (const auto& p : lm.net.params().entries()) {
      if (!p.trainable) continue;
      for (const char* which : {"m", "v"}) {
        auto it = by_name.find(std::string("opt.adam.") + which + "." + p.name);
        if (it == by_name.end())
          fail("checkpoint '" + path + "' lacks optimizer moments for '" + p.name + "'");
        std::vector<real> buf(it->second->data.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<real>(it->second->data[i]);
        (which[0] == 'm' ? adam->moment1() : adam->moment2())[p.name] = std::move(buf);
      }
    }
  }
  return lm;
}

TrainResult train(const DatasetManifest& manifest, const RunConfig& cfg) {
  cfg.validate();
  std::vector<ManifestEntry> entries = manifest.split_or_all("train");
  if (entries.empty()) fail("train: manifest has no entries");
  std::vector<ImagePair> pairs;
  pairs.reserve(entries.size());
  for (const auto& e : entries) pairs.push_back(load_pair(e, cfg.patch_size));

  fs::create_directories(cfg.output_dir);
  ModelConfig mc = cfg.model_config();

  std::optional<FusionNet> net;
  AdamState adam(cfg.learning_rate);
  int start_step = 0;
  int epoch = 0;
  double best = std::numeric_limits<double>::infinity();
  if (!cfg.resume.empty()) {
    LoadedModel lm = load_model_checkpoint(cfg.resume, &adam);
    if (lm.net.config().widths != mc.widths)
      fail("resume: checkpoint widths do not match the configured model");
    net.emplace(std::move(lm.net));
    start_step = lm.step;
    epoch = lm.epoch;
    best = lm.best_total > 0 ? lm.best_total : best;
  } else {
    net.emplace(mc, cfg.seed);
  }

  int steps_per_epoch =
      static_cast<int>((pairs.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                       static_cast<size_t>(cfg.batch_size));
  int total_steps = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;

  TrainResult result;
  result.log_path = cfg.output_dir + "/train_log.csv";
  result.checkpoint_path = cfg.output_dir + "/checkpoint.wdlm";
  result.best_checkpoint_path = cfg.output_dir + "/checkpoint_best.wdlm";
  bool fresh_log = start_step == 0 || !fs::exists(result.log_path);
  std::ofstream log(result.log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) fail("cannot write training log '" + result.log_path + "'");
  if (fresh_log) log << "step,total,avg,grad,cc,mi,rec\n";

  LossWeights w = cfg.effective_weights();
  std::string last_finite = "(none)";
  for (int step = start_step; step < total_steps; ++step) {
    StepBatch batch = assemble_batch(pairs, cfg, step);

    FeaturePyramid p1 = net->encode(batch.i1);
    FeaturePyramid p2 = net->encode(batch.i2);
    FusionOutput out = net->fuse_from(p1, p2, batch.i1, batch.i2);
    Tensor zf, z1, z2, rec1, rec2;
    if (w.lambda_rec > 0) {
      auto heads = net->reconstruction_heads(out.fused);
      rec1 = heads.first;
      rec2 = heads.second;
    }
    if (w.lambda_mi > 0) {
      z1 = net->project(p1.levels[3]);
      z2 = net->project(p2.levels[3]);
      zf = net->project(net->encode(out.fused).levels[3]);
    }
    LossBreakdown lb = loss_total(out.fused, batch.i1, batch.i2, zf, z1, z2, rec1, rec2, w);

    if (!std::isfinite(lb.total_value))
      fail("training diverged (non-finite loss) at step " + std::to_string(step) +
           "; last finite breakdown: " + last_finite);
    char line[256];
    std::snprintf(line, sizeof line, "%d,%s,%s,%s,%s,%s,%s", step, fmt(lb.total_value).c_str(),
                  fmt(lb.avg).c_str(), fmt(lb.grad).c_str(), fmt(lb.cc).c_str(),
                  fmt(lb.mi).c_str(), fmt(lb.rec).c_str());
    log << line << "\n";
    last_finite = line;

    backward(lb.total);
    adam.step(net->params());

    result.last = lb;
    result.final_total = lb.total_value;
    result.steps_run = step + 1;

    if (lb.total_value < best) {
      best = lb.total_value;
      save_model_checkpoint(result.best_checkpoint_path, *net, &adam, cfg, step + 1, epoch,
                            best);
    }
    if ((step + 1) % steps_per_epoch == 0) {
      ++epoch;
      if (cfg.checkpoint_every_epochs > 0 && epoch % cfg.checkpoint_every_epochs == 0)
        save_model_checkpoint(cfg.output_dir + "/checkpoint_last.wdlm", *net, &adam, cfg,
                              step + 1, epoch, best);
    }
  }
  result.best_total = best;
  save_model_checkpoint(result.checkpoint_path, *net, &adam, cfg, total_steps, epoch, best);
  return result;
}

}  // namespace wdualmine
