#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "wdualmine/pipeline.hpp"

namespace wdualmine {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("wdualmine: " + msg); }

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) fail("config: unknown key '" + it.key() + "' in " + ctx);
  }
}

}  // namespace

void RunConfig::apply_desk_profile() {
  patch_size = 64;
  widths = {8, 16, 32, 64};
  proj_dim = 64;
  rec_hidden = 8;
  max_steps = 200;
  batch_size = 2;
  learning_rate = 1e-3;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config '" + path + "'");
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return from_json_text(text);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"learning_rate", "batch_size", "epochs", "max_steps", "patch_size", "seed",
              "augment", "lambda", "loss_terms", "ablation", "widths", "proj_dim",
              "rec_hidden", "manifest", "output_dir", "resume", "checkpoint_every_epochs"},
             "top level");
  RunConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("augment")) {
    const json& a = j["augment"];
    check_keys(a, {"hflip", "vflip", "rot90"}, "augment");
    c.augment.hflip = a.value("hflip", c.augment.hflip);
    c.augment.vflip = a.value("vflip", c.augment.vflip);
    c.augment.rot90 = a.value("rot90", c.augment.rot90);
  }
  if (j.contains("lambda")) {
    const json& l = j["lambda"];
    check_keys(l, {"avg", "grad", "cc", "mi", "rec", "tau"}, "lambda");
    c.weights.lambda_avg = l.value("avg", static_cast<double>(c.weights.lambda_avg));
    c.weights.lambda_grad = l.value("grad", static_cast<double>(c.weights.lambda_grad));
    c.weights.lambda_cc = l.value("cc", static_cast<double>(c.weights.lambda_cc));
    c.weights.lambda_mi = l.value("mi", static_cast<double>(c.weights.lambda_mi));
    c.weights.lambda_rec = l.value("rec", static_cast<double>(c.weights.lambda_rec));
    c.weights.tau = l.value("tau", static_cast<double>(c.weights.tau));
  }
  if (j.contains("loss_terms")) {
    const json& l = j["loss_terms"];
    check_keys(l, {"avg", "grad", "cc", "mi", "rec"}, "loss_terms");
    c.use_loss_avg = l.value("avg", true);
    c.use_loss_grad = l.value("grad", true);
    c.use_loss_cc = l.value("cc", true);
    c.use_loss_mi = l.value("mi", true);
    c.use_loss_rec = l.value("rec", true);
  }
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    check_keys(a, {"use_gce", "use_we", "use_sgm"}, "ablation");
    c.use_gce = a.value("use_gce", true);
    c.use_we = a.value("use_we", true);
    c.use_sgm = a.value("use_sgm", true);
  }
  if (j.contains("widths")) {
    if (!j["widths"].is_array() || j["widths"].size() != 4)
      fail("config: widths must be an array of 4 channel counts");
    for (int i = 0; i < 4; ++i) c.widths[static_cast<size_t>(i)] = j["widths"][static_cast<size_t>(i)];
  }
  c.proj_dim = j.value("proj_dim", c.proj_dim);
  c.rec_hidden = j.value("rec_hidden", c.rec_hidden);
  c.manifest = j.value("manifest", c.manifest);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.resume = j.value("resume", c.resume);
  c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
  return c;
}

std::string RunConfig::to_json_text() const {
  json j;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["max_steps"] = max_steps;
  j["patch_size"] = patch_size;
  j["seed"] = seed;
  j["augment"] = {{"hflip", augment.hflip}, {"vflip", augment.vflip}, {"rot90", augment.rot90}};
  j["lambda"] = {{"avg", static_cast<double>(weights.lambda_avg)},
                 {"grad", static_cast<double>(weights.lambda_grad)},
                 {"cc", static_cast<double>(weights.lambda_cc)},
                 {"mi", static_cast<double>(weights.lambda_mi)},
                 {"rec", static_cast<double>(weights.lambda_rec)},
                 {"tau", static_cast<double>(weights.tau)}};
  j["loss_terms"] = {{"avg", use_loss_avg},
                     {"grad", use_loss_grad},
                     {"cc", use_loss_cc},
                     {"mi", use_loss_mi},
                     {"rec", use_loss_rec}};
  j["ablation"] = {{"use_gce", use_gce}, {"use_we", use_we}, {"use_sgm", use_sgm}};
  j["widths"] = {widths[0], widths[1], widths[2], widths[3]};
  j["proj_dim"] = proj_dim;
  j["rec_hidden"] = rec_hidden;
  j["manifest"] = manifest;
  j["output_dir"] = output_dir;
  j["resume"] = resume;
  j["checkpoint_every_epochs"] = checkpoint_every_epochs;
  return j.dump(2);
}

void RunConfig::validate() const {
  if (learning_rate <= 0) fail("config: learning_rate must be positive");
  if (batch_size < 1) fail("config: batch_size must be >= 1");
  if (epochs < 1 && max_steps < 1) fail("config: need epochs >= 1 or max_steps >= 1");
  if (patch_size < 16 || patch_size % 16)
    fail("config: patch_size must be a positive multiple of 16");
  LossWeights w = effective_weights();
  if (w.lambda_mi > 0 && batch_size < 2)
    fail("config: the InfoNCE term needs batch_size >= 2 (in-batch negatives)");
  if (w.tau <= 0) fail("config: tau must be positive");
  model_config().validate();
}

LossWeights RunConfig::effective_weights() const {
  LossWeights w = weights;
  if (!use_loss_avg) w.lambda_avg = 0;
  if (!use_loss_grad) w.lambda_grad = 0;
  if (!use_loss_cc) w.lambda_cc = 0;
  if (!use_loss_mi) w.lambda_mi = 0;
  if (!use_loss_rec) w.lambda_rec = 0;
  return w;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.widths = widths;
  mc.proj_dim = proj_dim;
  mc.rec_hidden = rec_hidden;
  mc.use_gce = use_gce;
  mc.use_we = use_we;
  mc.use_sgm = use_sgm;
  return mc;
}

}  // namespace wdualmine
