#include "wdualmine/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace wdualmine {

namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("wdualmine: " + msg);
}

}  // namespace

Tensor ModelParams::add(const std::string& name, Tensor t, bool trainable) {
  if (index_.count(name)) fail("duplicate parameter name '" + name + "'");
  if (trainable) t.set_requires_grad(true);
  index_[name] = entries_.size();
  entries_.push_back({name, t, trainable});
  return t;
}

Tensor ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail("unknown parameter '" + name + "'");
  return entries_[it->second].tensor;
}

bool ModelParams::contains(const std::string& name) const { return index_.count(name) > 0; }

int64_t ModelParams::scalar_count() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void AdamState::step(ModelParams& params) {
  ++t_;
  double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    TensorNode& node = *e.tensor.node();
    if (node.grad.size() != node.value.size())
      fail("adam_step: trainable parameter '" + e.name + "' has no grad buffer");
    auto& m = m_[e.name];
    auto& v = v_[e.name];
    if (m.size() != node.value.size()) m.assign(node.value.size(), real(0));
    if (v.size() != node.value.size()) v.assign(node.value.size(), real(0));
    for (size_t i = 0; i < node.value.size(); ++i) {
      double g = node.grad[i];
      double mi = kBeta1 * m[i] + (1.0 - kBeta1) * g;
      double vi = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
      m[i] = static_cast<real>(mi);
      v[i] = static_cast<real>(vi);
      double update = lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + kEps);
      node.value[i] -= static_cast<real>(update);
      node.grad[i] = real(0);
    }
  }
}

namespace {

Tensor kaiming_uniform(SplitMix64& rng, Shape shape, int64_t fan_in) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  int64_t n = shape_numel(shape);
  std::vector<real> data(static_cast<size_t>(n));
  for (auto& x : data) x = static_cast<real>(rng.uniform(-bound, bound));
  return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace

Tensor kaiming_conv_weight(SplitMix64& rng, int64_t out_c, int64_t in_c, int64_t kh,
                           int64_t kw) {
  return kaiming_uniform(rng, {out_c, in_c, kh, kw}, in_c * kh * kw);
}

Tensor kaiming_linear_weight(SplitMix64& rng, int64_t out_f, int64_t in_f) {
  return kaiming_uniform(rng, {out_f, in_f}, in_f);
}

ResBlock::ResBlock(ModelParams& params, SplitMix64& rng, const std::string& prefix,
                   int64_t in_c_, int64_t out_c_) {
  in_c = in_c_;
  out_c = out_c_;
  w1 = params.add(prefix + ".conv1.w", kaiming_conv_weight(rng, out_c, in_c, 3, 3));
  b1 = params.add(prefix + ".conv1.b", Tensor::zeros({out_c}));
  w2 = params.add(prefix + ".conv2.w", kaiming_conv_weight(rng, out_c, out_c, 3, 3));
  b2 = params.add(prefix + ".conv2.b", Tensor::zeros({out_c}));
  if (in_c != out_c) {
    wp = params.add(prefix + ".proj.w", kaiming_conv_weight(rng, out_c, in_c, 1, 1));
    bp = params.add(prefix + ".proj.b", Tensor::zeros({out_c}));
  }
}

Tensor ResBlock::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_c)
    fail("res_block expects " + std::to_string(in_c) + " channels, got " +
         shape_str(x.shape()));
  Tensor skip = wp.defined() ? conv2d(x, wp, bp) : x;
  Tensor branch = conv2d(relu(conv2d(x, w1, b1, 1, 1, 1)), w2, b2, 1, 1, 1);
  return relu(add(skip, branch));
}

EcaBlock::EcaBlock(ModelParams& params, SplitMix64& rng, const std::string& prefix,
                   int64_t k_) {
  k = k_;
  // fan_in = k taps
  double bound = std::sqrt(6.0 / static_cast<double>(k));
  std::vector<real> data(static_cast<size_t>(k));
  for (auto& x : data) x = static_cast<real>(rng.uniform(-bound, bound));
  w = params.add(prefix + ".w", Tensor::from_data({k}, std::move(data)));
}

Tensor EcaBlock::forward(const Tensor& x) const {
  int64_t n = x.dim(0), c = x.dim(1);
  Tensor pooled = global_avg_pool(x);                       // {N, C}
  Tensor gate = sigmoid(conv1d_channel(pooled, w));         // {N, C}
  return mul(x, reshape(gate, {n, c, 1, 1}));
}

ProjectionHead::ProjectionHead(ModelParams& params, SplitMix64& rng,
                               const std::string& prefix, int64_t in_c_, int64_t dim_) {
  in_c = in_c_;
  dim = dim_;
  w1 = params.add(prefix + ".fc1.w", kaiming_linear_weight(rng, in_c, in_c));
  b1 = params.add(prefix + ".fc1.b", Tensor::zeros({in_c}));
  w2 = params.add(prefix + ".fc2.w", kaiming_linear_weight(rng, dim, in_c));
  b2 = params.add(prefix + ".fc2.b", Tensor::zeros({dim}));
}

Tensor ProjectionHead::forward(const Tensor& features) const {
  Tensor pooled = global_avg_pool(features);                    // {N, C}
  Tensor z = linear(relu(linear(pooled, w1, b1)), w2, b2);      // {N, D}
  Tensor norm = sqrt(scalar_add(sum_axes(mul(z, z), {1}, true), real(1e-12)));
  return div(z, norm);
}

}  // namespace wdualmine
