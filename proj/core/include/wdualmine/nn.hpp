#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "wdualmine/tensor.hpp"

namespace wdualmine {

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

// Named parameter store. Insertion order is the serialization order, so
// checkpoints are stable across runs given the same construction path.
class ModelParams {
 public:
  // Registers and returns the tensor (trainable entries get a grad buffer).
  Tensor add(const std::string& name, Tensor t, bool trainable = true);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  int64_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Bias-corrected Adam. Learning rate lives here; beta/eps are the usual
// defaults. step() also zeroes the gradients it consumed.
class AdamState {
 public:
  explicit AdamState(double lr) : lr_(lr) {}

  void step(ModelParams& params);
  int64_t t() const { return t_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  // checkpoint access
  std::unordered_map<std::string, std::vector<real>>& moment1() { return m_; }
  std::unordered_map<std::string, std::vector<real>>& moment2() { return v_; }
  void set_t(int64_t t) { t_ = t; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  double lr_;
  int64_t t_ = 0;
  std::unordered_map<std::string, std::vector<real>> m_, v_;
};

inline void adam_step(ModelParams& params, AdamState& state) { state.step(params); }

// Kaiming-uniform fan-in init (bound sqrt(6/fan_in)), zero biases.
Tensor kaiming_conv_weight(SplitMix64& rng, int64_t out_c, int64_t in_c,
                           int64_t kh, int64_t kw);
Tensor kaiming_linear_weight(SplitMix64& rng, int64_t out_f, int64_t in_f);

// conv3x3 -> relu -> conv3x3 residual branch around a skip; the skip is a
// 1x1 projection when channel counts differ, identity otherwise. Output is
// relu(skip + branch), same spatial size.
struct ResBlock {
  Tensor w1, b1, w2, b2;
  Tensor wp, bp;  // defined only when in_c != out_c
  int64_t in_c = 0, out_c = 0;

  ResBlock() = default;
  ResBlock(ModelParams& params, SplitMix64& rng, const std::string& prefix,
           int64_t in_c, int64_t out_c);
  Tensor forward(const Tensor& x) const;
};

// Efficient channel attention: per-channel gate from a k-tap 1-D conv over
// the pooled channel descriptor.
struct EcaBlock {
  Tensor w;  // {k}
  int64_t k = 3;

  EcaBlock() = default;
  EcaBlock(ModelParams& params, SplitMix64& rng, const std::string& prefix, int64_t k);
  Tensor forward(const Tensor& x) const;
};

// Pooled features -> two-layer MLP -> L2-normalized embedding rows.
struct ProjectionHead {
  Tensor w1, b1, w2, b2;
  int64_t in_c = 0, dim = 0;

  ProjectionHead() = default;
  ProjectionHead(ModelParams& params, SplitMix64& rng, const std::string& prefix,
                 int64_t in_c, int64_t dim);
  Tensor forward(const Tensor& features) const;  // NCHW -> {N, dim}
};

}  // namespace wdualmine
