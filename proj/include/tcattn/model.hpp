#pragma once

// Tiny decoder used by the experiment harness: token embedding, a stack of
// residual blocks (multi-head attention then a GELU feed-forward), and a
// linear classifier on the last token. Parameters live in one flat vector;
// gradients are computed by hand.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tcattn/attention.hpp"
#include "tcattn/tasks.hpp"

namespace tcattn {

struct ModelConfig {
  std::size_t layers = 1;
  std::size_t num_heads = 2;
  std::size_t d_head = 8;
  std::size_t ffn_mult = 2;
  std::size_t vocab = vocab::kSize;
  std::size_t num_classes = 4;

  std::size_t embed_dim() const { return num_heads * d_head; }
  void validate() const;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig defaults = {});

struct ForwardResult {
  Real loss = 0;
  int predicted = 0;
};

class TinyModel {
 public:
  /// Every weight matrix is drawn uniformly from ±1/sqrt(fan_in); biases start at 0.
  TinyModel(const ModelConfig& config, std::shared_ptr<const AttentionPlan> plan,
            std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const AttentionPlan& plan() const { return *plan_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<Real> params() { return params_; }
  std::span<const Real> params() const { return params_; }

  /// Cross-entropy of the last-token classifier against ex.label.
  ForwardResult forward(const Example& ex) const;
  /// forward() plus d(loss)/d(params) accumulated into grad.
  ForwardResult forward_backward(const Example& ex, std::span<Real> grad) const;

 private:
  struct Block {
    std::size_t wq, wk, wv, wo, w1, b1, w2, b2;
  };
  struct Cache;

  ForwardResult run(const Example& ex, Cache* cache) const;
  void backward(const Example& ex, const Cache& cache, std::span<Real> grad) const;

  ModelConfig config_;
  std::shared_ptr<const AttentionPlan> plan_;
  std::vector<Real> params_;
  std::size_t embedding_ = 0;
  std::vector<Block> blocks_;
  std::size_t readout_w_ = 0;
  std::size_t readout_b_ = 0;
};

}  // namespace tcattn
