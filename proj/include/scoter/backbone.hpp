#pragma once

// SPDX-License-Identifier: Apache-2.0

// Compact causal self-attention sequential recommender. Emits per-position
// sequence states e_seq and dot-product scores over the full catalog
// (dense ranking stands in for generative decoding; the fusion interface
// over e_seq is identical either way).

#include <cstdint>

#include "scoter/checkpoint.hpp"
#include "scoter/datasets.hpp"
#include "scoter/tensor.hpp"

namespace scoter::backbone {

struct BackboneConfig {
  int vocab_size = 0;  // |I|+1 including the pad row 0
  int d_model = 128;
  int n_heads = 6;
  int head_dim = 64;  // per-head width; inner dim = n_heads * head_dim
  int n_layers = 4;
  int mlp_hidden = 1024;
  double dropout = 0.1;
  int seq_len = datasets::kSeqLen;
};

class Backbone {
 public:
  /// Registers parameters under "backbone." in the store; tables and
  /// projections init to N(0, 0.02), norms to gamma=1/beta=0.
  Backbone(const BackboneConfig& config, numerics::ParamStore& params, Rng& init_rng);

  /// Wraps an already-populated store (checkpoint load path).
  static Backbone attach(const BackboneConfig& config, numerics::ParamStore& params);

  const BackboneConfig& config() const { return config_; }

  /// Per-position encoder states [T, d_model]. Attention is causal and pad
  /// positions are masked out as keys (a pad query still sees itself so its
  /// softmax row stays defined). Dropout fires only when training.
  numerics::Tensor encode_sequence(const datasets::UserSequence& seq,
                                   bool training = false,
                                   Rng* dropout_rng = nullptr) const;

  /// Catalog logits for a final state [d_model]; entry i scores item index
  /// i+1 (the pad row is excluded).
  numerics::Tensor score_items(const numerics::Tensor& final_state) const;

  /// Cross-entropy of score_items logits against a non-pad target index.
  numerics::Tensor rec_loss(const numerics::Tensor& logits, int target_item) const;

  /// The item embedding table [vocab, d_model] (shared with fusion's
  /// InfoNCE targets).
  numerics::Tensor& item_table() const;

 private:
  Backbone(const BackboneConfig& config, numerics::ParamStore& params, bool attach);
  numerics::Tensor attention_mask(const datasets::UserSequence& seq) const;

  BackboneConfig config_;
  numerics::ParamStore* params_;
};

}  // namespace scoter::backbone
