#pragma once

// SPDX-License-Identifier: Apache-2.0

// Order-preserving reasoning fusion: adapter projection, learnable step
// positions, cross-attention (sequence states as queries, reasoning steps
// as keys/values), adaptive gating, InfoNCE alignment, and the joint
// training loop with the ablation-variant wiring.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scoter/backbone.hpp"
#include "scoter/checkpoint.hpp"
#include "scoter/datasets.hpp"
#include "scoter/distill.hpp"
#include "scoter/eval.hpp"
#include "scoter/tensor.hpp"

namespace scoter::fusion {

enum class Variant { kFull, kNoPosition, kNoContrastive, kMeanPooled, kBackboneOnly };
Variant variant_from_string(const std::string& name);
std::string to_string(Variant variant);

/// Which representation feeds InfoNCE's z_K: the adapter output or the
/// position-augmented output (the stage the model actually consumes).
enum class NceStage { kAdapted, kPositional };

struct FusionConfig {
  int k_steps = 0;    // template K (1 after mean pooling)
  int embed_dim = 0;  // D, read from the store
  int d_model = 128;
  int n_heads = 6;
  /// Per-head width; 0 derives d_model/n_heads and requires divisibility.
  int head_dim = 0;
  NceStage nce_stage = NceStage::kPositional;

  int effective_head_dim() const;
};

/// The fusion parameter block and its forward ops: adapter, positions,
/// cross-attention, gating. Parameters live under "fusion." in the store.
class FusionLayer {
 public:
  FusionLayer(const FusionConfig& config, numerics::ParamStore& params, Rng& init_rng);
  static FusionLayer attach(const FusionConfig& config, numerics::ParamStore& params);

  const FusionConfig& config() const { return config_; }

  /// z_j = LayerNorm(W_proj e_j + b_proj) per row of H [K, D].
  numerics::Tensor adapt(const numerics::Tensor& h) const;
  /// z_j + P_j.
  numerics::Tensor add_positions(const numerics::Tensor& z) const;
  /// Multi-head scaled dot-product attention; queries from e_seq [T, d],
  /// keys/values from z_pos [K, d]; output projected back to d.
  numerics::Tensor cross_attend(const numerics::Tensor& e_seq,
                                const numerics::Tensor& z_pos) const;
  /// g = sigmoid([e_seq; A] W_g + b_g); LayerNorm(g*e_seq + (1-g)*A).
  numerics::Tensor gated_fuse(const numerics::Tensor& e_seq,
                              const numerics::Tensor& attended) const;

  struct Fused {
    numerics::Tensor e_fused;  // [T, d]
    numerics::Tensor z_last;   // [d], the z_K row at the configured stage
  };
  /// Full path H -> E_fused; `zero_positions` skips the position add.
  Fused fuse(const numerics::Tensor& e_seq, const numerics::Tensor& h,
             bool zero_positions = false) const;

 private:
  FusionLayer(const FusionConfig& config, numerics::ParamStore& params, bool attach);
  FusionConfig config_;
  numerics::ParamStore* params_;
};

/// InfoNCE with in-batch negatives: -log softmax(cos(z_K, v_j)/tau)[target].
/// batch_item_embs is [B, d] with B >= 2; rows must have nonzero norm.
numerics::Tensor info_nce(const numerics::Tensor& z_k,
                          const numerics::Tensor& batch_item_embs,
                          int target_row, double tau);

/// L_total = L_rec + lambda * L_nce.
numerics::Tensor total_loss(const numerics::Tensor& rec, const numerics::Tensor& nce,
                            double lambda);

// ---------------------------------------------------------------------------
// Model assembly + training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 5e-5;
  bool coupled_decay = false;  // false = AdamW-style decoupled decay
  int max_epochs = 200;
  int patience = 20;      // early stop on validation recall@10
  int batch_size = 256;
  double lambda = 0.1;
  double tau = 0.07;
  std::uint64_t seed = 1;
  Variant variant = Variant::kFull;
  backbone::BackboneConfig backbone_config;
  FusionConfig fusion_config;  // k/embed_dim filled from the store
  std::string metrics_csv_path;  // per-epoch CSV when nonempty
};

/// Backbone + fusion wired per ablation variant. Owns nothing; parameters
/// live in the caller's store.
class Model {
 public:
  /// Fresh parameters. The backbone always initializes first so that
  /// backbone-only training is bit-identical to the standalone backbone
  /// under the same seed.
  Model(Variant variant, const backbone::BackboneConfig& backbone_config,
        FusionConfig fusion_config, numerics::ParamStore& params, Rng& init_rng);
  static Model attach(Variant variant, const backbone::BackboneConfig& backbone_config,
                      FusionConfig fusion_config, numerics::ParamStore& params);

  Variant variant() const { return variant_; }
  const backbone::Backbone& backbone_model() const { return backbone_; }

  struct Forward {
    numerics::Tensor states;             // [T, d] (fused unless backbone-only)
    std::optional<numerics::Tensor> z_last;  // absent for backbone-only
  };
  /// `h` may be empty for the backbone-only variant. Mean pooling collapses
  /// h to its row mean before the fusion path.
  Forward forward(const datasets::UserSequence& seq,
                  const std::optional<distill::StepEmbeddingMatrix>& h,
                  bool training = false, Rng* dropout_rng = nullptr) const;

  /// Full-catalog scores from the fused state at the final position.
  std::vector<double> score_catalog(const datasets::UserSequence& input,
                                    const std::optional<distill::StepEmbeddingMatrix>& h) const;

  /// Parameters updated by the optimizer (the positional table is excluded
  /// and pinned at zero for the no-position variant).
  std::vector<numerics::Tensor> trainable(numerics::ParamStore& params) const;

 private:
  Model(Variant variant, const backbone::Backbone& bb, std::optional<FusionLayer> fl,
        numerics::ParamStore& params);
  static numerics::Tensor matrix_from(const distill::StepEmbeddingMatrix& h);

  Variant variant_;
  backbone::Backbone backbone_;
  std::optional<FusionLayer> fusion_;
  numerics::ParamStore* params_;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  eval::EvalReport valid;
};

struct TrainResult {
  int best_epoch = 0;
  double best_valid_recall10 = 0.0;
  std::vector<EpochMetrics> history;
};

/// Trains on the bundle's train rows, early-stops on validation recall@10,
/// and leaves the best parameters in `params`. The store is required for
/// every variant except backbone-only; coverage gaps fail the pre-flight.
TrainResult train(const datasets::SplitBundle& bundle,
                  const distill::EmbeddingStore* store, const TrainConfig& config,
                  numerics::ParamStore& params);

/// Evaluation report for one split ("valid" or "test" rows).
eval::EvalReport evaluate_split(const Model& model,
                                const distill::EmbeddingStore* store,
                                const std::vector<datasets::UserSequence>& rows,
                                int catalog_size,
                                const std::vector<int>& k_values = {5, 10, 20},
                                bool filter_history = false);

}  // namespace scoter::fusion
