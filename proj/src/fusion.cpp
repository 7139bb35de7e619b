// SPDX-License-Identifier: Apache-2.0

#include "scoter/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "scoter/common.hpp"
#include "scoter/optimizer.hpp"

namespace scoter::fusion {

using namespace scoter::numerics;

namespace {
constexpr double kInitStd = 0.02;
}

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_position") return Variant::kNoPosition;
  if (name == "no_contrastive") return Variant::kNoContrastive;
  if (name == "mean_pooled") return Variant::kMeanPooled;
  if (name == "backbone_only") return Variant::kBackboneOnly;
  throw ConfigError("unknown variant \"" + name + "\"");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kNoPosition: return "no_position";
    case Variant::kNoContrastive: return "no_contrastive";
    case Variant::kMeanPooled: return "mean_pooled";
    case Variant::kBackboneOnly: return "backbone_only";
  }
  throw ConfigError("unknown variant enum");
}

int FusionConfig::effective_head_dim() const {
  if (head_dim > 0) return head_dim;
  if (d_model % n_heads != 0) {
    throw ConfigError("fusion: d_model " + std::to_string(d_model) +
                      " not divisible by " + std::to_string(n_heads) +
                      " heads; set head_dim explicitly");
  }
  return d_model / n_heads;
}

// ---------------------------------------------------------------------------
// FusionLayer
// ---------------------------------------------------------------------------

FusionLayer::FusionLayer(const FusionConfig& config, numerics::ParamStore& params,
                         Rng& init_rng)
    : config_(config), params_(&params) {
  if (config_.k_steps < 1) throw ConfigError("fusion: k_steps must be >= 1");
  if (config_.embed_dim < 1) throw ConfigError("fusion: embed_dim must be >= 1");
  const int d = config_.d_model;
  const int inner = config_.n_heads * config_.effective_head_dim();

  params.create_randn("fusion.proj.w", {config_.embed_dim, d}, init_rng, kInitStd);
  params.create("fusion.proj.b", {d});
  params.create("fusion.proj.gamma", {d}, std::vector<double>(d, 1.0));
  params.create("fusion.proj.beta", {d});
  params.create_randn("fusion.pos", {config_.k_steps, d}, init_rng, kInitStd);
  params.create_randn("fusion.attn.wq", {d, inner}, init_rng, kInitStd);
  params.create_randn("fusion.attn.wk", {d, inner}, init_rng, kInitStd);
  params.create_randn("fusion.attn.wv", {d, inner}, init_rng, kInitStd);
  params.create_randn("fusion.attn.wo", {inner, d}, init_rng, kInitStd);
  params.create_randn("fusion.gate.w", {2 * d, d}, init_rng, kInitStd);
  params.create("fusion.gate.b", {d});
  params.create("fusion.out.gamma", {d}, std::vector<double>(d, 1.0));
  params.create("fusion.out.beta", {d});
}

FusionLayer::FusionLayer(const FusionConfig& config, numerics::ParamStore& params, bool)
    : config_(config), params_(&params) {}

FusionLayer FusionLayer::attach(const FusionConfig& config, numerics::ParamStore& params) {
  if (!params.contains("fusion.proj.w")) {
    throw NotFoundError("fusion: store carries no fusion parameters");
  }
  return FusionLayer(config, params, true);
}

Tensor FusionLayer::adapt(const Tensor& h) const {
  if (h.rank() != 2 || h.dim(1) != config_.embed_dim) {
    throw ShapeError("adapt: H must be [K, " + std::to_string(config_.embed_dim) +
                     "], got wrong trailing dim");
  }
  Tensor projected = add_rowvec(matmul(h, params_->get("fusion.proj.w")),
                                params_->get("fusion.proj.b"));
  return layer_norm(projected, params_->get("fusion.proj.gamma"),
                    params_->get("fusion.proj.beta"));
}

Tensor FusionLayer::add_positions(const Tensor& z) const {
  const Tensor& pos = params_->get("fusion.pos");
  if (z.rank() != 2 || z.dim(0) != pos.dim(0) || z.dim(1) != pos.dim(1)) {
    throw ShapeError("add_positions: Z/P shape mismatch");
  }
  return add(z, pos);
}

Tensor FusionLayer::cross_attend(const Tensor& e_seq, const Tensor& z_pos) const {
  const int d = config_.d_model;
  if (e_seq.rank() != 2 || e_seq.dim(1) != d) {
    throw ShapeError("cross_attend: queries must be [T, d_model]");
  }
  if (z_pos.rank() != 2 || z_pos.dim(1) != d) {
    throw ShapeError("cross_attend: keys/values must be [K, d_model]");
  }
  const int heads = config_.n_heads;
  const int hd = config_.effective_head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor q = matmul(e_seq, params_->get("fusion.attn.wq"));
  Tensor k = matmul(z_pos, params_->get("fusion.attn.wk"));
  Tensor v = matmul(z_pos, params_->get("fusion.attn.wv"));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
    Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
    Tensor probs = softmax(scale(matmul(qh, transpose(kh)), attn_scale));
    head_outputs.push_back(matmul(probs, vh));
  }
  return matmul(concat_last_axis(head_outputs), params_->get("fusion.attn.wo"));
}

Tensor FusionLayer::gated_fuse(const Tensor& e_seq, const Tensor& attended) const {
  if (e_seq.shape() != attended.shape()) {
    throw ShapeError("gated_fuse: e_seq/attended shape mismatch");
  }
  Tensor gate_in = concat_last_axis({e_seq, attended});
  Tensor g = sigmoid(add_rowvec(matmul(gate_in, params_->get("fusion.gate.w")),
                                params_->get("fusion.gate.b")));
  Tensor ones = Tensor::full(g.shape(), 1.0);
  Tensor blended = add(mul(g, e_seq), mul(sub(ones, g), attended));
  return layer_norm(blended, params_->get("fusion.out.gamma"),
                    params_->get("fusion.out.beta"));
}

FusionLayer::Fused FusionLayer::fuse(const Tensor& e_seq, const Tensor& h,
                                     bool zero_positions) const {
  Tensor z = adapt(h);
  Tensor z_pos = zero_positions ? z : add_positions(z);
  Fused out;
  out.e_fused = gated_fuse(e_seq, cross_attend(e_seq, z_pos));
  const Tensor& stage = config_.nce_stage == NceStage::kAdapted ? z : z_pos;
  out.z_last = row(stage, stage.dim(0) - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor info_nce(const Tensor& z_k, const Tensor& batch_item_embs, int target_row,
                double tau) {
  if (tau <= 0.0) throw ScoterError("info_nce: tau must be > 0");
  if (batch_item_embs.rank() != 2 || batch_item_embs.dim(0) < 2) {
    throw ShapeError("info_nce: need [B, d] with B >= 2");
  }
  const int b = batch_item_embs.dim(0);
  if (target_row < 0 || target_row >= b) {
    throw ShapeError("info_nce: target row outside batch");
  }
  std::vector<Tensor> sims;
  sims.reserve(static_cast<std::size_t>(b));
  for (int j = 0; j < b; ++j) {
    sims.push_back(scale(cosine_similarity(z_k, row(batch_item_embs, j)), 1.0 / tau));
  }
  return cross_entropy_with_logits(stack_scalars(sims), target_row);
}

Tensor total_loss(const Tensor& rec, const Tensor& nce, double lambda) {
  if (lambda < 0.0) throw ScoterError("total_loss: lambda must be >= 0");
  if (lambda == 0.0) return rec;
  return add(rec, scale(nce, lambda));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Model::Model(Variant variant, const backbone::BackboneConfig& backbone_config,
             FusionConfig fusion_config, numerics::ParamStore& params, Rng& init_rng)
    : variant_(variant),
      backbone_(backbone_config, params, init_rng),
      params_(&params) {
  if (variant_ != Variant::kBackboneOnly) {
    fusion_config.d_model = backbone_config.d_model;
    if (variant_ == Variant::kMeanPooled) fusion_config.k_steps = 1;
    fusion_.emplace(fusion_config, params, init_rng);
    if (variant_ == Variant::kNoPosition) {
      params.get("fusion.pos").mutable_data().assign(
          params.get("fusion.pos").size(), 0.0);
    }
  }
}

Model::Model(Variant variant, const backbone::Backbone& bb,
             std::optional<FusionLayer> fl, numerics::ParamStore& params)
    : variant_(variant), backbone_(bb), fusion_(std::move(fl)), params_(&params) {}

Model Model::attach(Variant variant, const backbone::BackboneConfig& backbone_config,
                    FusionConfig fusion_config, numerics::ParamStore& params) {
  auto bb = backbone::Backbone::attach(backbone_config, params);
  std::optional<FusionLayer> fl;
  if (variant != Variant::kBackboneOnly) {
    fusion_config.d_model = backbone_config.d_model;
    if (variant == Variant::kMeanPooled) fusion_config.k_steps = 1;
    fl = FusionLayer::attach(fusion_config, params);
  }
  return Model(variant, bb, std::move(fl), params);
}

Tensor Model::matrix_from(const distill::StepEmbeddingMatrix& h) {
  std::vector<double> data(h.rows.begin(), h.rows.end());  // f32 -> f64 upcast
  return Tensor::from_data({h.k, h.d}, std::move(data));
}

Model::Forward Model::forward(const datasets::UserSequence& seq,
                              const std::optional<distill::StepEmbeddingMatrix>& h,
                              bool training, Rng* dropout_rng) const {
  Forward out;
  Tensor e_seq = backbone_.encode_sequence(seq, training, dropout_rng);
  if (variant_ == Variant::kBackboneOnly) {
    out.states = e_seq;
    return out;
  }
  if (!h) throw ScoterError("forward: fusion variant needs a step matrix");
  Tensor h_mat = matrix_from(*h);
  if (variant_ == Variant::kMeanPooled) {
    h_mat = reshape(mean_rows(h_mat), {1, h->d});
  }
  auto fused = fusion_->fuse(e_seq, h_mat, variant_ == Variant::kNoPosition);
  out.states = fused.e_fused;
  out.z_last = fused.z_last;
  return out;
}

std::vector<double> Model::score_catalog(
    const datasets::UserSequence& input,
    const std::optional<distill::StepEmbeddingMatrix>& h) const {
  NoGradGuard no_grad;
  auto fw = forward(input, h, false, nullptr);
  auto logits = backbone_.score_items(row(fw.states, input.items.size() - 1));
  return logits.data();
}

std::vector<Tensor> Model::trainable(numerics::ParamStore& params) const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : params.named()) {
    if (variant_ == Variant::kNoPosition && name == "fusion.pos") continue;
    out.push_back(tensor);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::optional<distill::StepEmbeddingMatrix> matrix_for(
    const distill::EmbeddingStore* store, Variant variant, const std::string& user) {
  if (variant == Variant::kBackboneOnly) return std::nullopt;
  return store->get(user);
}

}  // namespace

eval::EvalReport evaluate_split(const Model& model,
                                const distill::EmbeddingStore* store,
                                const std::vector<datasets::UserSequence>& rows,
                                int catalog_size, const std::vector<int>& k_values,
                                bool filter_history) {
  auto score_fn = [&](const datasets::UserSequence& input,
                      const std::string& user) {
    return model.score_catalog(input, matrix_for(store, model.variant(), user));
  };
  auto report = eval::evaluate(score_fn, rows, catalog_size, k_values, filter_history);
  report.variant = to_string(model.variant());
  return report;
}

TrainResult train(const datasets::SplitBundle& bundle,
                  const distill::EmbeddingStore* store, const TrainConfig& config,
                  numerics::ParamStore& params) {
  const bool uses_store = config.variant != Variant::kBackboneOnly;
  if (uses_store) {
    if (store == nullptr) throw ScoterError("train: fusion variant needs a store");
    std::vector<std::string> users;
    for (const auto& s : bundle.train) users.push_back(s.user_id);
    for (const auto& s : bundle.valid) users.push_back(s.user_id);
    for (const auto& s : bundle.test) users.push_back(s.user_id);
    auto missing = store->missing_users(users);
    if (!missing.empty()) {
      std::string msg = "train: store missing matrices for " +
                        std::to_string(missing.size()) + " user(s):";
      for (std::size_t i = 0; i < missing.size() && i < 8; ++i) msg += " " + missing[i];
      throw ScoterError(msg);
    }
  }

  Rng root(config.seed);
  Rng init_rng = root.fork(1);
  Rng shuffle_rng = root.fork(2);
  Rng dropout_rng = root.fork(3);

  FusionConfig fusion_config = config.fusion_config;
  if (uses_store) {
    fusion_config.k_steps = store->k();
    fusion_config.embed_dim = store->d();
  }
  Model model(config.variant, config.backbone_config, fusion_config, params, init_rng);

  const double lambda = config.variant == Variant::kNoContrastive ? 0.0 : config.lambda;
  AdamConfig adam_config;
  adam_config.lr = config.lr;
  adam_config.weight_decay = config.weight_decay;
  adam_config.coupled_decay = config.coupled_decay;
  Adam optimizer(adam_config);
  auto trainable = model.trainable(params);

  const int t_len = config.backbone_config.seq_len;
  const int catalog = config.backbone_config.vocab_size - 1;

  std::ofstream metrics_csv;
  if (!config.metrics_csv_path.empty()) {
    metrics_csv.open(config.metrics_csv_path, std::ios::trunc);
    metrics_csv << "epoch,split,recall@5,recall@10,ndcg@5,ndcg@10,loss\n";
  }

  TrainResult result;
  result.best_valid_recall10 = -1.0;
  std::map<std::string, std::vector<double>> best_snapshot;

  std::vector<int> order(bundle.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int loss_terms = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));

      std::vector<Tensor> rec_losses;
      std::vector<Tensor> z_rows;
      std::vector<int> nce_targets;
      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& seq = bundle.train[static_cast<std::size_t>(order[bi])];
        auto real = seq.real_items();
        if (real.size() < 2) continue;  // no next-item pair in the train region

        auto h = matrix_for(store, config.variant, seq.user_id);
        // input = region minus its last item; aligned targets are the next
        // items, so position t_len-1 is always supervised
        std::vector<int> input_items(real.begin(), real.end() - 1);
        auto input = datasets::normalize_sequence(seq.user_id, input_items, t_len);
        auto fw = model.forward(input, h, true, &dropout_rng);

        std::vector<Tensor> position_losses;
        const int n_inputs = static_cast<int>(input_items.size());
        for (int pos = 0; pos < n_inputs; ++pos) {
          const int state_pos = t_len - n_inputs + pos;
          auto logits = model.backbone_model().score_items(row(fw.states, state_pos));
          position_losses.push_back(
              model.backbone_model().rec_loss(logits, real[static_cast<std::size_t>(pos) + 1]));
        }
        rec_losses.push_back(mean(stack_scalars(position_losses)));
        if (fw.z_last && lambda > 0.0) {
          z_rows.push_back(*fw.z_last);
          nce_targets.push_back(real.back());  // the user's final train target
        }
      }
      if (rec_losses.empty()) continue;

      Tensor loss = mean(stack_scalars(rec_losses));
      if (z_rows.size() >= 2) {
        Tensor batch_embs =
            gather_rows(model.backbone_model().item_table(), nce_targets);
        std::vector<Tensor> nce_losses;
        for (std::size_t i = 0; i < z_rows.size(); ++i) {
          nce_losses.push_back(info_nce(z_rows[i], batch_embs,
                                        static_cast<int>(i), config.tau));
        }
        loss = total_loss(loss, mean(stack_scalars(nce_losses)), lambda);
      }
      epoch_loss += loss.value();
      ++loss_terms;
      backward(loss);
      optimizer.step(trainable);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_terms > 0 ? epoch_loss / loss_terms : 0.0;
    em.valid = evaluate_split(model, store, bundle.valid, catalog, {5, 10});
    result.history.push_back(em);

    if (metrics_csv.is_open()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d,valid,%.6f,%.6f,%.6f,%.6f,%.6f\n", epoch,
                    em.valid.recall.at(5), em.valid.recall.at(10),
                    em.valid.ndcg.at(5), em.valid.ndcg.at(10), em.train_loss);
      metrics_csv << buf;
    }

    const double recall10 = em.valid.recall.at(10);
    if (recall10 > result.best_valid_recall10) {
      result.best_valid_recall10 = recall10;
      result.best_epoch = epoch;
      best_snapshot.clear();
      for (const auto& [name, tensor] : params.named()) {
        best_snapshot[name] = tensor.data();
      }
    } else if (epoch - result.best_epoch >= config.patience) {
      break;  // early stop
    }
  }

  for (auto& [name, data] : best_snapshot) {
    params.get(name).mutable_data() = data;
  }
  return result;
}

}  // namespace scoter::fusion
