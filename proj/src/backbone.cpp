// SPDX-License-Identifier: Apache-2.0

#include "scoter/backbone.hpp"

#include <string>

#include "scoter/common.hpp"

namespace scoter::backbone {

using namespace scoter::numerics;

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskOff = -1e30;

std::string layer_name(int layer, const char* suffix) {
  return "backbone.l" + std::to_string(layer) + "." + suffix;
}

}  // namespace

Backbone::Backbone(const BackboneConfig& config, numerics::ParamStore& params,
                   Rng& init_rng)
    : config_(config), params_(&params) {
  if (config_.vocab_size < 2) throw ConfigError("backbone: vocab_size must be >= 2");
  const int d = config_.d_model;
  const int inner = config_.n_heads * config_.head_dim;

  params.create_randn("backbone.items", {config_.vocab_size, d}, init_rng, kInitStd);
  params.create_randn("backbone.pos", {config_.seq_len, d}, init_rng, kInitStd);
  for (int l = 0; l < config_.n_layers; ++l) {
    params.create(layer_name(l, "ln1.gamma"), {d}, std::vector<double>(d, 1.0));
    params.create(layer_name(l, "ln1.beta"), {d});
    params.create_randn(layer_name(l, "wq"), {d, inner}, init_rng, kInitStd);
    params.create_randn(layer_name(l, "wk"), {d, inner}, init_rng, kInitStd);
    params.create_randn(layer_name(l, "wv"), {d, inner}, init_rng, kInitStd);
    params.create_randn(layer_name(l, "wo"), {inner, d}, init_rng, kInitStd);
    params.create(layer_name(l, "ln2.gamma"), {d}, std::vector<double>(d, 1.0));
    params.create(layer_name(l, "ln2.beta"), {d});
    params.create_randn(layer_name(l, "mlp.w1"), {d, config_.mlp_hidden}, init_rng, kInitStd);
    params.create(layer_name(l, "mlp.b1"), {config_.mlp_hidden});
    params.create_randn(layer_name(l, "mlp.w2"), {config_.mlp_hidden, d}, init_rng, kInitStd);
    params.create(layer_name(l, "mlp.b2"), {d});
  }
  params.create("backbone.final.gamma", {d}, std::vector<double>(d, 1.0));
  params.create("backbone.final.beta", {d});
}

Backbone::Backbone(const BackboneConfig& config, numerics::ParamStore& params, bool)
    : config_(config), params_(&params) {}

Backbone Backbone::attach(const BackboneConfig& config, numerics::ParamStore& params) {
  if (!params.contains("backbone.items")) {
    throw NotFoundError("backbone: store carries no backbone parameters");
  }
  return Backbone(config, params, true);
}

Tensor& Backbone::item_table() const { return params_->get("backbone.items"); }

Tensor Backbone::attention_mask(const datasets::UserSequence& seq) const {
  const int t = config_.seq_len;
  std::vector<double> mask(static_cast<std::size_t>(t) * t, kMaskOff);
  for (int q = 0; q < t; ++q) {
    for (int k = 0; k <= q; ++k) {
      const bool key_is_pad = seq.items[static_cast<std::size_t>(k)] == datasets::kPadIndex;
      if (!key_is_pad || k == q) {
        mask[static_cast<std::size_t>(q) * t + k] = 0.0;
      }
    }
  }
  return Tensor::from_data({t, t}, std::move(mask));
}

Tensor Backbone::encode_sequence(const datasets::UserSequence& seq, bool training,
                                 Rng* dropout_rng) const {
  if (static_cast<int>(seq.items.size()) != config_.seq_len) {
    throw ShapeError("encode_sequence: sequence not normalized to T=" +
                     std::to_string(config_.seq_len));
  }
  if (training && config_.dropout > 0.0 && dropout_rng == nullptr) {
    throw ScoterError("encode_sequence: training with dropout needs an rng");
  }
  const int heads = config_.n_heads;
  const int hd = config_.head_dim;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Tensor x = add(gather_rows(params_->get("backbone.items"), seq.items),
                 params_->get("backbone.pos"));
  Tensor mask = attention_mask(seq);

  auto maybe_dropout = [&](const Tensor& v) {
    return training ? dropout(v, config_.dropout, *dropout_rng, true) : v;
  };

  for (int l = 0; l < config_.n_layers; ++l) {
    // pre-norm attention block
    Tensor normed = layer_norm(x, params_->get(layer_name(l, "ln1.gamma")),
                               params_->get(layer_name(l, "ln1.beta")));
    Tensor q = matmul(normed, params_->get(layer_name(l, "wq")));
    Tensor k = matmul(normed, params_->get(layer_name(l, "wk")));
    Tensor v = matmul(normed, params_->get(layer_name(l, "wv")));

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
      Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
      Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
      Tensor scores = add(scale(matmul(qh, transpose(kh)), attn_scale), mask);
      Tensor probs = maybe_dropout(softmax(scores));
      head_outputs.push_back(matmul(probs, vh));
    }
    Tensor attended = matmul(concat_last_axis(head_outputs),
                             params_->get(layer_name(l, "wo")));
    x = add(x, maybe_dropout(attended));

    // pre-norm MLP block
    Tensor normed2 = layer_norm(x, params_->get(layer_name(l, "ln2.gamma")),
                                params_->get(layer_name(l, "ln2.beta")));
    Tensor hidden = relu(add_rowvec(matmul(normed2, params_->get(layer_name(l, "mlp.w1"))),
                                    params_->get(layer_name(l, "mlp.b1"))));
    Tensor mlp_out = add_rowvec(matmul(hidden, params_->get(layer_name(l, "mlp.w2"))),
                                params_->get(layer_name(l, "mlp.b2")));
    x = add(x, maybe_dropout(mlp_out));
  }
  return layer_norm(x, params_->get("backbone.final.gamma"),
                    params_->get("backbone.final.beta"));
}

Tensor Backbone::score_items(const Tensor& final_state) const {
  if (final_state.rank() != 1 || final_state.dim(0) != config_.d_model) {
    throw ShapeError("score_items: final state must be rank-1 [d_model]");
  }
  // [V, d] x [d, 1] -> [V, 1]; drop the pad row
  Tensor col = reshape(final_state, {config_.d_model, 1});
  Tensor logits_full = matmul(params_->get("backbone.items"), col);
  Tensor as_row = reshape(logits_full, {1, config_.vocab_size});
  return row(slice_cols(as_row, 1, config_.vocab_size), 0);  // [V-1]
}

Tensor Backbone::rec_loss(const Tensor& logits, int target_item) const {
  if (target_item == datasets::kPadIndex) {
    throw ScoterError("rec_loss: target is the pad index");
  }
  if (target_item < 1 || target_item >= config_.vocab_size) {
    throw ShapeError("rec_loss: target outside vocabulary");
  }
  return cross_entropy_with_logits(logits, target_item - 1);
}

}  // namespace scoter::backbone
