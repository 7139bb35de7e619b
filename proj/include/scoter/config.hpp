#pragma once

// SPDX-License-Identifier: Apache-2.0

// One declarative JSON config drives every subcommand. Parsing is strict:
// unknown keys anywhere in the document are rejected, and the seed is
// mandatory. Hyperparameters default to the reference setup (d_item 128,
// 6 heads of width 64, 4 layers, MLP 1024, dropout 0.1, T=20; Adam lr
// 2e-4, weight decay 5e-5, 200 epochs with patience 20, batch 256,
// lambda 0.1, tau 0.07).

#include <cstdint>
#include <string>

#include "scoter/backbone.hpp"
#include "scoter/datasets.hpp"
#include "scoter/fusion.hpp"
#include "scoter/theory.hpp"

namespace scoter::config {

struct PathsConfig {
  std::string raw_data;      // interaction dump (see raw_format)
  std::string raw_format = "canonical";  // canonical | amazon | yelp | synth
  std::string meta_jsonl;    // optional item metadata
  std::string fixtures;      // provider fixture file (fixture provider)
  std::string cache_dir;     // empty disables response caching
  std::string out_dir = "out";
  std::string store;         // defaults to <out_dir>/store.bin
  std::string checkpoints;   // defaults to <out_dir>
  std::string reports;       // defaults to <out_dir>

  std::string store_path() const;
  std::string checkpoint_path(const std::string& variant) const;
  std::string reports_dir() const;
};

struct ProviderConfig {
  std::string kind = "fixture";  // fixture | http
  std::string base_url;          // http provider; $PROVIDER_URL fallback
  std::string model_tag = "http";
  int max_attempts = 3;
  int backoff_ms = 500;
  bool cache = true;
};

struct GvmConfig {
  double gamma = 0.95;
  int chains_per_user = 5;
  int eval_users = 200;
  int k_min = 3;
  int k_max = 10;
  int exemplars = 10;
  double theta_match = 0.6;
  int min_cluster_size = 2;
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 2048;
};

struct SynthConfig {
  int n_users = 100;
  int n_items = 50;
  int n_topics = 5;
  double concentration = 0.8;
  int min_len = 5;
  int max_len = 12;
};

struct TheoryConfig {
  int dpi_trials = 1000;
  int lower_bound_instances = 500;
  int lower_bound_k = 3;
  int collision_sequences = 40;
  theory::OrderTaskSpec order;          // seed filled from the run seed
  theory::OrderTrainParams order_train;
  int order_seeds = 5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string variant = "full";
  PathsConfig paths;
  ProviderConfig provider;
  GvmConfig gvm;
  backbone::BackboneConfig model;     // vocab_size filled from data
  fusion::TrainConfig training;       // backbone/fusion blocks filled later
  fusion::NceStage nce_stage = fusion::NceStage::kPositional;
  bool adam_coupled_decay = false;
  bool eval_filter_history = false;  // drop already-seen items from rankings
  SynthConfig synth;
  TheoryConfig theory_config;

  /// Canonical JSON of the effective config (sorted keys); hashed into
  /// every manifest.
  std::string canonical_json() const;
};

/// Parses and validates. Unknown keys, missing seed, or invalid values
/// throw ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

}  // namespace scoter::config
