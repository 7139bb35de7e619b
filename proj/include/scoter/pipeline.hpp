#pragma once

// SPDX-License-Identifier: Apache-2.0

// End-to-end orchestration behind the CLI: ingest -> gvm -> embed ->
// train -> evaluate -> theory, each stage reading/writing hashed
// artifacts under the configured output directory.

#include <memory>
#include <string>
#include <vector>

#include "scoter/config.hpp"
#include "scoter/eval.hpp"
#include "scoter/gvm.hpp"
#include "scoter/providers.hpp"
#include "scoter/theory.hpp"

namespace scoter::pipeline {

// artifact locations under the run's output directory
struct Artifacts {
  explicit Artifacts(const config::RunConfig& cfg);
  std::string splits, vocab, meta, chains, scores, pattern_report, template_file,
      teacher_chains, store, metrics_csv, checkpoint, eval_report, ablation_csv,
      theory_report, compare_csv;
};

/// Canonical item text used for catalog embeddings and prompt rendering.
std::string item_text(const std::string& item_id, const datasets::ItemMeta* meta);

/// Provider per config (fixture or http), wrapped in the disk cache when
/// caching is enabled.
std::shared_ptr<providers::Provider> make_provider(const config::RunConfig& cfg);

// ---------------------------------------------------------------------------
// DemoProvider: a deterministic, fully offline stand-in for the teacher
// and embedding services. Completions are synthesized from the prompt
// text itself; embeddings hash to stable unit vectors, with same-topic
// texts anchored close together so clustering has real structure. Used by
// `make-fixtures` to record a complete fixture file for a corpus.
// ---------------------------------------------------------------------------

class DemoProvider : public providers::Provider {
 public:
  explicit DemoProvider(int embed_dim = 16) : embed_dim_(embed_dim) {}
  std::string tag() const override { return "fixture"; }
  std::string generate(const providers::GenRequest& req) override;
  std::vector<providers::EmbeddingVector> embed(const std::vector<std::string>& texts) override;

 private:
  int embed_dim_;
};

/// Runs a delegate while recording every exchange; save() emits a fixture
/// file that replays the exact same pipeline offline.
class RecordingProvider : public providers::Provider {
 public:
  explicit RecordingProvider(std::shared_ptr<providers::Provider> delegate)
      : delegate_(std::move(delegate)) {}
  std::string tag() const override { return delegate_->tag(); }
  std::string generate(const providers::GenRequest& req) override;
  std::vector<providers::EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  void save(const std::string& path) const { recorded_.save(path); }

 private:
  std::shared_ptr<providers::Provider> delegate_;
  providers::FixtureProvider recorded_;
};

// ---------------------------------------------------------------------------
// Pipeline stages. Every stage verifies its inputs against the upstream
// manifests (unless force), writes its artifacts deterministically, and
// records a manifest of its own.
// ---------------------------------------------------------------------------

struct IngestSummary {
  datasets::CorpusStats stats;
  int excluded_users = 0;
};
IngestSummary run_ingest(const config::RunConfig& cfg, bool force = false);

struct GenerateSummary {
  int users = 0;
  int chains = 0;
  int parse_failures = 0;
};
GenerateSummary run_gvm_generate(const config::RunConfig& cfg, bool force = false);

struct ValidateSummary {
  int scored = 0;
  double best_score = 0.0;
};
ValidateSummary run_gvm_validate(const config::RunConfig& cfg, bool force = false);

struct MineSummary {
  int input_chains = 0;
  int survivors = 0;
  int chosen_k = 0;
  int selected_cluster = 0;
  std::vector<std::string> template_steps;
};
MineSummary run_gvm_mine(const config::RunConfig& cfg, bool force = false);

struct EmbedSummary {
  int users = 0;
  int k = 0;
  int d = 0;
};
EmbedSummary run_embed(const config::RunConfig& cfg, bool force = false);

struct TrainSummary {
  int best_epoch = 0;
  double best_valid_recall10 = 0.0;
  int epochs_run = 0;
};
TrainSummary run_train(const config::RunConfig& cfg, bool force = false);

eval::EvalReport run_evaluate(const config::RunConfig& cfg, bool force = false);

struct TheorySummary {
  bool dpi_holds = false;
  bool lower_bound_holds = false;
  bool collision_holds = false;
  bool order_bound_holds = false;
  bool order_full_wins = false;
  bool all_hold() const {
    return dpi_holds && lower_bound_holds && collision_holds &&
           order_bound_holds && order_full_wins;
  }
};
TheorySummary run_theory(const config::RunConfig& cfg, bool force = false);

struct CompareSummary {
  std::vector<std::pair<std::string, double>> recall5_by_template;
};
/// Trains one model per template (the bundled manual templates plus the
/// discovered one when present) under identical budgets.
CompareSummary run_compare_templates(const config::RunConfig& cfg,
                                     const std::string& templates_dir,
                                     bool force = false);

/// Records a complete fixture file by running generate/validate/mine/embed
/// and compare-template generation against the DemoProvider.
void run_make_fixtures(const config::RunConfig& cfg,
                       const std::string& templates_dir);

}  // namespace scoter::pipeline
