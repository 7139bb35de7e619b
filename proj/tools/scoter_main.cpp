// SPDX-License-Identifier: Apache-2.0

// scoter: one entry point for the whole pipeline.
//   ingest -> gvm generate|validate|mine -> embed -> train -> evaluate
// plus the theory verification suite, the manual-vs-discovered template
// comparison, and a fixture recorder for fully offline runs.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "scoter/common.hpp"
#include "scoter/config.hpp"
#include "scoter/pipeline.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::string variant;
  std::int64_t seed = -1;
  bool force = false;
};

scoter::config::RunConfig effective_config(const GlobalArgs& args) {
  auto cfg = scoter::config::load_config(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.variant.empty()) {
    scoter::fusion::variant_from_string(args.variant);
    cfg.variant = args.variant;
  }
  if (!args.out_dir.empty()) cfg.paths.out_dir = args.out_dir;
  cfg.training.seed = cfg.seed;
  cfg.training.variant = scoter::fusion::variant_from_string(cfg.variant);
  cfg.theory_config.order.seed = cfg.seed;
  return cfg;
}

void add_common(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration JSON")
      ->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--variant", args.variant,
                  "override the model variant (full, no_position, "
                  "no_contrastive, mean_pooled, backbone_only)");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_flag("--force", args.force, "skip stale-artifact hash checks");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scoter: reasoning-pattern discovery and order-preserving fusion"};
  app.require_subcommand(1);
  GlobalArgs args;
  std::string gvm_phase;
  std::string templates_dir = "fixtures/templates";

  auto* ingest = app.add_subcommand("ingest", "raw log -> splits/vocab/meta");
  add_common(ingest, args);

  auto* gvm = app.add_subcommand("gvm", "generate, validate, or mine");
  add_common(gvm, args);
  gvm->add_option("phase", gvm_phase, "generate | validate | mine")->required();

  auto* embed = app.add_subcommand("embed", "template chains -> embedding store");
  add_common(embed, args);

  auto* train = app.add_subcommand("train", "fit the configured variant");
  add_common(train, args);

  auto* evaluate = app.add_subcommand("evaluate", "full-ranking test metrics");
  add_common(evaluate, args);

  auto* theory = app.add_subcommand("theory", "run every bound verification");
  add_common(theory, args);

  auto* compare = app.add_subcommand("compare-templates",
                                     "manual vs discovered templates");
  add_common(compare, args);
  compare->add_option("--templates", templates_dir, "manual template directory");

  auto* fixtures = app.add_subcommand(
      "make-fixtures", "record a deterministic fixture file for this corpus");
  add_common(fixtures, args);
  fixtures->add_option("--templates", templates_dir, "manual template directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = effective_config(args);
    using namespace scoter::pipeline;

    if (*ingest) {
      auto s = run_ingest(cfg, args.force);
      std::printf("ingest: users=%zu items=%zu interactions=%zu avg_len=%.2f excluded=%d\n",
                  s.stats.users, s.stats.items, s.stats.interactions,
                  s.stats.avg_length, s.excluded_users);
    } else if (*gvm) {
      if (gvm_phase == "generate") {
        auto s = run_gvm_generate(cfg, args.force);
        std::printf("gvm generate: users=%d chains=%d parse_failures=%d\n",
                    s.users, s.chains, s.parse_failures);
      } else if (gvm_phase == "validate") {
        auto s = run_gvm_validate(cfg, args.force);
        std::printf("gvm validate: scored=%d best_score=%.4f\n", s.scored,
                    s.best_score);
      } else if (gvm_phase == "mine") {
        auto s = run_gvm_mine(cfg, args.force);
        std::string steps;
        for (const auto& st : s.template_steps) {
          if (!steps.empty()) steps += " -> ";
          steps += st;
        }
        std::printf("gvm mine: chains=%d survivors=%d k=%d cluster=%d template=\"%s\"\n",
                    s.input_chains, s.survivors, s.chosen_k, s.selected_cluster,
                    steps.c_str());
      } else {
        std::fprintf(stderr, "error: unknown gvm phase \"%s\"\n", gvm_phase.c_str());
        return 2;
      }
    } else if (*embed) {
      auto s = run_embed(cfg, args.force);
      std::printf("embed: users=%d K=%d D=%d\n", s.users, s.k, s.d);
    } else if (*train) {
      auto s = run_train(cfg, args.force);
      std::printf("train: variant=%s best_epoch=%d valid_recall@10=%.4f epochs=%d\n",
                  cfg.variant.c_str(), s.best_epoch, s.best_valid_recall10,
                  s.epochs_run);
    } else if (*evaluate) {
      auto report = run_evaluate(cfg, args.force);
      std::printf("evaluate: %s\n", report.to_csv_row().c_str());
    } else if (*theory) {
      auto s = run_theory(cfg, args.force);
      if (!s.all_hold()) {
        std::fprintf(stderr, "theory: at least one bound check FAILED\n");
        return 1;
      }
      std::printf("theory: all bound checks pass\n");
    } else if (*compare) {
      auto s = run_compare_templates(cfg, templates_dir, args.force);
      for (const auto& [name, recall5] : s.recall5_by_template) {
        std::printf("compare: %s recall@5=%.4f\n", name.c_str(), recall5);
      }
    } else if (*fixtures) {
      run_make_fixtures(cfg, templates_dir);
      std::printf("make-fixtures: wrote %s\n", cfg.paths.fixtures.c_str());
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
