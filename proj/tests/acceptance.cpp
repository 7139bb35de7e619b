// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one pass/fail line per criterion, nonzero exit when
// any non-optional criterion fails. Tolerances are pinned in code.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scoter/config.hpp"
#include "scoter/datasets.hpp"
#include "scoter/fusion.hpp"
#include "scoter/gvm.hpp"
#include "scoter/pipeline.hpp"
#include "scoter/theory.hpp"
#include "testutil.hpp"

using namespace scoter;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %d] %s %s\n", criterion, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& detail) {
  std::printf("[criterion %d] SKIP %s\n", criterion, detail.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness on the pinned toy shapes
// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();

  numerics::ParamStore params;
  Rng rng(42);
  backbone::BackboneConfig bb;
  bb.vocab_size = 9;
  bb.d_model = 8;  // d_item = 8
  bb.n_heads = 2;
  bb.head_dim = 4;
  bb.n_layers = 1;
  bb.mlp_hidden = 12;
  bb.dropout = 0.0;
  bb.seq_len = 4;  // T = 4
  fusion::FusionConfig fc;
  fc.k_steps = 3;   // K = 3
  fc.embed_dim = 6; // D = 6
  fc.d_model = 8;
  fc.n_heads = 2;
  fusion::Model model(fusion::Variant::kFull, bb, fc, params, rng);

  // B = 3 users with step matrices and targets
  std::vector<datasets::UserSequence> seqs = {
      datasets::normalize_sequence("u0", {1, 2, 3}, 4),
      datasets::normalize_sequence("u1", {4, 5}, 4),
      datasets::normalize_sequence("u2", {6, 7, 8, 1}, 4)};
  std::vector<distill::StepEmbeddingMatrix> mats(3);
  Rng hrng(17);
  for (int u = 0; u < 3; ++u) {
    mats[static_cast<std::size_t>(u)].user_id = "u" + std::to_string(u);
    mats[static_cast<std::size_t>(u)].k = 3;
    mats[static_cast<std::size_t>(u)].d = 6;
    for (int i = 0; i < 18; ++i) {
      mats[static_cast<std::size_t>(u)].rows.push_back(static_cast<float>(hrng.normal()));
    }
  }
  std::vector<int> targets = {2, 5, 7};

  auto build = [&]() {
    using namespace scoter::numerics;
    std::vector<Tensor> rec_losses, z_rows;
    for (int u = 0; u < 3; ++u) {
      auto fw = model.forward(seqs[static_cast<std::size_t>(u)],
                              mats[static_cast<std::size_t>(u)]);
      auto logits = model.backbone_model().score_items(row(fw.states, 3));
      rec_losses.push_back(
          model.backbone_model().rec_loss(logits, targets[static_cast<std::size_t>(u)]));
      z_rows.push_back(*fw.z_last);
    }
    Tensor batch = gather_rows(model.backbone_model().item_table(), targets);
    std::vector<Tensor> nces;
    for (int u = 0; u < 3; ++u) {
      nces.push_back(fusion::info_nce(z_rows[static_cast<std::size_t>(u)], batch, u, 0.07));
    }
    return fusion::total_loss(mean(stack_scalars(rec_losses)),
                              mean(stack_scalars(nces)), 0.1);
  };

  auto loss = build();
  numerics::backward(loss);
  std::vector<std::pair<std::string, numerics::Tensor>> named;
  for (auto& [name, t] : params.named()) named.emplace_back(name, t);
  auto res = testutil::compare_grads(named, [&]() { return build().value(); });

  const double elapsed = seconds_since(t0);
  const bool pass = res.max_rel_err < 1e-4 && elapsed < 10.0;
  report(1, pass,
         fmt("gradient correctness: %zu partials, max rel err %.3e (worst %s), %.1f s",
             res.checked, res.max_rel_err, res.worst.c_str(), elapsed));
}

// ---------------------------------------------------------------------------
// 2. Closed-form losses
// ---------------------------------------------------------------------------

void criterion_closed_forms() {
  using namespace scoter::numerics;
  // InfoNCE, B=2, cos(target)=1, cos(negative)=0, tau=1
  Tensor z = Tensor::from_data({3}, {1, 0, 0});
  Tensor batch2 = Tensor::from_data({2, 3}, {2, 0, 0, 0, 5, 0});
  const double nce2 = fusion::info_nce(z, batch2, 0, 1.0).value();
  const double want2 = std::log(1.0 + std::exp(-1.0));  // 0.313262...
  const double err2 = std::abs(nce2 - want2);

  // all-identical batch of B=6 -> ln B
  std::vector<double> same;
  for (int i = 0; i < 6; ++i) {
    same.insert(same.end(), {0.2, 0.5, 0.1});
  }
  const double nce_same =
      fusion::info_nce(z, Tensor::from_data({6, 3}, same), 3, 0.07).value();
  const double err_same = std::abs(nce_same - std::log(6.0));

  // cross-entropy of uniform logits over n -> ln n
  double err_ce = 0.0;
  for (int n : {2, 7, 41}) {
    const double ce = cross_entropy_with_logits(Tensor::zeros({n}), n / 2).value();
    err_ce = std::max(err_ce, std::abs(ce - std::log(static_cast<double>(n))));
  }

  const bool pass = err2 < 1e-9 && err_same < 1e-12 && err_ce < 1e-12;
  report(2, pass,
         fmt("closed forms: |nce - ln(1+e^-1)|=%.2e, |nce - ln B|=%.2e, |ce - ln n|=%.2e",
             err2, err_same, err_ce));
}

// ---------------------------------------------------------------------------
// 3. Theory suite (DPI, lower bound, collision penalty)
// ---------------------------------------------------------------------------

void criterion_theory_suite() {
  const auto t0 = std::chrono::steady_clock::now();

  auto dpi = theory::verify_dpi(1000, 20240401);
  auto lb = theory::verify_lower_bound_trials(500, 3, 20240402);

  bool collision_ok = true;
  double worst_expected_gap = 1e9;
  for (int n_y : {2, 3}) {
    auto strict = theory::verify_collision_penalty(n_y, 1.0, 0.8, 40, 20240403);
    collision_ok = collision_ok && strict.pointwise_holds() && strict.expectation_holds();
    auto mixed = theory::verify_collision_penalty(n_y, 0.5, 0.4, 40, 20240404);
    collision_ok = collision_ok && mixed.pointwise_holds() && mixed.expectation_holds();
    worst_expected_gap = std::min(worst_expected_gap,
                                  mixed.expected_tv - mixed.rho_delta_half);
  }

  const double elapsed = seconds_since(t0);
  const bool pass = dpi.violations == 0 && lb.violations == 0 && collision_ok &&
                    elapsed < 120.0;
  report(3, pass,
         fmt("theory suite: dpi 0/%d violations (min margin %.2e), lower bound 0/%d "
             "(min margin %.2e), collision E[TV]-rho*delta/2 >= %.2e, %.1f s",
             dpi.trials, dpi.min_margin, lb.instances, lb.min_margin,
             worst_expected_gap, elapsed));
  if (dpi.violations != 0 || lb.violations != 0 || !collision_ok) {
    std::printf("            dpi violations=%d lb violations=%d\n", dpi.violations,
                lb.violations);
  }
}

// ---------------------------------------------------------------------------
// 4 + 5. Order-advantage experiment and ablation ordering (shared runs)
// ---------------------------------------------------------------------------

struct GapStats {
  double mean = 0.0;
  double std_dev = 0.0;
  double z = 0.0;  // mean / (std/sqrt(n)); large when std ~ 0
};

GapStats gap_stats(const std::vector<double>& gaps) {
  GapStats s;
  const double n = static_cast<double>(gaps.size());
  for (double g : gaps) s.mean += g / n;
  double var = 0.0;
  for (double g : gaps) var += (g - s.mean) * (g - s.mean);
  s.std_dev = gaps.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  s.z = s.std_dev > 1e-12 ? s.mean / (s.std_dev / std::sqrt(n)) : (s.mean > 0 ? 1e9 : 0.0);
  return s;
}

void criteria_order_and_ablation() {
  theory::OrderTaskSpec spec;
  spec.rho = 1.0;
  spec.delta = 0.8;
  spec.catalog = 50;
  spec.seed = 515000;
  spec.n_users = 384;
  spec.mean_collision = true;  // graded task: every ablation tier distinct

  theory::OrderTrainParams params;  // tuned defaults: 150 epochs, patience 20

  auto rep = theory::order_advantage_experiment(
      spec,
      {fusion::Variant::kFull, fusion::Variant::kNoPosition,
       fusion::Variant::kMeanPooled, fusion::Variant::kBackboneOnly},
      5, params);

  // criterion 4: full beats mean_pooled in 5/5 seeds; permutation behavior;
  // and the theorem-direction inequality gap >= rhs - 3 sigma
  bool perm_ok = true;
  int wins = 0;
  for (const auto& run : rep.runs) {
    perm_ok = perm_ok && run.mean_pooled_perm_invariant && run.full_perm_max_diff > 1e-6;
    if (run.variants.at("full").recall5 > run.variants.at("mean_pooled").recall5) ++wins;
  }
  const bool pass4 = wins == 5 && perm_ok && rep.bound_holds;
  report(4, pass4,
         fmt("order advantage: full wins %d/5 seeds, mean gap %.3f vs rhs %.3f "
             "(3-sigma slack %.3f), mean_pooled permutation-invariant=%s, "
             "full perm diff > 1e-6=%s",
             wins, rep.mean_gap, rep.mean_rhs, 3.0 * rep.margin_std,
             perm_ok ? "yes" : "no", perm_ok ? "yes" : "no"));

  // criterion 5: full >= no_position >= mean_pooled >= backbone_only with
  // each adjacent gap significant at 3 sigma over the 5 seeds
  const char* tiers[] = {"full", "no_position", "mean_pooled", "backbone_only"};
  bool pass5 = true;
  std::string detail = "ablation ordering:";
  for (int t = 0; t + 1 < 4; ++t) {
    std::vector<double> gaps;
    for (const auto& run : rep.runs) {
      gaps.push_back(run.variants.at(tiers[t]).recall5 -
                     run.variants.at(tiers[t + 1]).recall5);
    }
    auto s = gap_stats(gaps);
    pass5 = pass5 && s.mean > 0.0 && s.z >= 3.0;
    detail += fmt(" %s-%s gap %.3f (z=%.1f)", tiers[t], tiers[t + 1], s.mean,
                  std::min(s.z, 999.0));
  }
  for (const auto& run : rep.runs) {
    detail += fmt(" | seed %llu: %.3f/%.3f/%.3f/%.3f",
                  static_cast<unsigned long long>(run.seed),
                  run.variants.at("full").recall5,
                  run.variants.at("no_position").recall5,
                  run.variants.at("mean_pooled").recall5,
                  run.variants.at("backbone_only").recall5);
  }
  report(5, pass5, detail);
}

// ---------------------------------------------------------------------------
// 6. GVM recovery of a planted pattern
// ---------------------------------------------------------------------------

void criterion_gvm_recovery() {
  // 4 blobs of chains; blob 0 carries scores >= 0.1 above every other blob
  Rng build_rng(606);
  const int blobs = 4, per_blob = 8;
  std::vector<providers::EmbeddingVector> embs;
  std::vector<double> scores;
  std::vector<int> truth;
  std::vector<std::vector<double>> anchors;
  for (int b = 0; b < blobs; ++b) {
    std::vector<double> a(6, 0.0);
    a[static_cast<std::size_t>(b)] = 1.0;
    anchors.push_back(a);
  }
  for (int b = 0; b < blobs; ++b) {
    for (int i = 0; i < per_blob; ++i) {
      auto v = anchors[static_cast<std::size_t>(b)];
      for (auto& x : v) x += build_rng.uniform(-0.05, 0.05);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      for (auto& x : v) x /= norm;
      embs.push_back({v, "fixture"});
      // planted blob 0: quality ~0.8; others <= 0.65 (margin >= 0.1)
      scores.push_back(b == 0 ? 0.75 + 0.1 * build_rng.uniform()
                              : 0.3 * build_rng.uniform() + 0.25 * b / blobs);
      truth.push_back(b);
    }
  }

  int recovered = 0;
  bool exemplars_ok = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cands = gvm::cluster_chains(embs, scores, blobs, seed);
    const auto& best = gvm::select_pattern(cands, 2);
    // the selected cluster must be exactly the planted blob membership
    bool is_planted = best.members.size() == per_blob;
    for (int m : best.members) is_planted = is_planted && truth[static_cast<std::size_t>(m)] == 0;
    if (is_planted) ++recovered;

    // exemplars equal the brute-force top-N by centroid cosine
    auto got = gvm::extract_exemplars(best, embs, 5);
    std::vector<std::pair<double, int>> oracle;
    double cn = 0.0;
    for (double x : best.centroid) cn += x * x;
    cn = std::sqrt(cn);
    for (int m : best.members) {
      double dot = 0.0;
      for (std::size_t jj = 0; jj < best.centroid.size(); ++jj) {
        dot += best.centroid[jj] * embs[static_cast<std::size_t>(m)].values[jj];
      }
      oracle.emplace_back(dot / cn, m);
    }
    std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int i = 0; i < 5; ++i) {
      exemplars_ok = exemplars_ok && got[static_cast<std::size_t>(i)] ==
                                         oracle[static_cast<std::size_t>(i)].second;
    }
  }
  const bool pass = recovered == 10 && exemplars_ok;
  report(6, pass,
         fmt("gvm recovery: planted cluster selected %d/10 seeds, exemplars match "
             "brute force: %s",
             recovered, exemplars_ok ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 7. Protocol fidelity against the real Beauty dump (optional)
// ---------------------------------------------------------------------------

void criterion_protocol_fidelity() {
  std::string path = "data/ratings_Beauty.csv";
  if (const char* env = std::getenv("SCOTER_BEAUTY_CSV")) path = env;
  if (!fs::exists(path)) {
    report_skip(7, "protocol fidelity: raw Beauty dump not supplied (optional; "
                   "set SCOTER_BEAUTY_CSV to enable)");
    return;
  }
  auto interactions = datasets::read_amazon_ratings_csv(path);
  interactions = datasets::five_core_filter(interactions);
  auto stats = datasets::corpus_stats(interactions);
  const bool pass = stats.users == 22363 && stats.items == 12101 &&
                    stats.interactions == 198502 &&
                    std::abs(stats.avg_length - 8.88) <= 0.01;
  report(7, pass,
         fmt("protocol fidelity: users=%zu items=%zu interactions=%zu avg_len=%.3f",
             stats.users, stats.items, stats.interactions, stats.avg_length));
}

// ---------------------------------------------------------------------------
// 8. Determinism of the fixture-backed pipeline
// ---------------------------------------------------------------------------

std::string pipeline_config_json(const std::string& out_dir,
                                 const std::string& fixtures) {
  return std::string(R"({
  "seed": 21,
  "variant": "full",
  "paths": {"raw_format": "synth", "fixtures": ")") + fixtures +
         R"(", "cache_dir": "", "out_dir": ")" + out_dir + R"("},
  "provider": {"kind": "fixture", "cache": false},
  "synth": {"n_users": 60, "n_items": 40, "n_topics": 5, "concentration": 0.9, "min_len": 5, "max_len": 9},
  "gvm": {"chains_per_user": 3, "eval_users": 30, "k_min": 3, "k_max": 6, "exemplars": 5},
  "model": {"d_item": 16, "heads": 2, "head_dim": 8, "layers": 1, "mlp": 32, "dropout": 0.1},
  "training": {"lr": 0.003, "epochs": 6, "patience": 6, "batch": 16}
})";
}

void criterion_determinism() {
  const auto base = fs::temp_directory_path() / "scoter_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  const std::string fixtures = (base / "fixtures.jsonl").string();

  auto run_pipeline = [&](const std::string& out_dir, bool record) {
    auto cfg = config::parse_config(pipeline_config_json(out_dir, fixtures));
    pipeline::run_ingest(cfg);
    if (record) pipeline::run_make_fixtures(cfg, "fixtures/templates");
    pipeline::run_gvm_generate(cfg);
    pipeline::run_gvm_validate(cfg);
    pipeline::run_gvm_mine(cfg);
    pipeline::run_embed(cfg);
    pipeline::run_train(cfg);
    pipeline::run_evaluate(cfg);
  };

  run_pipeline((base / "run_a").string(), /*record=*/true);
  run_pipeline((base / "run_b").string(), /*record=*/false);

  auto same_bytes = [](const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return da == db;
  };

  const char* files[] = {"splits.jsonl",        "vocab.json",
                         "chains.jsonl",        "scores.jsonl",
                         "pattern_report.json", "template.json",
                         "store.bin",           "checkpoint_full.bin",
                         "metrics_full.csv",    "eval_full.json",
                         "ablation.csv",        "teacher_chains.jsonl"};
  bool pass = true;
  std::string mismatches;
  for (const char* f : files) {
    if (!same_bytes(base / "run_a" / f, base / "run_b" / f)) {
      pass = false;
      mismatches += std::string(" ") + f;
    }
  }
  report(8, pass,
         pass ? "determinism: 12 artifacts byte-identical across independent runs"
              : "determinism: mismatched artifacts:" + mismatches);
  fs::remove_all(base);
}

}  // namespace

int main() {
  std::printf("scoter acceptance suite\n");
  criterion_gradients();
  criterion_closed_forms();
  criterion_theory_suite();
  criteria_order_and_ablation();
  criterion_gvm_recovery();
  criterion_protocol_fidelity();
  criterion_determinism();
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all criteria pass\n");
  return 0;
}
