// SPDX-License-Identifier: Apache-2.0

#include "scoter/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "scoter/backbone.hpp"
#include "scoter/checkpoint.hpp"
#include "scoter/common.hpp"
#include "scoter/distill.hpp"
#include "scoter/hash.hpp"
#include "scoter/manifest.hpp"

namespace scoter::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Artifacts and small helpers
// ---------------------------------------------------------------------------

Artifacts::Artifacts(const config::RunConfig& cfg) {
  const std::string& out = cfg.paths.out_dir;
  const std::string rep = cfg.paths.reports_dir();
  splits = out + "/splits.jsonl";
  vocab = out + "/vocab.json";
  meta = out + "/meta.jsonl";
  chains = out + "/chains.jsonl";
  scores = out + "/scores.jsonl";
  pattern_report = out + "/pattern_report.json";
  template_file = out + "/template.json";
  teacher_chains = out + "/teacher_chains.jsonl";
  store = cfg.paths.store_path();
  metrics_csv = out + "/metrics_" + cfg.variant + ".csv";
  checkpoint = cfg.paths.checkpoint_path(cfg.variant);
  eval_report = rep + "/eval_" + cfg.variant + ".json";
  ablation_csv = rep + "/ablation.csv";
  theory_report = rep + "/theory_report.json";
  compare_csv = rep + "/compare_templates.csv";
}

std::string item_text(const std::string& item_id, const datasets::ItemMeta* meta) {
  if (meta == nullptr || meta->title.empty()) return item_id;
  if (meta->description.empty()) return meta->title;
  return meta->title + " " + meta->description;
}

namespace {

manifest::RunManifest start_manifest(const config::RunConfig& cfg,
                                     const std::string& command) {
  manifest::RunManifest m;
  m.command = command;
  m.config_hash = sha256_hex(cfg.canonical_json());
  m.started_at = manifest::iso_now();
  return m;
}

void finish_manifest(manifest::RunManifest& m, const config::RunConfig& cfg) {
  m.finished_at = manifest::iso_now();
  manifest::write_manifest(m, cfg.paths.out_dir);
}

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw ScoterError(what + " not found: " + path + " (run the upstream command first)");
  }
}

datasets::SplitBundle load_bundle(const config::RunConfig& cfg, bool force) {
  Artifacts art(cfg);
  require_file(art.splits, "split bundle");
  require_file(art.vocab, "vocabulary");
  manifest::check_input_fresh(art.splits, cfg.paths.out_dir, force);
  manifest::check_input_fresh(art.vocab, cfg.paths.out_dir, force);
  const std::string meta_path =
      std::filesystem::exists(art.meta) ? art.meta : std::string();
  return datasets::read_split_bundle(art.splits, art.vocab, meta_path);
}

void write_meta_jsonl(const std::map<std::string, datasets::ItemMeta>& meta,
                      const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& [item_id, m] : meta) {
    json j;
    j["item_id"] = item_id;
    j["title"] = m.title;
    j["description"] = m.description;
    os << j.dump() << '\n';
  }
}

backbone::BackboneConfig backbone_config_for(const config::RunConfig& cfg,
                                             int vocab_size) {
  backbone::BackboneConfig bc = cfg.model;
  bc.vocab_size = vocab_size;
  return bc;
}

}  // namespace

std::shared_ptr<providers::Provider> make_provider(const config::RunConfig& cfg) {
  std::shared_ptr<providers::Provider> base;
  if (cfg.provider.kind == "fixture") {
    if (cfg.paths.fixtures.empty()) {
      throw ConfigError("provider.kind=fixture needs paths.fixtures");
    }
    base = std::make_shared<providers::FixtureProvider>(cfg.paths.fixtures);
  } else {
    providers::HttpProviderConfig hc;
    hc.base_url = cfg.provider.base_url;
    hc.model_tag = cfg.provider.model_tag;
    hc.max_attempts = cfg.provider.max_attempts;
    hc.backoff_ms = cfg.provider.backoff_ms;
    base = std::make_shared<providers::HttpProvider>(hc);
  }
  if (cfg.provider.cache && !cfg.paths.cache_dir.empty()) {
    return std::make_shared<providers::CachingProvider>(
        base, providers::DiskCache(cfg.paths.cache_dir));
  }
  return base;
}

// ---------------------------------------------------------------------------
// DemoProvider
// ---------------------------------------------------------------------------

namespace {

constexpr int kDemoStripes = 5;

// stable unit vector from an integer anchor id
std::vector<double> anchor_vector(int id, int dim) {
  Rng rng(0x5ca1ab1eULL + static_cast<std::uint64_t>(id));
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<double> hash_vector(const std::string& text, int dim) {
  const std::string digest = sha256_hex(text);
  std::uint64_t seed = 0;
  for (int i = 0; i < 16; ++i) {
    seed = seed * 16 + static_cast<std::uint64_t>(
                           digest[static_cast<std::size_t>(i)] <= '9'
                               ? digest[static_cast<std::size_t>(i)] - '0'
                               : digest[static_cast<std::size_t>(i)] - 'a' + 10);
  }
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

/// "stripe-K" marker -> K, or -1 when absent.
int stripe_of(const std::string& text) {
  const auto pos = text.find("stripe-");
  if (pos == std::string::npos || pos + 7 >= text.size()) return -1;
  const char c = text[pos + 7];
  return c >= '0' && c <= '9' ? c - '0' : -1;
}

/// Item index from a synthetic title "... iNNNNN", or -1.
int synth_item_index(const std::string& title) {
  const auto pos = title.rfind(" i");
  if (pos == std::string::npos) return -1;
  int value = 0;
  bool any = false;
  for (std::size_t i = pos + 2; i < title.size() && std::isdigit(static_cast<unsigned char>(title[i])); ++i) {
    value = value * 10 + (title[i] - '0');
    any = true;
  }
  return any ? value : -1;
}

std::vector<std::string> prompt_history_titles(const std::string& prompt) {
  std::vector<std::string> titles;
  const auto pos = prompt.find("User historical behavior");
  if (pos == std::string::npos) return titles;
  std::istringstream is(prompt.substr(pos));
  std::string line;
  std::getline(is, line);  // the heading itself
  while (std::getline(is, line)) {
    const auto dot = line.find(". ");
    if (dot == std::string::npos) continue;
    std::string title = line.substr(dot + 2);
    const auto dash = title.find(" - ");
    if (dash != std::string::npos) title = title.substr(0, dash);
    if (!title.empty()) titles.push_back(title);
  }
  return titles;
}

int dominant_stripe(const std::vector<std::string>& titles) {
  std::vector<int> votes(kDemoStripes, 0);
  for (const auto& t : titles) {
    const int idx = synth_item_index(t);
    if (idx >= 0) {
      ++votes[static_cast<std::size_t>(idx % kDemoStripes)];
    } else {
      ++votes[sha256_hex(t)[0] % kDemoStripes];
    }
  }
  int best = 0;
  for (int s = 1; s < kDemoStripes; ++s) {
    if (votes[static_cast<std::size_t>(s)] > votes[static_cast<std::size_t>(best)]) best = s;
  }
  return best;
}

}  // namespace

std::string DemoProvider::generate(const providers::GenRequest& req) {
  const auto& prompt = req.prompt;

  if (prompt.find("Synthesize the single shared logical structure") != std::string::npos) {
    const int stripe = std::max(0, stripe_of(prompt));
    std::ostringstream os;
    os << "Review stripe-" << stripe << " history -> Match stripe-" << stripe
       << " catalog -> Recommend stripe-" << stripe << " items";
    return os.str();
  }

  if (prompt.find("Follow this reasoning template") != std::string::npos) {
    // "Write exactly N numbered lines"
    int want = 2;
    const auto pos = prompt.find("Write exactly ");
    if (pos != std::string::npos) want = std::atoi(prompt.c_str() + pos + 14);
    const int stripe = dominant_stripe(prompt_history_titles(prompt));
    std::ostringstream os;
    for (int j = 1; j <= want; ++j) {
      os << j << ". Step " << j << " focuses stripe-" << stripe << " signals.\n";
    }
    return os.str();
  }

  if (prompt.find("predict 20 different product features") != std::string::npos) {
    const auto titles = prompt_history_titles(prompt);
    const int stripe = dominant_stripe(titles);
    const long variant = req.seed ? *req.seed % 3 : 0;
    std::ostringstream os;
    os << "<cot_path>Scan stripe-" << stripe << " history (angle " << variant
       << ") -> Weigh stripe-" << stripe << " affinities -> Recommend stripe-"
       << stripe << " items</cot_path>\n<reason>The history concentrates on "
       << "stripe-" << stripe << "; project it forward.</reason>\n<recommendations>\n";
    // recommend the stripe's catalog slice: same residue class as the stripe
    for (int j = 0; j < gvm::kRecommendationCount; ++j) {
      const int idx = stripe + kDemoStripes * j;
      char buf[48];
      std::snprintf(buf, sizeof(buf), "Synthetic product i%05d", idx);
      os << "<item>" << buf << "</item>\n";
    }
    os << "</recommendations>";
    return os.str();
  }

  return "OK";
}

std::vector<providers::EmbeddingVector> DemoProvider::embed(
    const std::vector<std::string>& texts) {
  std::vector<providers::EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v;
    const int stripe = stripe_of(text);
    if (stripe >= 0) {
      // anchor same-stripe texts together with per-text jitter
      v = anchor_vector(stripe, embed_dim_);
      const auto jitter = hash_vector(text, embed_dim_);
      for (int j = 0; j < embed_dim_; ++j) {
        v[static_cast<std::size_t>(j)] += 0.35 * jitter[static_cast<std::size_t>(j)];
      }
    } else {
      v = hash_vector(text, embed_dim_);
    }
    out.push_back({std::move(v), tag()});
  }
  providers::normalize_batch(out);
  return out;
}

std::string RecordingProvider::generate(const providers::GenRequest& req) {
  std::string value = delegate_->generate(req);
  recorded_.add_generation(req, value);
  return value;
}

std::vector<providers::EmbeddingVector> RecordingProvider::embed(
    const std::vector<std::string>& texts) {
  auto values = delegate_->embed(texts);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    recorded_.add_embedding(texts[i], values[i].values);
  }
  return values;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

IngestSummary run_ingest(const config::RunConfig& cfg, bool force) {
  (void)force;
  Artifacts art(cfg);
  std::filesystem::create_directories(cfg.paths.out_dir);
  auto m = start_manifest(cfg, "ingest");

  std::vector<datasets::Interaction> interactions;
  std::map<std::string, datasets::ItemMeta> meta;
  bool apply_core = true;

  if (cfg.paths.raw_format == "synth") {
    datasets::SynthSpec spec;
    spec.seed = cfg.seed;
    spec.n_users = cfg.synth.n_users;
    spec.n_items = cfg.synth.n_items;
    spec.n_topics = cfg.synth.n_topics;
    spec.topic_concentration = cfg.synth.concentration;
    spec.min_len = cfg.synth.min_len;
    spec.max_len = cfg.synth.max_len;
    interactions = datasets::synth_interactions(spec);
    for (const auto& it : interactions) {
      if (!meta.count(it.item_id)) {
        meta[it.item_id] = datasets::ItemMeta{"Synthetic product " + it.item_id,
                                              ""};
      }
    }
    apply_core = false;  // synthetic corpora are dense by construction
  } else {
    require_file(cfg.paths.raw_data, "raw data");
    m.add_input(cfg.paths.raw_data);
    if (cfg.paths.raw_format == "canonical") {
      interactions = datasets::read_canonical_csv(cfg.paths.raw_data);
    } else if (cfg.paths.raw_format == "amazon") {
      interactions = datasets::read_amazon_ratings_csv(cfg.paths.raw_data);
    } else {
      interactions = datasets::read_yelp_reviews_jsonl(cfg.paths.raw_data);
    }
    if (!cfg.paths.meta_jsonl.empty()) {
      m.add_input(cfg.paths.meta_jsonl);
      meta = datasets::read_metadata_jsonl(cfg.paths.meta_jsonl);
    }
  }

  if (apply_core) interactions = datasets::five_core_filter(interactions);
  IngestSummary summary;
  summary.stats = datasets::corpus_stats(interactions);
  if (interactions.empty()) {
    std::fprintf(stderr, "warning: corpus is empty after filtering\n");
  }

  auto bundle = datasets::leave_one_out_split(interactions, std::move(meta));
  summary.excluded_users = bundle.excluded_users;
  datasets::write_split_jsonl(bundle, art.splits);
  datasets::write_vocab_json(bundle, art.vocab);
  write_meta_jsonl(bundle.meta, art.meta);

  m.add_output(art.splits);
  m.add_output(art.vocab);
  m.add_output(art.meta);
  finish_manifest(m, cfg);
  return summary;
}

// ---------------------------------------------------------------------------
// gvm stages
// ---------------------------------------------------------------------------

namespace {

GenerateSummary gvm_generate_with(const config::RunConfig& cfg,
                                  providers::Provider& provider, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "gvm_generate");
  auto bundle = load_bundle(cfg, force);
  m.add_input(art.splits);

  GenerateSummary summary;
  std::vector<gvm::ReasoningChain> chains;
  int missing_meta = 0;
  int flagged_item_counts = 0;
  const int user_cap = std::min<int>(cfg.gvm.eval_users,
                                     static_cast<int>(bundle.train.size()));
  for (int u = 0; u < user_cap; ++u) {
    const auto& seq = bundle.train[static_cast<std::size_t>(u)];
    auto built = gvm::build_generation_prompt(seq, bundle.vocab, bundle.meta);
    missing_meta += built.missing_meta;
    ++summary.users;
    for (int c = 0; c < cfg.gvm.chains_per_user; ++c) {
      providers::GenRequest req;
      req.prompt = built.text;
      req.temperature = cfg.gvm.temperature;
      req.top_p = cfg.gvm.top_p;
      req.max_tokens = cfg.gvm.max_tokens;
      req.seed = c;  // distinct samples per user
      try {
        auto chain = gvm::parse_generation(provider.generate(req));
        chain.id = seq.user_id + "-" + std::to_string(c);
        chain.source_user = seq.user_id;
        if (!chain.item_count_ok) ++flagged_item_counts;
        chains.push_back(std::move(chain));
        ++summary.chains;
      } catch (const ParseError& e) {
        ++summary.parse_failures;
        std::fprintf(stderr, "warning: chain %s-%d unparseable: %s\n",
                     seq.user_id.c_str(), c, e.what());
      }
    }
  }
  if (missing_meta > 0) {
    std::fprintf(stderr, "warning: %d history items rendered without metadata\n",
                 missing_meta);
  }
  if (flagged_item_counts > 0) {
    std::fprintf(stderr, "warning: %d chains flagged with != 20 recommendations\n",
                 flagged_item_counts);
  }
  gvm::write_chains_jsonl(chains, art.chains);
  m.add_output(art.chains);
  finish_manifest(m, cfg);
  return summary;
}

std::vector<std::optional<providers::EmbeddingVector>> catalog_embeddings(
    const datasets::SplitBundle& bundle, providers::Provider& provider) {
  std::vector<std::optional<providers::EmbeddingVector>> catalog(bundle.vocab.size());
  std::vector<std::string> texts;
  for (std::size_t i = 1; i < bundle.vocab.size(); ++i) {
    const auto it = bundle.meta.find(bundle.vocab[i]);
    texts.push_back(item_text(bundle.vocab[i],
                              it == bundle.meta.end() ? nullptr : &it->second));
  }
  // batched embedding keeps the request count low for http providers
  const std::size_t batch = 64;
  std::size_t pos = 0;
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const std::size_t end = std::min(texts.size(), start + batch);
    auto vecs = provider.embed(
        std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                 texts.begin() + static_cast<std::ptrdiff_t>(end)));
    for (auto& v : vecs) catalog[1 + pos++] = std::move(v);
  }
  return catalog;
}

ValidateSummary gvm_validate_with(const config::RunConfig& cfg,
                                  providers::Provider& provider, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "gvm_validate");
  require_file(art.chains, "chains file");
  manifest::check_input_fresh(art.chains, cfg.paths.out_dir, force);
  auto bundle = load_bundle(cfg, force);
  auto chains = gvm::read_chains_jsonl(art.chains);
  m.add_input(art.chains);
  m.add_input(art.splits);

  auto catalog = catalog_embeddings(bundle, provider);

  // held-out target per user: the validation item (test stays blind)
  std::map<std::string, std::set<int>> user_targets;
  for (const auto& row : bundle.valid) {
    user_targets[row.user_id] = {datasets::SplitBundle::target_of(row)};
  }

  ValidateSummary summary;
  std::vector<gvm::ChainScore> scores;
  for (const auto& chain : chains) {
    auto it = user_targets.find(chain.source_user);
    if (it == user_targets.end()) continue;
    auto rec_embs = provider.embed(chain.recommendations);
    auto matched = gvm::match_recommendations(rec_embs, catalog, cfg.gvm.theta_match);
    auto score = gvm::score_chain(chain.id, matched, {it->second});
    summary.best_score = std::max(summary.best_score, score.score);
    scores.push_back(std::move(score));
    ++summary.scored;
  }
  gvm::write_scores_jsonl(scores, art.scores);
  m.add_output(art.scores);
  finish_manifest(m, cfg);
  return summary;
}

MineSummary gvm_mine_with(const config::RunConfig& cfg,
                          providers::Provider& provider, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "gvm_mine");
  require_file(art.chains, "chains file");
  require_file(art.scores, "scores file");
  manifest::check_input_fresh(art.chains, cfg.paths.out_dir, force);
  manifest::check_input_fresh(art.scores, cfg.paths.out_dir, force);
  auto chains = gvm::read_chains_jsonl(art.chains);
  auto score_rows = gvm::read_scores_jsonl(art.scores);
  m.add_input(art.chains);
  m.add_input(art.scores);

  std::map<std::string, double> score_by_id;
  for (const auto& s : score_rows) score_by_id[s.chain_id] = s.score;
  std::vector<double> scores;
  std::vector<std::string> paths;
  for (const auto& c : chains) {
    scores.push_back(score_by_id.count(c.id) ? score_by_id[c.id] : 0.0);
    paths.push_back(c.cot_path());
  }
  auto embeddings = provider.embed(paths);

  MineSummary summary;
  summary.input_chains = static_cast<int>(chains.size());

  auto kept = gvm::dedup_chains(embeddings, scores, cfg.gvm.gamma);
  summary.survivors = static_cast<int>(kept.size());
  std::vector<providers::EmbeddingVector> kept_embs;
  std::vector<double> kept_scores;
  std::vector<gvm::ReasoningChain> kept_chains;
  for (int idx : kept) {
    kept_embs.push_back(embeddings[static_cast<std::size_t>(idx)]);
    kept_scores.push_back(scores[static_cast<std::size_t>(idx)]);
    kept_chains.push_back(chains[static_cast<std::size_t>(idx)]);
  }

  const int n = static_cast<int>(kept_chains.size());
  if (n < 2) throw ScoterError("mine: need at least 2 surviving chains");
  const int k = gvm::choose_k(kept_embs, std::min(cfg.gvm.k_min, n),
                              std::min(cfg.gvm.k_max, n), cfg.seed);
  summary.chosen_k = k;
  auto candidates = gvm::cluster_chains(kept_embs, kept_scores, k, cfg.seed);
  const auto& selected =
      gvm::select_pattern(candidates, cfg.gvm.min_cluster_size);
  summary.selected_cluster = selected.cluster_id;

  auto exemplar_ids = gvm::extract_exemplars(selected, kept_embs, cfg.gvm.exemplars);
  std::vector<gvm::ReasoningChain> exemplars;
  for (int idx : exemplar_ids) {
    exemplars.push_back(kept_chains[static_cast<std::size_t>(idx)]);
  }
  auto tmpl = gvm::synthesize_template(exemplars, provider);
  summary.template_steps = tmpl.steps;

  json report;
  report["input_chains"] = summary.input_chains;
  report["pruned_by_dedup"] = summary.input_chains - summary.survivors;
  report["k"] = k;
  report["selected_cluster"] = selected.cluster_id;
  report["clusters"] = json::array();
  for (const auto& c : candidates) {
    json row;
    row["cluster_id"] = c.cluster_id;
    row["size"] = c.members.size();
    row["quality"] = c.quality;
    row["coherence"] = c.coherence;
    row["stability"] = c.stability;
    std::vector<std::string> member_ids;
    for (int idx : c.members) member_ids.push_back(kept_chains[static_cast<std::size_t>(idx)].id);
    row["member_ids"] = member_ids;
    report["clusters"].push_back(row);
  }
  {
    std::ofstream os(art.pattern_report, std::ios::trunc);
    os << report.dump(2) << '\n';
  }
  gvm::write_template_json(tmpl, art.template_file);
  m.add_output(art.pattern_report);
  m.add_output(art.template_file);
  finish_manifest(m, cfg);
  return summary;
}

EmbedSummary embed_with(const config::RunConfig& cfg,
                        providers::Provider& provider, bool force,
                        const gvm::PatternTemplate& tmpl,
                        const std::string& store_path,
                        const std::string& sidecar_path) {
  auto bundle = load_bundle(cfg, force);

  EmbedSummary summary;
  std::vector<distill::StepEmbeddingMatrix> matrices;
  std::vector<gvm::ReasoningChain> teacher_chains;
  for (const auto& seq : bundle.train) {
    auto chain = distill::generate_template_chain(seq, tmpl, provider,
                                                  bundle.vocab, bundle.meta);
    auto mat = distill::embed_steps(chain, provider);
    summary.k = mat.k;
    summary.d = mat.d;
    matrices.push_back(std::move(mat));
    teacher_chains.push_back(std::move(chain));
    ++summary.users;
  }
  distill::write_store(matrices, store_path);
  if (!sidecar_path.empty()) {
    gvm::write_chains_jsonl(teacher_chains, sidecar_path);
  }
  return summary;
}

}  // namespace

GenerateSummary run_gvm_generate(const config::RunConfig& cfg, bool force) {
  auto provider = make_provider(cfg);
  return gvm_generate_with(cfg, *provider, force);
}

ValidateSummary run_gvm_validate(const config::RunConfig& cfg, bool force) {
  auto provider = make_provider(cfg);
  return gvm_validate_with(cfg, *provider, force);
}

MineSummary run_gvm_mine(const config::RunConfig& cfg, bool force) {
  auto provider = make_provider(cfg);
  return gvm_mine_with(cfg, *provider, force);
}

EmbedSummary run_embed(const config::RunConfig& cfg, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "embed");
  require_file(art.template_file, "pattern template");
  manifest::check_input_fresh(art.template_file, cfg.paths.out_dir, force);
  auto tmpl = gvm::read_template_json(art.template_file);
  m.add_input(art.template_file);
  m.add_input(art.splits);

  auto provider = make_provider(cfg);
  auto summary = embed_with(cfg, *provider, force, tmpl, art.store, art.teacher_chains);
  m.add_output(art.store);
  m.add_output(art.teacher_chains);
  finish_manifest(m, cfg);
  return summary;
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

TrainSummary run_train(const config::RunConfig& cfg, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "train");
  auto bundle = load_bundle(cfg, force);
  m.add_input(art.splits);

  const auto variant = fusion::variant_from_string(cfg.variant);
  std::optional<distill::EmbeddingStore> store;
  if (variant != fusion::Variant::kBackboneOnly) {
    if (!std::filesystem::exists(art.store)) {
      throw ScoterError("pre-flight: embedding store missing at " + art.store +
                        " (run the embed command first)");
    }
    manifest::check_input_fresh(art.store, cfg.paths.out_dir, force);
    store = distill::EmbeddingStore::open(art.store);
    m.add_input(art.store);
  }

  fusion::TrainConfig tc = cfg.training;
  tc.variant = variant;
  tc.seed = cfg.seed;
  tc.backbone_config = backbone_config_for(cfg, static_cast<int>(bundle.vocab.size()));
  tc.fusion_config.n_heads = cfg.model.n_heads;
  tc.fusion_config.head_dim = cfg.model.head_dim;
  tc.fusion_config.nce_stage = cfg.nce_stage;
  tc.metrics_csv_path = art.metrics_csv;

  numerics::ParamStore params;
  auto result = fusion::train(bundle, store ? &*store : nullptr, tc, params);
  numerics::save_checkpoint(params, art.checkpoint);

  TrainSummary summary;
  summary.best_epoch = result.best_epoch;
  summary.best_valid_recall10 = result.best_valid_recall10;
  summary.epochs_run = static_cast<int>(result.history.size());

  m.add_output(art.checkpoint);
  m.add_output(art.metrics_csv);
  finish_manifest(m, cfg);
  return summary;
}

eval::EvalReport run_evaluate(const config::RunConfig& cfg, bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "evaluate");
  auto bundle = load_bundle(cfg, force);
  require_file(art.checkpoint, "checkpoint");
  manifest::check_input_fresh(art.checkpoint, cfg.paths.out_dir, force);
  m.add_input(art.splits);
  m.add_input(art.checkpoint);

  const auto variant = fusion::variant_from_string(cfg.variant);
  std::optional<distill::EmbeddingStore> store;
  fusion::FusionConfig fc;
  fc.n_heads = cfg.model.n_heads;
  fc.head_dim = cfg.model.head_dim;
  fc.nce_stage = cfg.nce_stage;
  if (variant != fusion::Variant::kBackboneOnly) {
    require_file(art.store, "embedding store");
    store = distill::EmbeddingStore::open(art.store);
    fc.k_steps = store->k();
    fc.embed_dim = store->d();
    m.add_input(art.store);
  }

  numerics::ParamStore params;
  numerics::load_checkpoint(params, art.checkpoint);
  auto model = fusion::Model::attach(
      variant, backbone_config_for(cfg, static_cast<int>(bundle.vocab.size())), fc,
      params);

  const int catalog = bundle.item_count();
  std::vector<int> k_values;
  for (int k : {5, 10, 20}) {
    if (k <= catalog) k_values.push_back(k);
  }
  auto report = fusion::evaluate_split(model, store ? &*store : nullptr,
                                       bundle.test, catalog, k_values,
                                       cfg.eval_filter_history);
  report.seed = cfg.seed;

  std::filesystem::create_directories(cfg.paths.reports_dir());
  {
    std::ofstream os(art.eval_report, std::ios::trunc);
    os << report.to_json() << '\n';
  }
  const bool fresh_csv = !std::filesystem::exists(art.ablation_csv);
  {
    std::ofstream os(art.ablation_csv, std::ios::app);
    if (fresh_csv) os << eval::EvalReport::csv_header() << '\n';
    os << report.to_csv_row() << '\n';
  }
  m.add_output(art.eval_report);
  m.add_output(art.ablation_csv);
  finish_manifest(m, cfg);
  return report;
}

// ---------------------------------------------------------------------------
// theory
// ---------------------------------------------------------------------------

TheorySummary run_theory(const config::RunConfig& cfg, bool force) {
  (void)force;
  Artifacts art(cfg);
  std::filesystem::create_directories(cfg.paths.reports_dir());
  auto m = start_manifest(cfg, "theory");
  const auto& tc = cfg.theory_config;

  TheorySummary summary;
  json report;

  auto dpi = theory::verify_dpi(tc.dpi_trials, cfg.seed);
  summary.dpi_holds = dpi.holds();
  report["dpi"] = {{"trials", dpi.trials},
                   {"violations", dpi.violations},
                   {"min_margin", dpi.min_margin},
                   {"failing_joints", dpi.failing_joints}};
  std::printf("[theory] dpi: %s (%d trials, min margin %.3e)\n",
              dpi.holds() ? "PASS" : "FAIL", dpi.trials, dpi.min_margin);

  auto lb = theory::verify_lower_bound_trials(tc.lower_bound_instances,
                                              tc.lower_bound_k, cfg.seed + 1);
  summary.lower_bound_holds = lb.holds();
  report["lower_bound"] = {{"instances", lb.instances},
                           {"violations", lb.violations},
                           {"min_margin", lb.min_margin},
                           {"failing_instances", lb.failing_instances}};
  std::printf("[theory] lower bound: %s (%d instances, min margin %.3e)\n",
              lb.holds() ? "PASS" : "FAIL", lb.instances, lb.min_margin);

  summary.collision_holds = true;
  report["collision"] = json::array();
  struct CollisionCase { int n_y; double rho, delta; };
  const CollisionCase cases[] = {{2, 1.0, tc.order.delta},
                                 {3, 1.0, tc.order.delta},
                                 {2, 0.5, 0.4},
                                 {3, 0.5, 0.4}};
  for (const auto& cc : cases) {
    auto col = theory::verify_collision_penalty(cc.n_y, cc.rho, cc.delta,
                                                tc.collision_sequences,
                                                cfg.seed + 2);
    const bool ok = col.pointwise_holds() && col.expectation_holds();
    summary.collision_holds = summary.collision_holds && ok;
    report["collision"].push_back({{"n_y", cc.n_y},
                                   {"rho", cc.rho},
                                   {"delta", cc.delta},
                                   {"grid_points", col.grid_points},
                                   {"violations", col.violations},
                                   {"min_max_tv", col.min_max_tv},
                                   {"expected_tv", col.expected_tv},
                                   {"rho_delta_half", col.rho_delta_half}});
    std::printf("[theory] collision |Y|=%d rho=%.2f delta=%.2f: %s (E[TV]=%.4f >= %.4f)\n",
                cc.n_y, cc.rho, cc.delta, ok ? "PASS" : "FAIL", col.expected_tv,
                col.rho_delta_half);
  }

  theory::OrderTaskSpec order_spec = tc.order;
  order_spec.seed = cfg.seed;
  auto order = theory::order_advantage_experiment(
      order_spec,
      {fusion::Variant::kFull, fusion::Variant::kNoPosition,
       fusion::Variant::kMeanPooled, fusion::Variant::kBackboneOnly},
      tc.order_seeds, tc.order_train);
  summary.order_bound_holds = order.bound_holds;
  summary.order_full_wins = order.full_wins_every_seed;
  report["order_advantage"] = json::parse(order.to_json());
  std::printf("[theory] order advantage: %s (mean gap %.4f vs rhs %.4f; full wins %s)\n",
              order.bound_holds ? "PASS" : "FAIL", order.mean_gap, order.mean_rhs,
              order.full_wins_every_seed ? "every seed" : "NOT every seed");

  {
    std::ofstream os(art.theory_report, std::ios::trunc);
    os << report.dump(2) << '\n';
  }
  m.add_output(art.theory_report);
  finish_manifest(m, cfg);
  return summary;
}

// ---------------------------------------------------------------------------
// compare-templates
// ---------------------------------------------------------------------------

namespace {

struct NamedTemplate {
  std::string name;
  gvm::PatternTemplate tmpl;
};

std::vector<NamedTemplate> load_templates(const config::RunConfig& cfg,
                                          const std::string& templates_dir) {
  Artifacts art(cfg);
  std::vector<NamedTemplate> out;
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(templates_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    out.push_back({std::filesystem::path(file).stem().string(),
                   gvm::read_template_json(file)});
  }
  if (std::filesystem::exists(art.template_file)) {
    out.push_back({"discovered", gvm::read_template_json(art.template_file)});
  }
  if (out.empty()) {
    throw ScoterError("compare-templates: no templates found in " + templates_dir);
  }
  return out;
}

}  // namespace

CompareSummary run_compare_templates(const config::RunConfig& cfg,
                                     const std::string& templates_dir,
                                     bool force) {
  Artifacts art(cfg);
  auto m = start_manifest(cfg, "compare_templates");
  auto bundle = load_bundle(cfg, force);
  m.add_input(art.splits);
  auto provider = make_provider(cfg);
  auto templates = load_templates(cfg, templates_dir);

  std::filesystem::create_directories(cfg.paths.reports_dir());
  std::ofstream csv(art.compare_csv, std::ios::trunc);
  csv << "template,steps,recall@5,recall@10,ndcg@5,ndcg@10\n";

  CompareSummary summary;
  for (const auto& [name, tmpl] : templates) {
    const std::string store_path =
        cfg.paths.out_dir + "/compare_store_" + name + ".bin";
    embed_with(cfg, *provider, force, tmpl, store_path, "");
    auto store = distill::EmbeddingStore::open(store_path);

    fusion::TrainConfig tc = cfg.training;  // identical budget per template
    tc.variant = fusion::Variant::kFull;
    tc.seed = cfg.seed;
    tc.backbone_config = backbone_config_for(cfg, static_cast<int>(bundle.vocab.size()));
    tc.fusion_config.n_heads = cfg.model.n_heads;
    tc.fusion_config.head_dim = cfg.model.head_dim;
    tc.fusion_config.nce_stage = cfg.nce_stage;

    numerics::ParamStore params;
    fusion::train(bundle, &store, tc, params);
    auto model = fusion::Model::attach(
        fusion::Variant::kFull, tc.backbone_config,
        fusion::FusionConfig{store.k(), store.d(), cfg.model.d_model,
                             cfg.model.n_heads, cfg.model.head_dim, cfg.nce_stage},
        params);
    const int catalog = bundle.item_count();
    std::vector<int> ks;
    for (int k : {5, 10}) {
      if (k <= catalog) ks.push_back(k);
    }
    auto report = fusion::evaluate_split(model, &store, bundle.test, catalog, ks);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f\n", name.c_str(),
                  tmpl.steps.size(), report.recall.at(5),
                  ks.size() > 1 ? report.recall.at(10) : 0.0, report.ndcg.at(5),
                  ks.size() > 1 ? report.ndcg.at(10) : 0.0);
    csv << buf;
    summary.recall5_by_template.emplace_back(name, report.recall.at(5));
  }
  csv.close();
  m.add_output(art.compare_csv);
  finish_manifest(m, cfg);
  return summary;
}

// ---------------------------------------------------------------------------
// make-fixtures
// ---------------------------------------------------------------------------

void run_make_fixtures(const config::RunConfig& cfg,
                       const std::string& templates_dir) {
  Artifacts art(cfg);
  auto recording =
      std::make_shared<RecordingProvider>(std::make_shared<DemoProvider>());

  // drive every provider-facing stage once, recording each exchange
  gvm_generate_with(cfg, *recording, /*force=*/true);
  gvm_validate_with(cfg, *recording, /*force=*/true);
  gvm_mine_with(cfg, *recording, /*force=*/true);

  auto tmpl = gvm::read_template_json(art.template_file);
  embed_with(cfg, *recording, true, tmpl, art.store, art.teacher_chains);

  if (!templates_dir.empty() && std::filesystem::exists(templates_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(templates_dir)) {
      if (entry.path().extension() != ".json") continue;
      auto manual = gvm::read_template_json(entry.path().string());
      const std::string tmp_store = cfg.paths.out_dir + "/fixture_probe_store.bin";
      embed_with(cfg, *recording, true, manual, tmp_store, "");
      std::filesystem::remove(tmp_store);
    }
  }

  recording->save(cfg.paths.fixtures);
}

}  // namespace scoter::pipeline
