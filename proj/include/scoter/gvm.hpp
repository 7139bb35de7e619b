#pragma once

// SPDX-License-Identifier: Apache-2.0

// Generate-Validate-Mine: produce candidate reasoning chains per user,
// score them by empirical Recall@20 against held-out targets, prune
// near-duplicates, cluster into pattern candidates, select the strongest
// pattern, and abstract it into a symbolic step template.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scoter/common.hpp"
#include "scoter/datasets.hpp"
#include "scoter/providers.hpp"

namespace scoter::gvm {

/// Completion parsed, but the chain has fewer than two steps.
struct TooShortChainError : ParseError {
  using ParseError::ParseError;
};

/// Template synthesis reply could not be parsed; carries the raw reply.
struct TemplateSynthesisError : ParseError {
  using ParseError::ParseError;
};

inline constexpr int kRecommendationCount = 20;
inline constexpr int kNoMatch = -1;  // sentinel item index, can never hit

struct ReasoningChain {
  std::string id;
  std::string source_user;
  std::vector<std::string> steps;  // k >= 2
  std::string reason_text;
  std::vector<std::string> recommendations;
  bool item_count_ok = true;  // false when != 20 items were produced

  std::string cot_path() const;  // steps joined with " -> "
};

struct ChainScore {
  std::string chain_id;
  std::vector<double> per_user_recall;
  double score = 0.0;  // mean Recall@20
};

struct PatternCandidate {
  int cluster_id = 0;
  std::vector<int> members;  // indices into the chain list
  std::vector<double> centroid;
  double quality = 0.0;    // mean member score
  double coherence = 0.0;  // mean member-to-centroid cosine
  double stability = 0.0;  // sample std of member scores, lower is better
};

struct PatternTemplate {
  std::vector<std::string> steps;
  std::vector<std::string> exemplar_ids;
  std::string synthesis_prompt_hash;
};

// ---------------------------------------------------------------------------
// Generate
// ---------------------------------------------------------------------------

struct PromptBuild {
  std::string text;
  int missing_meta = 0;  // items rendered with the "(untitled item)" fallback
};

/// Three-block generation prompt: requirements list, <cot_path>, <reason>,
/// <recommendations> with 20 <item> slots, then the user's history.
PromptBuild build_generation_prompt(const datasets::UserSequence& seq,
                                    const std::vector<std::string>& vocab,
                                    const std::map<std::string, datasets::ItemMeta>& meta);

/// Parses a completion into a chain. Missing <cot_path> or
/// <recommendations> throws ParseError naming the tag; fewer than two steps
/// throws TooShortChainError; an item count != 20 keeps the chain flagged.
ReasoningChain parse_generation(const std::string& text);

/// Greedy near-duplicate pruning in score-descending order (ties by list
/// position, i.e. chain id order): a chain survives iff its embedding has
/// cosine < gamma against every survivor so far. Returns surviving indices
/// in the greedy visit order.
std::vector<int> dedup_chains(const std::vector<providers::EmbeddingVector>& chain_embeddings,
                              const std::vector<double>& scores, double gamma);

// ---------------------------------------------------------------------------
// Validate
// ---------------------------------------------------------------------------

/// |top-20 matched items ∩ targets| / |targets|. Targets must be nonempty.
double recall_at_20(const std::vector<int>& matched_items,
                    const std::set<int>& targets);

/// Maps each recommendation text to its nearest catalog item by cosine;
/// similarity below `theta_match` maps to kNoMatch. `catalog` is indexed by
/// item index (entry 0 = pad, ignored; entries may be empty = unmatchable).
std::vector<int> match_recommendations(
    const std::vector<providers::EmbeddingVector>& rec_embeddings,
    const std::vector<std::optional<providers::EmbeddingVector>>& catalog,
    double theta_match = 0.6);

/// Mean Recall@20 of one recommendation list over the evaluation users.
ChainScore score_chain(const std::string& chain_id,
                       const std::vector<int>& matched_items,
                       const std::vector<std::set<int>>& per_user_targets);

// ---------------------------------------------------------------------------
// Mine
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<std::vector<double>> centroids;
  int iterations = 0;
  bool converged = false;
};

/// k-means with k-means++ seeding on unit vectors; empty clusters are
/// re-seeded from the farthest point. Deterministic for a fixed seed.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    std::uint64_t seed, int max_iterations = 100,
                    double tolerance = 1e-6);

/// Mean silhouette score of a clustering (Euclidean distances).
double mean_silhouette(const std::vector<std::vector<double>>& points,
                       const std::vector<int>& assignment, int k);

/// Clusters chain embeddings and attaches quality/coherence/stability.
std::vector<PatternCandidate> cluster_chains(
    const std::vector<providers::EmbeddingVector>& chain_embeddings,
    const std::vector<double>& scores, int n_clusters, std::uint64_t seed);

/// Silhouette sweep over k in [k_min, k_max] (clamped to the point count).
int choose_k(const std::vector<providers::EmbeddingVector>& chain_embeddings,
             int k_min, int k_max, std::uint64_t seed);

/// Primary key quality desc; candidates within eps_q of the best quality
/// are re-ranked by coherence desc, then stability asc, then cluster id.
/// Candidates below `min_cluster_size` are ignored; none left -> error.
const PatternCandidate& select_pattern(const std::vector<PatternCandidate>& candidates,
                                       int min_cluster_size = 2,
                                       double eps_q = 0.005);

/// Top-N member indices by cosine to the centroid, ties by member index.
/// Fewer than N members returns all of them.
std::vector<int> extract_exemplars(const PatternCandidate& pattern,
                                   const std::vector<providers::EmbeddingVector>& chain_embeddings,
                                   int top_n = 10);

/// Meta-prompt that asks for the shared "->"-joined logical structure.
std::string build_meta_prompt(const std::vector<std::string>& exemplar_cot_paths);

/// Runs the meta-prompt through the provider and parses the reply as an
/// "->"-joined template with >= 2 steps. Unparseable replies throw
/// TemplateSynthesisError with the raw reply attached.
PatternTemplate synthesize_template(const std::vector<ReasoningChain>& exemplars,
                                    providers::Provider& provider);

/// Parses a template string "A -> B -> C"; shared with fixture templates.
std::vector<std::string> parse_template_steps(const std::string& reply);

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

void write_chains_jsonl(const std::vector<ReasoningChain>& chains,
                        const std::string& path);
std::vector<ReasoningChain> read_chains_jsonl(const std::string& path);

void write_scores_jsonl(const std::vector<ChainScore>& scores,
                        const std::string& path);
std::vector<ChainScore> read_scores_jsonl(const std::string& path);

void write_template_json(const PatternTemplate& tmpl, const std::string& path);
PatternTemplate read_template_json(const std::string& path);

}  // namespace scoter::gvm
