// SPDX-License-Identifier: Apache-2.0

#include "scoter/gvm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "scoter/hash.hpp"
#include "scoter/rng.hpp"

namespace scoter::gvm {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const auto start = s.find_first_not_of(ws);
  if (start == std::string::npos) return {};
  const auto end = s.find_last_not_of(ws);
  return s.substr(start, end - start + 1);
}

/// Content between <tag> and </tag>; nullopt when the tag pair is absent.
std::optional<std::string> extract_tag(const std::string& text,
                                       const std::string& tag) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const auto a = text.find(open);
  if (a == std::string::npos) return std::nullopt;
  const auto b = text.find(close, a + open.size());
  if (b == std::string::npos) return std::nullopt;
  return text.substr(a + open.size(), b - a - open.size());
}

std::vector<std::string> split_arrow(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const auto arrow = text.find("->", pos);
    if (arrow == std::string::npos) {
      const auto last = trim(text.substr(pos));
      if (!last.empty()) parts.push_back(last);
      break;
    }
    const auto part = trim(text.substr(pos, arrow - pos));
    if (!part.empty()) parts.push_back(part);
    pos = arrow + 2;
  }
  return parts;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

std::string ReasoningChain::cot_path() const {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += " -> ";
    out += steps[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generate
// ---------------------------------------------------------------------------

PromptBuild build_generation_prompt(const datasets::UserSequence& seq,
                                    const std::vector<std::string>& vocab,
                                    const std::map<std::string, datasets::ItemMeta>& meta) {
  PromptBuild out;
  std::ostringstream os;
  os << "You are an expert in recommendation algorithms. Based on the user's "
        "historical behavior data, please infer a reasonable analysis and "
        "recommendation path, and predict 20 different product features that "
        "the user may be interested in the future.\n\n";
  os << "Requirements:\n"
        "1. First output <cot_path>, with a reasoning chain of at least two "
        "steps, each step <=8 words, connected with \"->\".\n"
        "2. <reason> must be placed after <cot_path>, and the content must "
        "strictly follow each step in <cot_path> to expand the reasoning one "
        "by one.\n"
        "3. Finally output 20 recommended product feature descriptions.\n\n";
  os << "Output format requirements:\n\n"
        "<cot_path>\n"
        "[Summarize the core reasoning path here: Step 1 -> Step 2 -> ... -> "
        "Item recommendation]\n"
        "</cot_path>\n\n"
        "<reason>\n"
        "[Explain the reasoning logic step by step according to the steps in "
        "cot_path]\n"
        "</reason>\n\n"
        "<recommendations>\n";
  for (int i = 1; i <= kRecommendationCount; ++i) {
    os << "<item>Detailed feature description of product " << i
       << ", including category, brand, function, characteristics, etc.</item>\n";
  }
  os << "</recommendations>\n\n";

  os << "User historical behavior (oldest first):\n";
  int position = 0;
  for (int idx : seq.items) {
    if (idx == datasets::kPadIndex) continue;
    ++position;
    const std::string& item_id = vocab.at(static_cast<std::size_t>(idx));
    auto it = meta.find(item_id);
    if (it == meta.end() || it->second.title.empty()) {
      ++out.missing_meta;
      os << position << ". (untitled item)\n";
    } else {
      os << position << ". " << it->second.title;
      if (!it->second.description.empty()) os << " - " << it->second.description;
      os << "\n";
    }
  }
  out.text = os.str();
  return out;
}

ReasoningChain parse_generation(const std::string& text) {
  ReasoningChain chain;
  auto cot = extract_tag(text, "cot_path");
  if (!cot) throw ParseError("parse_generation: missing <cot_path> block");
  chain.steps = split_arrow(*cot);
  if (chain.steps.size() < 2) {
    throw TooShortChainError("parse_generation: chain has " +
                             std::to_string(chain.steps.size()) +
                             " step(s), need >= 2");
  }
  if (auto reason = extract_tag(text, "reason")) {
    chain.reason_text = trim(*reason);
  }
  auto recs = extract_tag(text, "recommendations");
  if (!recs) throw ParseError("parse_generation: missing <recommendations> block");
  std::size_t pos = 0;
  while (true) {
    const auto a = recs->find("<item>", pos);
    if (a == std::string::npos) break;
    const auto b = recs->find("</item>", a + 6);
    if (b == std::string::npos) break;
    chain.recommendations.push_back(trim(recs->substr(a + 6, b - a - 6)));
    pos = b + 7;
  }
  chain.item_count_ok =
      chain.recommendations.size() == static_cast<std::size_t>(kRecommendationCount);
  return chain;
}

std::vector<int> dedup_chains(const std::vector<providers::EmbeddingVector>& chain_embeddings,
                              const std::vector<double>& scores, double gamma) {
  if (gamma <= 0.0 || gamma > 1.0) {
    throw ScoterError("dedup_chains: gamma must be in (0,1]");
  }
  if (chain_embeddings.size() != scores.size()) {
    throw ShapeError("dedup_chains: scores/embeddings length mismatch");
  }
  std::vector<int> order(chain_embeddings.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  std::vector<int> kept;
  for (int idx : order) {
    bool duplicate = false;
    for (int k : kept) {
      const double cos = chain_embeddings[static_cast<std::size_t>(idx)].dot(
          chain_embeddings[static_cast<std::size_t>(k)]);
      if (cos >= gamma) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(idx);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Validate
// ---------------------------------------------------------------------------

double recall_at_20(const std::vector<int>& matched_items,
                    const std::set<int>& targets) {
  if (targets.empty()) throw ScoterError("recall_at_20: empty target set");
  std::set<int> unique_hits;
  for (int item : matched_items) {
    if (item != kNoMatch && targets.count(item)) unique_hits.insert(item);
  }
  return static_cast<double>(unique_hits.size()) /
         static_cast<double>(targets.size());
}

std::vector<int> match_recommendations(
    const std::vector<providers::EmbeddingVector>& rec_embeddings,
    const std::vector<std::optional<providers::EmbeddingVector>>& catalog,
    double theta_match) {
  std::vector<int> out;
  out.reserve(rec_embeddings.size());
  for (const auto& rec : rec_embeddings) {
    int best = kNoMatch;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t idx = 1; idx < catalog.size(); ++idx) {
      if (!catalog[idx]) continue;
      const double cos = rec.dot(*catalog[idx]);
      if (cos > best_cos) {
        best_cos = cos;
        best = static_cast<int>(idx);
      }
    }
    if (best == kNoMatch || best_cos < theta_match) best = kNoMatch;
    out.push_back(best);
  }
  return out;
}

ChainScore score_chain(const std::string& chain_id,
                       const std::vector<int>& matched_items,
                       const std::vector<std::set<int>>& per_user_targets) {
  if (per_user_targets.empty()) {
    throw ScoterError("score_chain: need at least one evaluation user");
  }
  ChainScore cs;
  cs.chain_id = chain_id;
  double total = 0.0;
  for (const auto& targets : per_user_targets) {
    const double r = recall_at_20(matched_items, targets);
    cs.per_user_recall.push_back(r);
    total += r;
  }
  cs.score = total / static_cast<double>(per_user_targets.size());
  return cs;
}

// ---------------------------------------------------------------------------
// Mine: k-means
// ---------------------------------------------------------------------------

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k,
                    std::uint64_t seed, int max_iterations, double tolerance) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || k > n) throw ScoterError("kmeans: need 1 <= k <= n_points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("kmeans: inconsistent dimensions");
  }
  Rng rng(seed);
  KMeansResult res;
  res.centroids.reserve(static_cast<std::size_t>(k));

  // k-means++ seeding
  res.centroids.push_back(points[rng.uniform_index(static_cast<std::uint64_t>(n))]);
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(res.centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : res.centroids) {
        best = std::min(best, sq_dist(points[static_cast<std::size_t>(i)], c));
      }
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining mass on existing centroids; spread uniformly
      res.centroids.push_back(points[rng.uniform_index(static_cast<std::uint64_t>(n))]);
      continue;
    }
    res.centroids.push_back(points[rng.weighted_index(d2)]);
  }

  res.assignment.assign(static_cast<std::size_t>(n), 0);
  for (res.iterations = 1; res.iterations <= max_iterations; ++res.iterations) {
    // assign
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double d = sq_dist(points[static_cast<std::size_t>(i)],
                                 res.centroids[static_cast<std::size_t>(c)]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = best_c;
    }
    // update
    std::vector<std::vector<double>> fresh(static_cast<std::size_t>(k),
                                           std::vector<double>(dim, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(c)];
      for (std::size_t j = 0; j < dim; ++j) {
        fresh[static_cast<std::size_t>(c)][j] += points[static_cast<std::size_t>(i)][j];
      }
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        // standard repair: re-seed from the point farthest from its centroid
        int farthest = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              sq_dist(points[static_cast<std::size_t>(i)],
                      res.centroids[static_cast<std::size_t>(
                          res.assignment[static_cast<std::size_t>(i)])]);
          if (d > far_d) {
            far_d = d;
            farthest = i;
          }
        }
        fresh[static_cast<std::size_t>(c)] = points[static_cast<std::size_t>(farthest)];
        res.assignment[static_cast<std::size_t>(farthest)] = c;
      } else {
        for (std::size_t j = 0; j < dim; ++j) {
          fresh[static_cast<std::size_t>(c)][j] /= counts[static_cast<std::size_t>(c)];
        }
      }
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(sq_dist(res.centroids[static_cast<std::size_t>(c)],
                                                fresh[static_cast<std::size_t>(c)])));
    }
    res.centroids = std::move(fresh);
    if (shift < tolerance) {
      res.converged = true;
      break;
    }
  }
  // final assignment against the converged centroids
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      const double d = sq_dist(points[static_cast<std::size_t>(i)],
                               res.centroids[static_cast<std::size_t>(c)]);
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    res.assignment[static_cast<std::size_t>(i)] = best_c;
  }
  return res;
}

double mean_silhouette(const std::vector<std::vector<double>>& points,
                       const std::vector<int>& assignment, int k) {
  const int n = static_cast<int>(points.size());
  if (k < 2) return 0.0;
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++counts[static_cast<std::size_t>(a)];

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int ci = assignment[static_cast<std::size_t>(i)];
    if (counts[static_cast<std::size_t>(ci)] <= 1) continue;  // s(i) = 0
    std::vector<double> mean_dist(static_cast<std::size_t>(k), 0.0);
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_dist[static_cast<std::size_t>(assignment[static_cast<std::size_t>(j)])] +=
          std::sqrt(sq_dist(points[static_cast<std::size_t>(i)],
                            points[static_cast<std::size_t>(j)]));
    }
    const double a = mean_dist[static_cast<std::size_t>(ci)] /
                     (counts[static_cast<std::size_t>(ci)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == ci || counts[static_cast<std::size_t>(c)] == 0) continue;
      b = std::min(b, mean_dist[static_cast<std::size_t>(c)] /
                          counts[static_cast<std::size_t>(c)]);
    }
    if (std::isfinite(b) && std::max(a, b) > 0.0) {
      total += (b - a) / std::max(a, b);
    }
  }
  return total / n;
}

std::vector<PatternCandidate> cluster_chains(
    const std::vector<providers::EmbeddingVector>& chain_embeddings,
    const std::vector<double>& scores, int n_clusters, std::uint64_t seed) {
  if (chain_embeddings.size() != scores.size()) {
    throw ShapeError("cluster_chains: scores/embeddings length mismatch");
  }
  std::vector<std::vector<double>> points;
  points.reserve(chain_embeddings.size());
  for (const auto& e : chain_embeddings) points.push_back(e.values);

  auto km = kmeans(points, n_clusters, seed);
  std::vector<PatternCandidate> out(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) {
    out[static_cast<std::size_t>(c)].cluster_id = c;
    out[static_cast<std::size_t>(c)].centroid = km.centroids[static_cast<std::size_t>(c)];
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[static_cast<std::size_t>(km.assignment[i])].members.push_back(static_cast<int>(i));
  }
  for (auto& cand : out) {
    if (cand.members.empty()) continue;
    double sum = 0.0;
    for (int m : cand.members) sum += scores[static_cast<std::size_t>(m)];
    cand.quality = sum / static_cast<double>(cand.members.size());

    double var = 0.0;
    for (int m : cand.members) {
      const double d = scores[static_cast<std::size_t>(m)] - cand.quality;
      var += d * d;
    }
    cand.stability = cand.members.size() > 1
                         ? std::sqrt(var / static_cast<double>(cand.members.size() - 1))
                         : 0.0;

    double cnorm = std::sqrt(dot(cand.centroid, cand.centroid));
    double coh = 0.0;
    for (int m : cand.members) {
      const auto& v = points[static_cast<std::size_t>(m)];
      const double vnorm = std::sqrt(dot(v, v));
      coh += cnorm > 0.0 && vnorm > 0.0 ? dot(v, cand.centroid) / (cnorm * vnorm) : 0.0;
    }
    cand.coherence = coh / static_cast<double>(cand.members.size());
  }
  return out;
}

int choose_k(const std::vector<providers::EmbeddingVector>& chain_embeddings,
             int k_min, int k_max, std::uint64_t seed) {
  const int n = static_cast<int>(chain_embeddings.size());
  std::vector<std::vector<double>> points;
  points.reserve(chain_embeddings.size());
  for (const auto& e : chain_embeddings) points.push_back(e.values);

  k_min = std::max(2, std::min(k_min, n));
  k_max = std::max(k_min, std::min(k_max, n));
  int best_k = k_min;
  double best_s = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    auto km = kmeans(points, k, seed);
    const double s = mean_silhouette(points, km.assignment, k);
    if (s > best_s) {
      best_s = s;
      best_k = k;
    }
  }
  return best_k;
}

const PatternCandidate& select_pattern(const std::vector<PatternCandidate>& candidates,
                                       int min_cluster_size, double eps_q) {
  const PatternCandidate* best = nullptr;
  double top_quality = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (static_cast<int>(c.members.size()) >= min_cluster_size) {
      top_quality = std::max(top_quality, c.quality);
    }
  }
  if (!std::isfinite(top_quality)) {
    throw ScoterError("select_pattern: no cluster reaches min size " +
                      std::to_string(min_cluster_size));
  }
  for (const auto& c : candidates) {
    if (static_cast<int>(c.members.size()) < min_cluster_size) continue;
    if (c.quality < top_quality - eps_q) continue;  // outside the quality band
    if (!best) {
      best = &c;
      continue;
    }
    if (c.coherence != best->coherence) {
      if (c.coherence > best->coherence) best = &c;
    } else if (c.stability != best->stability) {
      if (c.stability < best->stability) best = &c;
    }  // else: keep the lower cluster id (iteration order)
  }
  return *best;
}

std::vector<int> extract_exemplars(const PatternCandidate& pattern,
                                   const std::vector<providers::EmbeddingVector>& chain_embeddings,
                                   int top_n) {
  if (pattern.members.empty()) {
    throw ScoterError("extract_exemplars: empty pattern");
  }
  const double cnorm = std::sqrt(dot(pattern.centroid, pattern.centroid));
  std::vector<std::pair<double, int>> ranked;
  for (int m : pattern.members) {
    const auto& v = chain_embeddings[static_cast<std::size_t>(m)].values;
    const double vnorm = std::sqrt(dot(v, v));
    const double cos = cnorm > 0.0 && vnorm > 0.0
                           ? dot(v, pattern.centroid) / (cnorm * vnorm)
                           : 0.0;
    ranked.emplace_back(cos, m);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  const int take = std::min<int>(top_n, static_cast<int>(ranked.size()));
  for (int i = 0; i < take; ++i) out.push_back(ranked[static_cast<std::size_t>(i)].second);
  return out;
}

std::string build_meta_prompt(const std::vector<std::string>& exemplar_cot_paths) {
  std::ostringstream os;
  os << "You are an expert in recommendation algorithms. Below are "
     << exemplar_cot_paths.size()
     << " reasoning paths that produced high-quality recommendations. "
        "Synthesize the single shared logical structure they follow.\n\n";
  for (std::size_t i = 0; i < exemplar_cot_paths.size(); ++i) {
    os << (i + 1) << ". " << exemplar_cot_paths[i] << "\n";
  }
  os << "\nReply with one line: the shared abstract steps, connected with "
        "\"->\". Use at least two steps and no other text.\n";
  return os.str();
}

std::vector<std::string> parse_template_steps(const std::string& reply) {
  // keep only the first non-empty line; models tend to add commentary
  std::istringstream is(reply);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.find("->") == std::string::npos) continue;
    return split_arrow(line);
  }
  return {};
}

PatternTemplate synthesize_template(const std::vector<ReasoningChain>& exemplars,
                                    providers::Provider& provider) {
  if (exemplars.empty()) {
    throw ScoterError("synthesize_template: need at least one exemplar");
  }
  std::vector<std::string> paths;
  paths.reserve(exemplars.size());
  for (const auto& c : exemplars) paths.push_back(c.cot_path());

  providers::GenRequest req;
  req.prompt = build_meta_prompt(paths);
  req.temperature = 0.0;
  req.top_p = 1.0;
  const std::string reply = provider.generate(req);

  PatternTemplate tmpl;
  tmpl.steps = parse_template_steps(reply);
  if (tmpl.steps.size() < 2) {
    throw TemplateSynthesisError(
        "synthesize_template: unparseable reply (need >= 2 \"->\" steps): " + reply);
  }
  for (const auto& c : exemplars) tmpl.exemplar_ids.push_back(c.id);
  tmpl.synthesis_prompt_hash = sha256_hex(req.prompt);
  return tmpl;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

void write_chains_jsonl(const std::vector<ReasoningChain>& chains,
                        const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& c : chains) {
    json j;
    j["id"] = c.id;
    j["source_user"] = c.source_user;
    j["steps"] = c.steps;
    j["reason"] = c.reason_text;
    j["recommendations"] = c.recommendations;
    j["item_count_ok"] = c.item_count_ok;
    os << j.dump() << '\n';
  }
}

std::vector<ReasoningChain> read_chains_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<ReasoningChain> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ReasoningChain c;
    c.id = j.at("id").get<std::string>();
    c.source_user = j.at("source_user").get<std::string>();
    c.steps = j.at("steps").get<std::vector<std::string>>();
    c.reason_text = j.value("reason", "");
    c.recommendations = j.at("recommendations").get<std::vector<std::string>>();
    c.item_count_ok = j.value("item_count_ok", true);
    out.push_back(std::move(c));
  }
  return out;
}

void write_scores_jsonl(const std::vector<ChainScore>& scores,
                        const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  for (const auto& s : scores) {
    json j;
    j["chain_id"] = s.chain_id;
    j["per_user_recall"] = s.per_user_recall;
    j["score"] = s.score;
    os << j.dump() << '\n';
  }
}

std::vector<ChainScore> read_scores_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<ChainScore> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ChainScore s;
    s.chain_id = j.at("chain_id").get<std::string>();
    s.per_user_recall = j.at("per_user_recall").get<std::vector<double>>();
    s.score = j.at("score").get<double>();
    out.push_back(std::move(s));
  }
  return out;
}

void write_template_json(const PatternTemplate& tmpl, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  json j;
  j["steps"] = tmpl.steps;
  j["exemplar_ids"] = tmpl.exemplar_ids;
  j["synthesis_prompt_hash"] = tmpl.synthesis_prompt_hash;
  os << j.dump(2) << '\n';
}

PatternTemplate read_template_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  json j = json::parse(is);
  PatternTemplate tmpl;
  tmpl.steps = j.at("steps").get<std::vector<std::string>>();
  tmpl.exemplar_ids = j.value("exemplar_ids", std::vector<std::string>{});
  tmpl.synthesis_prompt_hash = j.value("synthesis_prompt_hash", "");
  if (tmpl.steps.size() < 2) {
    throw DataError("template: fewer than 2 steps in " + path);
  }
  return tmpl;
}

}  // namespace scoter::gvm
