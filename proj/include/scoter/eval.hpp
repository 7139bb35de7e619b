#pragma once

// SPDX-License-Identifier: Apache-2.0

// Full-catalog ranking metrics for the leave-one-out protocol. Every user
// contributes a single held-out target; recall@K is the top-K hit
// indicator and NDCG@K is 1/log2(rank+1) with ideal DCG 1.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "scoter/datasets.hpp"

namespace scoter::eval {

struct EvalReport {
  std::map<int, double> recall;  // K -> mean recall@K
  std::map<int, double> ndcg;    // K -> mean ndcg@K
  int user_count = 0;
  std::string variant;
  std::uint64_t seed = 0;

  std::string to_json() const;
  /// CSV row: variant,seed,users,recall@5,recall@10,recall@20,ndcg@...
  std::string to_csv_row() const;
  static std::string csv_header();
};

/// 1-based rank of `target` given catalog scores (entry i scores item
/// index i+1). Ties break by ascending item index.
int rank_of(const std::vector<double>& item_scores, int target);

/// Full ranking of item indices, best first, same tie rule (test oracle
/// and report plumbing; rank_of is the fast path).
std::vector<int> rank_items(const std::vector<double>& item_scores);

double recall_at_k(const std::vector<int>& ranked_items, int target, int k);
double ndcg_at_k(const std::vector<int>& ranked_items, int target, int k);

/// Scores the full catalog for one holdout row's input context.
using ScoreFn = std::function<std::vector<double>(const datasets::UserSequence& input,
                                                  const std::string& user_id)>;

/// Ranks every holdout row with `score_fn` and averages the metrics.
/// K values above the catalog size throw. When `filter_history` is set,
/// items already present in the input context are pushed out of the
/// ranking (full-ranking protocols leave it off).
EvalReport evaluate(const ScoreFn& score_fn,
                    const std::vector<datasets::UserSequence>& holdout_rows,
                    int catalog_size, const std::vector<int>& k_values = {5, 10, 20},
                    bool filter_history = false);

}  // namespace scoter::eval
