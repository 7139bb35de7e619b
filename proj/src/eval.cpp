// SPDX-License-Identifier: Apache-2.0

#include "scoter/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "scoter/common.hpp"

namespace scoter::eval {

int rank_of(const std::vector<double>& item_scores, int target) {
  if (target < 1 || target > static_cast<int>(item_scores.size())) {
    throw ScoterError("rank_of: target outside catalog");
  }
  const double target_score = item_scores[static_cast<std::size_t>(target - 1)];
  int rank = 1;
  for (int i = 0; i < static_cast<int>(item_scores.size()); ++i) {
    const int item = i + 1;
    if (item == target) continue;
    const double s = item_scores[static_cast<std::size_t>(i)];
    if (s > target_score || (s == target_score && item < target)) ++rank;
  }
  return rank;
}

std::vector<int> rank_items(const std::vector<double>& item_scores) {
  std::vector<int> items(item_scores.size());
  std::iota(items.begin(), items.end(), 1);
  std::stable_sort(items.begin(), items.end(), [&](int a, int b) {
    const double sa = item_scores[static_cast<std::size_t>(a - 1)];
    const double sb = item_scores[static_cast<std::size_t>(b - 1)];
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return items;
}

double recall_at_k(const std::vector<int>& ranked_items, int target, int k) {
  if (k > static_cast<int>(ranked_items.size())) {
    throw ScoterError("recall_at_k: K exceeds catalog size");
  }
  for (int i = 0; i < k; ++i) {
    if (ranked_items[static_cast<std::size_t>(i)] == target) return 1.0;
  }
  return 0.0;
}

double ndcg_at_k(const std::vector<int>& ranked_items, int target, int k) {
  if (k > static_cast<int>(ranked_items.size())) {
    throw ScoterError("ndcg_at_k: K exceeds catalog size");
  }
  for (int i = 0; i < k; ++i) {
    if (ranked_items[static_cast<std::size_t>(i)] == target) {
      return 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  return 0.0;
}

EvalReport evaluate(const ScoreFn& score_fn,
                    const std::vector<datasets::UserSequence>& holdout_rows,
                    int catalog_size, const std::vector<int>& k_values,
                    bool filter_history) {
  if (holdout_rows.empty()) throw ScoterError("evaluate: no holdout rows");
  for (int k : k_values) {
    if (k > catalog_size) {
      throw ScoterError("evaluate: K=" + std::to_string(k) + " exceeds catalog " +
                        std::to_string(catalog_size));
    }
  }
  EvalReport report;
  for (int k : k_values) {
    report.recall[k] = 0.0;
    report.ndcg[k] = 0.0;
  }
  const double kFiltered = -std::numeric_limits<double>::infinity();
  for (const auto& row : holdout_rows) {
    const int target = datasets::SplitBundle::target_of(row);
    const auto input = datasets::SplitBundle::input_of(row);
    auto scores = score_fn(input, row.user_id);
    if (static_cast<int>(scores.size()) != catalog_size) {
      throw ShapeError("evaluate: score vector size != catalog size");
    }
    if (filter_history) {
      for (int item : input.items) {
        if (item != datasets::kPadIndex && item != target) {
          scores[static_cast<std::size_t>(item - 1)] = kFiltered;
        }
      }
    }
    const int rank = rank_of(scores, target);
    for (int k : k_values) {
      if (rank <= k) {
        report.recall[k] += 1.0;
        report.ndcg[k] += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
      }
    }
  }
  report.user_count = static_cast<int>(holdout_rows.size());
  for (int k : k_values) {
    report.recall[k] /= report.user_count;
    report.ndcg[k] /= report.user_count;
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  for (const auto& [k, v] : recall) j["recall"][std::to_string(k)] = v;
  for (const auto& [k, v] : ndcg) j["ndcg"][std::to_string(k)] = v;
  j["user_count"] = user_count;
  j["variant"] = variant;
  j["seed"] = seed;
  return j.dump(2);
}

std::string EvalReport::csv_header() {
  return "variant,seed,users,recall@5,recall@10,recall@20,ndcg@5,ndcg@10,ndcg@20";
}

std::string EvalReport::to_csv_row() const {
  auto get = [](const std::map<int, double>& m, int k) {
    auto it = m.find(k);
    return it == m.end() ? std::nan("") : it->second;
  };
  std::ostringstream os;
  os << variant << ',' << seed << ',' << user_count;
  char buf[32];
  for (const auto* metric : {&recall, &ndcg}) {
    for (int k : {5, 10, 20}) {
      std::snprintf(buf, sizeof(buf), ",%.6f", get(*metric, k));
      os << buf;
    }
  }
  return os.str();
}

}  // namespace scoter::eval
