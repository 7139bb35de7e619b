#pragma once

// SPDX-License-Identifier: Apache-2.0

// Interaction-log ingestion and the preprocessing protocol: 5-core
// filtering, length-20 normalization (most recent items kept), and the
// leave-one-out split. Also hosts the seeded synthetic corpus generator
// used by the offline acceptance runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scoter/rng.hpp"

namespace scoter::datasets {

inline constexpr int kPadIndex = 0;
inline constexpr int kSeqLen = 20;

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

struct ItemMeta {
  std::string title;
  std::string description;
};

/// Fixed-length view of a user's history. Padded positions carry index 0
/// on the left; real items keep chronological order on the right.
struct UserSequence {
  std::string user_id;
  std::vector<int> items;  // length kSeqLen
  int pad_count = 0;

  int real_count() const { return static_cast<int>(items.size()) - pad_count; }
  /// Real items only, oldest first.
  std::vector<int> real_items() const;
  /// Last real item; throws on all-pad sequences.
  int last_item() const;
};

struct SplitBundle {
  // train rows: the context region (items minus the last two), normalized.
  // valid/test rows: context plus the held-out target as the final real
  // item, normalized; the consumer peels the target off the end.
  std::vector<UserSequence> train;
  std::vector<UserSequence> valid;
  std::vector<UserSequence> test;

  std::vector<std::string> vocab;  // index -> item id; [0] reserved for pad
  std::map<std::string, int> vocab_index;
  std::map<std::string, ItemMeta> meta;  // keyed by item id, optional

  int excluded_users = 0;  // users with fewer than 3 real items

  int item_count() const { return static_cast<int>(vocab.size()) - 1; }
  /// Held-out target of a valid/test row (its last real item).
  static int target_of(const UserSequence& row);
  /// Model input of a valid/test row: everything before the target,
  /// renormalized to kSeqLen.
  static UserSequence input_of(const UserSequence& row);
};

struct CorpusStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double avg_length = 0.0;
};

// ---------------------------------------------------------------------------
// Protocol operations
// ---------------------------------------------------------------------------

/// Iterates user/item removal until every survivor has >= 5 interactions.
/// Deterministic; preserves input order of surviving rows. An empty result
/// is allowed (caller decides how loudly to warn).
std::vector<Interaction> five_core_filter(std::vector<Interaction> interactions,
                                          int min_count = 5);

CorpusStats corpus_stats(const std::vector<Interaction>& interactions);

/// Pads or truncates to `target_len`, keeping the most recent items.
/// Throws DataError on an empty item list.
UserSequence normalize_sequence(const std::string& user_id,
                                const std::vector<int>& items,
                                int target_len = kSeqLen);

/// Groups interactions per user and orders them by timestamp; ties keep
/// input file order (stable sort). Users emitted in lexicographic order.
std::vector<std::pair<std::string, std::vector<std::string>>> group_by_user(
    const std::vector<Interaction>& interactions);

/// Full pipeline from filtered interactions to a split bundle. Vocabulary
/// indices are assigned in lexicographic item-id order starting at 1.
SplitBundle leave_one_out_split(const std::vector<Interaction>& interactions,
                                std::map<std::string, ItemMeta> meta = {});

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::uint64_t seed = 1;
  int n_users = 100;
  int n_items = 50;
  int n_topics = 5;
  /// Probability that the next item is drawn from the user's topic rather
  /// than uniformly from the whole catalog.
  double topic_concentration = 0.8;
  int min_len = 5;
  int max_len = 12;
};

/// Deterministic latent-topic corpus; same spec => identical interactions.
std::vector<Interaction> synth_interactions(const SynthSpec& spec);

/// Convenience wrapper: synthesize, then split (no 5-core; synthetic data
/// is already dense enough by construction).
SplitBundle synth_corpus(const SynthSpec& spec);

// ---------------------------------------------------------------------------
// Ingestion formats
// ---------------------------------------------------------------------------

/// Canonical CSV: `user_id,item_id,timestamp`, optional header line.
std::vector<Interaction> read_canonical_csv(const std::string& path);

/// Amazon ratings dump: `user,item,rating,timestamp` without header.
std::vector<Interaction> read_amazon_ratings_csv(const std::string& path);

/// Yelp review JSONL: objects with user_id, business_id and date/timestamp.
std::vector<Interaction> read_yelp_reviews_jsonl(const std::string& path);

/// Item metadata JSONL: {"item_id":..., "title":..., "description":...}.
std::map<std::string, ItemMeta> read_metadata_jsonl(const std::string& path);

void write_canonical_csv(const std::vector<Interaction>& interactions,
                         const std::string& path);

// Bundle persistence: one sequence per JSONL line
// {"user":..., "items":[...], "pad_count":..., "split":"train|valid|test"},
// plus a sidecar vocabulary array and optional metadata JSONL.
void write_split_jsonl(const SplitBundle& bundle, const std::string& path);
void write_vocab_json(const SplitBundle& bundle, const std::string& path);
SplitBundle read_split_bundle(const std::string& split_path,
                              const std::string& vocab_path,
                              const std::string& meta_path = "");

}  // namespace scoter::datasets
