// SPDX-License-Identifier: Apache-2.0

#include "scoter/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "scoter/common.hpp"

namespace scoter::datasets {

using nlohmann::json;

// ---------------------------------------------------------------------------
// UserSequence / SplitBundle helpers
// ---------------------------------------------------------------------------

std::vector<int> UserSequence::real_items() const {
  return std::vector<int>(items.begin() + pad_count, items.end());
}

int UserSequence::last_item() const {
  if (real_count() <= 0) throw DataError("sequence has no real items");
  return items.back();
}

int SplitBundle::target_of(const UserSequence& row) { return row.last_item(); }

UserSequence SplitBundle::input_of(const UserSequence& row) {
  std::vector<int> real = row.real_items();
  real.pop_back();
  if (real.empty()) throw DataError("holdout row has no input context");
  return normalize_sequence(row.user_id, real,
                            static_cast<int>(row.items.size()));
}

// ---------------------------------------------------------------------------
// 5-core filter
// ---------------------------------------------------------------------------

std::vector<Interaction> five_core_filter(std::vector<Interaction> interactions,
                                          int min_count) {
  bool changed = true;
  while (changed && !interactions.empty()) {
    std::unordered_map<std::string, int> user_count, item_count;
    for (const auto& it : interactions) {
      ++user_count[it.user_id];
      ++item_count[it.item_id];
    }
    std::vector<Interaction> kept;
    kept.reserve(interactions.size());
    for (auto& it : interactions) {
      if (user_count[it.user_id] >= min_count &&
          item_count[it.item_id] >= min_count) {
        kept.push_back(std::move(it));
      }
    }
    changed = kept.size() != interactions.size();
    interactions = std::move(kept);
  }
  return interactions;
}

CorpusStats corpus_stats(const std::vector<Interaction>& interactions) {
  std::unordered_set<std::string> users, items;
  for (const auto& it : interactions) {
    users.insert(it.user_id);
    items.insert(it.item_id);
  }
  CorpusStats s;
  s.users = users.size();
  s.items = items.size();
  s.interactions = interactions.size();
  s.avg_length = users.empty() ? 0.0
                               : static_cast<double>(interactions.size()) /
                                     static_cast<double>(users.size());
  return s;
}

// ---------------------------------------------------------------------------
// Normalization and splitting
// ---------------------------------------------------------------------------

UserSequence normalize_sequence(const std::string& user_id,
                                const std::vector<int>& items, int target_len) {
  if (items.empty()) throw DataError("normalize_sequence: empty item list");
  UserSequence seq;
  seq.user_id = user_id;
  const int n = static_cast<int>(items.size());
  if (n >= target_len) {
    seq.items.assign(items.end() - target_len, items.end());
    seq.pad_count = 0;
  } else {
    seq.pad_count = target_len - n;
    seq.items.assign(static_cast<std::size_t>(seq.pad_count), kPadIndex);
    seq.items.insert(seq.items.end(), items.begin(), items.end());
  }
  return seq;
}

std::vector<std::pair<std::string, std::vector<std::string>>> group_by_user(
    const std::vector<Interaction>& interactions) {
  // stable sort keeps file order for equal timestamps
  std::vector<std::size_t> order(interactions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return interactions[a].timestamp < interactions[b].timestamp;
  });

  std::map<std::string, std::vector<std::string>> grouped;
  for (std::size_t idx : order) {
    grouped[interactions[idx].user_id].push_back(interactions[idx].item_id);
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  out.reserve(grouped.size());
  for (auto& [user, items] : grouped) out.emplace_back(user, std::move(items));
  return out;
}

SplitBundle leave_one_out_split(const std::vector<Interaction>& interactions,
                                std::map<std::string, ItemMeta> meta) {
  SplitBundle bundle;
  bundle.meta = std::move(meta);

  std::vector<std::string> item_ids;
  {
    std::unordered_set<std::string> seen;
    for (const auto& it : interactions) {
      if (seen.insert(it.item_id).second) item_ids.push_back(it.item_id);
    }
    std::sort(item_ids.begin(), item_ids.end());
  }
  bundle.vocab.push_back("<pad>");
  for (const auto& id : item_ids) {
    bundle.vocab_index[id] = static_cast<int>(bundle.vocab.size());
    bundle.vocab.push_back(id);
  }

  for (auto& [user, item_list] : group_by_user(interactions)) {
    std::vector<int> indices;
    indices.reserve(item_list.size());
    for (const auto& id : item_list) indices.push_back(bundle.vocab_index.at(id));

    if (static_cast<int>(indices.size()) < 3) {
      ++bundle.excluded_users;
      continue;
    }
    // test target = last, valid target = second-to-last, train = the rest
    std::vector<int> train_region(indices.begin(), indices.end() - 2);
    std::vector<int> valid_region(indices.begin(), indices.end() - 1);
    bundle.train.push_back(normalize_sequence(user, train_region));
    bundle.valid.push_back(normalize_sequence(user, valid_region));
    bundle.test.push_back(normalize_sequence(user, indices));
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

std::vector<Interaction> synth_interactions(const SynthSpec& spec) {
  if (spec.n_items < 1 || spec.n_users < 1 || spec.n_topics < 1) {
    throw DataError("synth_interactions: sizes must be positive");
  }
  Rng rng(spec.seed);
  std::vector<Interaction> out;
  out.reserve(static_cast<std::size_t>(spec.n_users) * spec.max_len);
  for (int u = 0; u < spec.n_users; ++u) {
    const int topic = static_cast<int>(rng.uniform_index(
        static_cast<std::uint64_t>(spec.n_topics)));
    const int len = spec.min_len + static_cast<int>(rng.uniform_index(
                                       static_cast<std::uint64_t>(
                                           spec.max_len - spec.min_len + 1)));
    char user_id[32];
    std::snprintf(user_id, sizeof(user_id), "u%05d", u);
    for (int t = 0; t < len; ++t) {
      int item;
      if (rng.uniform() < spec.topic_concentration) {
        // items are striped over topics: topic k owns {k, k+T, k+2T, ...}
        const int per_topic =
            (spec.n_items - topic + spec.n_topics - 1) / spec.n_topics;
        item = topic + spec.n_topics * static_cast<int>(rng.uniform_index(
                                            static_cast<std::uint64_t>(per_topic)));
      } else {
        item = static_cast<int>(rng.uniform_index(
            static_cast<std::uint64_t>(spec.n_items)));
      }
      char item_id[32];
      std::snprintf(item_id, sizeof(item_id), "i%05d", item);
      out.push_back(Interaction{user_id, item_id, t});
    }
  }
  return out;
}

SplitBundle synth_corpus(const SynthSpec& spec) {
  auto interactions = synth_interactions(spec);
  std::map<std::string, ItemMeta> meta;
  for (const auto& it : interactions) {
    if (!meta.count(it.item_id)) {
      meta[it.item_id] = ItemMeta{"Synthetic product " + it.item_id,
                                  "Catalog entry " + it.item_id};
    }
  }
  return leave_one_out_split(interactions, std::move(meta));
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  for (std::size_t i = (s[0] == '-' ? 1 : 0); i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return s.size() > (s[0] == '-' ? 1u : 0u);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  return is;
}

}  // namespace

std::vector<Interaction> read_canonical_csv(const std::string& path) {
  auto is = open_or_throw(path);
  std::vector<Interaction> out;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw DataError(path + ": expected 3 CSV fields");
    if (first && !is_integer(f[2])) {
      first = false;  // header line
      continue;
    }
    first = false;
    if (f[0].empty() || f[1].empty()) throw DataError(path + ": empty id");
    out.push_back(Interaction{f[0], f[1], std::stoll(f[2])});
  }
  return out;
}

std::vector<Interaction> read_amazon_ratings_csv(const std::string& path) {
  auto is = open_or_throw(path);
  std::vector<Interaction> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError(path + ": expected 4 CSV fields");
    if (!is_integer(f[3])) continue;  // tolerate a header
    out.push_back(Interaction{f[0], f[1], std::stoll(f[3])});
  }
  return out;
}

std::vector<Interaction> read_yelp_reviews_jsonl(const std::string& path) {
  auto is = open_or_throw(path);
  std::vector<Interaction> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Interaction it;
    it.user_id = j.at("user_id").get<std::string>();
    it.item_id = j.at("business_id").get<std::string>();
    if (j.contains("timestamp")) {
      it.timestamp = j.at("timestamp").get<std::int64_t>();
    } else {
      // "date": "YYYY-MM-DD[ hh:mm:ss]" -> lexicographic order == time order;
      // encode digits as an integer key
      std::string date = j.at("date").get<std::string>();
      std::int64_t key = 0;
      for (char c : date) {
        if (std::isdigit(static_cast<unsigned char>(c))) key = key * 10 + (c - '0');
      }
      it.timestamp = key;
    }
    out.push_back(std::move(it));
  }
  return out;
}

std::map<std::string, ItemMeta> read_metadata_jsonl(const std::string& path) {
  auto is = open_or_throw(path);
  std::map<std::string, ItemMeta> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ItemMeta m;
    m.title = j.value("title", "");
    m.description = j.value("description", "");
    out[j.at("item_id").get<std::string>()] = std::move(m);
  }
  return out;
}

void write_canonical_csv(const std::vector<Interaction>& interactions,
                         const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  os << "user_id,item_id,timestamp\n";
  for (const auto& it : interactions) {
    os << it.user_id << ',' << it.item_id << ',' << it.timestamp << '\n';
  }
}

void write_split_jsonl(const SplitBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  auto emit = [&os](const UserSequence& s, const char* tag) {
    json j;
    j["user"] = s.user_id;
    j["items"] = s.items;
    j["pad_count"] = s.pad_count;
    j["split"] = tag;
    os << j.dump() << '\n';
  };
  for (const auto& s : bundle.train) emit(s, "train");
  for (const auto& s : bundle.valid) emit(s, "valid");
  for (const auto& s : bundle.test) emit(s, "test");
}

void write_vocab_json(const SplitBundle& bundle, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path);
  json j;
  j["vocab"] = bundle.vocab;
  j["excluded_users"] = bundle.excluded_users;
  os << j.dump(2) << '\n';
}

SplitBundle read_split_bundle(const std::string& split_path,
                              const std::string& vocab_path,
                              const std::string& meta_path) {
  SplitBundle bundle;
  {
    auto is = open_or_throw(vocab_path);
    json j = json::parse(is);
    bundle.vocab = j.at("vocab").get<std::vector<std::string>>();
    bundle.excluded_users = j.value("excluded_users", 0);
    for (std::size_t i = 1; i < bundle.vocab.size(); ++i) {
      bundle.vocab_index[bundle.vocab[i]] = static_cast<int>(i);
    }
  }
  auto is = open_or_throw(split_path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    UserSequence s;
    s.user_id = j.at("user").get<std::string>();
    s.items = j.at("items").get<std::vector<int>>();
    s.pad_count = j.at("pad_count").get<int>();
    const std::string tag = j.at("split").get<std::string>();
    if (tag == "train") {
      bundle.train.push_back(std::move(s));
    } else if (tag == "valid") {
      bundle.valid.push_back(std::move(s));
    } else if (tag == "test") {
      bundle.test.push_back(std::move(s));
    } else {
      throw DataError("unknown split tag " + tag);
    }
  }
  if (!meta_path.empty()) bundle.meta = read_metadata_jsonl(meta_path);
  return bundle;
}

}  // namespace scoter::datasets
