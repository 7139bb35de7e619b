// SPDX-License-Identifier: Apache-2.0

#include "scoter/distill.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scoter::distill {

// ---------------------------------------------------------------------------
// Template-conditioned generation
// ---------------------------------------------------------------------------

std::string build_template_prompt(const datasets::UserSequence& seq,
                                  const gvm::PatternTemplate& tmpl,
                                  const std::vector<std::string>& vocab,
                                  const std::map<std::string, datasets::ItemMeta>& meta) {
  std::ostringstream os;
  os << "You are an expert in recommendation algorithms. Follow this "
        "reasoning template step by step for the user below:\n";
  for (std::size_t j = 0; j < tmpl.steps.size(); ++j) {
    os << (j + 1) << ". " << tmpl.steps[j] << "\n";
  }
  os << "\nWrite exactly " << tmpl.steps.size()
     << " numbered lines, one concrete sentence per template step, "
        "instantiated with this user's specifics. No other text.\n\n";
  os << "User historical behavior (oldest first):\n";
  int position = 0;
  for (int idx : seq.items) {
    if (idx == datasets::kPadIndex) continue;
    ++position;
    const std::string& item_id = vocab.at(static_cast<std::size_t>(idx));
    auto it = meta.find(item_id);
    if (it == meta.end() || it->second.title.empty()) {
      os << position << ". (untitled item)\n";
    } else {
      os << position << ". " << it->second.title << "\n";
    }
  }
  return os.str();
}

std::vector<std::string> parse_step_lines(const std::string& reply) {
  std::vector<std::string> steps;
  std::istringstream is(reply);
  std::string line;
  while (std::getline(is, line)) {
    // strip "12.", "12)", "Step 12:" style prefixes and whitespace
    std::size_t pos = 0;
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (line.compare(pos, 4, "Step") == 0 || line.compare(pos, 4, "step") == 0) pos += 4;
    while (pos < line.size() && (std::isspace(static_cast<unsigned char>(line[pos])) ||
                                 std::isdigit(static_cast<unsigned char>(line[pos])))) {
      ++pos;
    }
    if (pos < line.size() && (line[pos] == '.' || line[pos] == ')' || line[pos] == ':')) ++pos;
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    std::string body = line.substr(pos);
    while (!body.empty() && (body.back() == '\r' || body.back() == ' ')) body.pop_back();
    if (!body.empty()) steps.push_back(std::move(body));
  }
  return steps;
}

gvm::ReasoningChain generate_template_chain(const datasets::UserSequence& seq,
                                            const gvm::PatternTemplate& tmpl,
                                            providers::Provider& provider,
                                            const std::vector<std::string>& vocab,
                                            const std::map<std::string, datasets::ItemMeta>& meta) {
  const std::size_t want = tmpl.steps.size();
  providers::GenRequest req;
  req.prompt = build_template_prompt(seq, tmpl, vocab, meta);
  req.temperature = 0.0;
  req.top_p = 1.0;

  auto steps = parse_step_lines(provider.generate(req));
  if (steps.size() != want) {
    // one corrective retry, then give up
    providers::GenRequest retry = req;
    retry.prompt += "\nYour previous reply had " + std::to_string(steps.size()) +
                    " steps. Reply again with exactly " + std::to_string(want) +
                    " numbered lines.\n";
    steps = parse_step_lines(provider.generate(retry));
    if (steps.size() != want) {
      throw TemplateConformanceError(
          "template chain for " + seq.user_id + ": got " +
          std::to_string(steps.size()) + " steps, template has " +
          std::to_string(want));
    }
  }
  gvm::ReasoningChain chain;
  chain.id = seq.user_id + "-tpl";
  chain.source_user = seq.user_id;
  chain.steps = std::move(steps);
  chain.item_count_ok = true;
  return chain;
}

StepEmbeddingMatrix embed_steps(const gvm::ReasoningChain& chain,
                                providers::Provider& provider) {
  if (chain.steps.size() < 2) {
    throw ScoterError("embed_steps: chain needs >= 2 steps");
  }
  auto vectors = provider.embed(chain.steps);
  StepEmbeddingMatrix mat;
  mat.user_id = chain.source_user;
  mat.k = static_cast<int>(vectors.size());
  mat.d = static_cast<int>(vectors[0].values.size());
  mat.rows.reserve(static_cast<std::size_t>(mat.k) * mat.d);
  for (const auto& v : vectors) {
    for (double x : v.values) mat.rows.push_back(static_cast<float>(x));
  }
  return mat;
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'C', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
T take(const std::vector<char>& blob, std::size_t& pos) {
  if (pos + sizeof(T) > blob.size()) {
    throw CorruptStoreError("embedding store: truncated file");
  }
  T v{};
  std::memcpy(&v, blob.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_store(const std::vector<StepEmbeddingMatrix>& matrices,
                 const std::string& path) {
  if (matrices.empty()) throw ScoterError("write_store: no matrices");
  const int k = matrices[0].k;
  const int d = matrices[0].d;
  for (const auto& m : matrices) {
    if (m.k != k || m.d != d) {
      throw ShapeError("write_store: all matrices must share K and D");
    }
    if (m.rows.size() != static_cast<std::size_t>(k) * d) {
      throw ShapeError("write_store: row buffer size mismatch for " + m.user_id);
    }
  }
  // index is emitted in user-id order for deterministic bytes
  std::vector<const StepEmbeddingMatrix*> ordered;
  for (const auto& m : matrices) ordered.push_back(&m);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->user_id < b->user_id; });

  std::size_t index_size = 0;
  for (const auto* m : ordered) index_size += 4 + m->user_id.size() + 8;
  const std::size_t header_size = 4 + 4 + 4 + 4 + 8;
  const std::size_t record_size = static_cast<std::size_t>(k) * d * sizeof(float);

  std::string buf;
  buf.append(kMagic, 4);
  put<std::uint32_t>(buf, kVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(k));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  put<std::uint64_t>(buf, static_cast<std::uint64_t>(ordered.size()));
  std::uint64_t offset = header_size + index_size;
  for (const auto* m : ordered) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(m->user_id.size()));
    buf.append(m->user_id);
    put<std::uint64_t>(buf, offset);
    offset += record_size;
  }
  for (const auto* m : ordered) {
    buf.append(reinterpret_cast<const char*>(m->rows.data()),
               m->rows.size() * sizeof(float));
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ScoterError("write_store: cannot open " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw ScoterError("write_store: write failed for " + path);
}

EmbeddingStore EmbeddingStore::open(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ScoterError("embedding store: cannot open " + path);
  EmbeddingStore store;
  store.blob_.assign(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  if (store.blob_.size() < 4 || std::memcmp(store.blob_.data(), kMagic, 4) != 0) {
    throw CorruptStoreError("embedding store: bad magic in " + path);
  }
  pos = 4;
  const auto version = take<std::uint32_t>(store.blob_, pos);
  if (version != kVersion) {
    throw CorruptStoreError("embedding store: unsupported version " +
                            std::to_string(version));
  }
  store.k_ = static_cast<int>(take<std::uint32_t>(store.blob_, pos));
  store.d_ = static_cast<int>(take<std::uint32_t>(store.blob_, pos));
  const auto count = take<std::uint64_t>(store.blob_, pos);
  const std::size_t record_size =
      static_cast<std::size_t>(store.k_) * store.d_ * sizeof(float);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(store.blob_, pos);
    if (pos + len > store.blob_.size()) {
      throw CorruptStoreError("embedding store: truncated index");
    }
    std::string user(store.blob_.data() + pos, len);
    pos += len;
    const auto offset = take<std::uint64_t>(store.blob_, pos);
    if (offset + record_size > store.blob_.size()) {
      throw CorruptStoreError("embedding store: record offset out of range for " + user);
    }
    store.index_[user] = offset;
  }
  return store;
}

bool EmbeddingStore::contains(const std::string& user_id) const {
  return index_.count(user_id) > 0;
}

StepEmbeddingMatrix EmbeddingStore::get(const std::string& user_id) const {
  auto it = index_.find(user_id);
  if (it == index_.end()) {
    throw NotFoundError("embedding store: no matrix for user " + user_id);
  }
  StepEmbeddingMatrix mat;
  mat.user_id = user_id;
  mat.k = k_;
  mat.d = d_;
  mat.rows.resize(static_cast<std::size_t>(k_) * d_);
  std::memcpy(mat.rows.data(), blob_.data() + it->second,
              mat.rows.size() * sizeof(float));
  return mat;
}

std::vector<std::string> EmbeddingStore::user_ids() const {
  std::vector<std::string> out;
  out.reserve(index_.size());
  for (const auto& [user, offset] : index_) out.push_back(user);
  return out;
}

std::vector<std::string> EmbeddingStore::missing_users(
    const std::vector<std::string>& required) const {
  std::vector<std::string> missing;
  for (const auto& user : required) {
    if (!index_.count(user)) missing.push_back(user);
  }
  return missing;
}

}  // namespace scoter::distill
