#pragma once

// SPDX-License-Identifier: Apache-2.0

// Structured distillation data path: template-conditioned chain generation
// per user, step-wise embedding extraction, and the offline embedding
// store that the fusion stage reads at training/serving time.
//
// Store layout (little-endian, bit-exact):
//   magic "SCTR" | u32 version=1 | u32 K | u32 D | u64 record_count |
//   index: record_count x (u32 user_id_len | user_id bytes | u64 offset) |
//   records: K*D float32 row-major at their absolute file offsets

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scoter/common.hpp"
#include "scoter/datasets.hpp"
#include "scoter/gvm.hpp"
#include "scoter/providers.hpp"

namespace scoter::distill {

/// Reply did not conform to the template step count, even after a retry.
struct TemplateConformanceError : ScoterError {
  using ScoterError::ScoterError;
};

struct StepEmbeddingMatrix {
  std::string user_id;
  int k = 0;  // step count, equals the template's K
  int d = 0;  // embedding dimension
  std::vector<float> rows;  // k*d, row j = embedding of step j

  const float* row(int j) const { return rows.data() + static_cast<std::size_t>(j) * d; }
};

struct TeacherPair {
  std::string user_id;
  gvm::ReasoningChain chain;  // step count == template K
};

// ---------------------------------------------------------------------------
// Generation + embedding
// ---------------------------------------------------------------------------

/// Prompt asking for one concrete sentence per template step, numbered.
std::string build_template_prompt(const datasets::UserSequence& seq,
                                  const gvm::PatternTemplate& tmpl,
                                  const std::vector<std::string>& vocab,
                                  const std::map<std::string, datasets::ItemMeta>& meta);

/// Parses "1. ..." / "Step 1: ..." numbered lines into step sentences.
std::vector<std::string> parse_step_lines(const std::string& reply);

/// Generates a template-consistent chain for one user. A step-count
/// mismatch triggers exactly one retry with a corrective suffix; a second
/// mismatch throws TemplateConformanceError.
gvm::ReasoningChain generate_template_chain(const datasets::UserSequence& seq,
                                            const gvm::PatternTemplate& tmpl,
                                            providers::Provider& provider,
                                            const std::vector<std::string>& vocab,
                                            const std::map<std::string, datasets::ItemMeta>& meta);

/// Row j = embedding of step j, embedded in isolation, order preserved.
StepEmbeddingMatrix embed_steps(const gvm::ReasoningChain& chain,
                                providers::Provider& provider);

// ---------------------------------------------------------------------------
// Offline store
// ---------------------------------------------------------------------------

/// All matrices must share K and D. Overwrites the target file.
void write_store(const std::vector<StepEmbeddingMatrix>& matrices,
                 const std::string& path);

class EmbeddingStore {
 public:
  static EmbeddingStore open(const std::string& path);

  int k() const { return k_; }
  int d() const { return d_; }
  std::size_t count() const { return index_.size(); }
  bool contains(const std::string& user_id) const;
  /// Throws NotFoundError for unknown users.
  StepEmbeddingMatrix get(const std::string& user_id) const;
  std::vector<std::string> user_ids() const;

  /// Users from `required` that have no matrix (pre-flight coverage check).
  std::vector<std::string> missing_users(const std::vector<std::string>& required) const;

 private:
  int k_ = 0;
  int d_ = 0;
  std::map<std::string, std::uint64_t> index_;  // user -> absolute offset
  std::vector<char> blob_;                      // whole file
};

}  // namespace scoter::distill
