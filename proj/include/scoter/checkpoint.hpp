#pragma once

// SPDX-License-Identifier: Apache-2.0

// Named-parameter registry and its on-disk form.
//
// Checkpoint layout (little-endian):
//   magic "SCPT" | u32 version=1 | u64 tensor count |
//   per tensor: u32 name_len | name bytes | u32 rank | u32 dims[rank] |
//               float64 data (row-major)
// Names are written in lexicographic order so identical parameter sets
// produce byte-identical files.

#include <map>
#include <string>
#include <vector>

#include "scoter/tensor.hpp"

namespace scoter::numerics {

class ParamStore {
 public:
  /// Registers a fresh parameter; throws on duplicate name.
  Tensor& create(const std::string& name, Shape shape,
                 std::vector<double> data = {});
  Tensor& create_randn(const std::string& name, Shape shape, Rng& rng,
                       double stddev);

  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  /// All parameters in name order (deterministic iteration).
  std::vector<Tensor> all();
  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;

  void zero_grads();

  const std::map<std::string, Tensor>& named() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;
};

void save_checkpoint(const ParamStore& store, const std::string& path);

/// Loads into an empty or matching store. Magic/version/shape mismatches
/// throw CorruptStoreError.
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace scoter::numerics
