#pragma once

// SPDX-License-Identifier: Apache-2.0

// Per-command run manifests: config hash, input/output artifact hashes,
// tool version, timestamps. Downstream commands verify that their inputs
// still match what the upstream command produced; --force skips the check.

#include <map>
#include <string>

namespace scoter::manifest {

inline constexpr const char* kToolVersion = "scoter 1.0.0";

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256

  void add_input(const std::string& path);
  void add_output(const std::string& path);
};

std::string iso_now();

/// Writes <out_dir>/manifest_<command>.json.
void write_manifest(const RunManifest& m, const std::string& out_dir);

/// Checks `path` against every manifest in `out_dir` that lists it as an
/// output; a hash mismatch means the artifact is stale. Throws ScoterError
/// naming the file unless `force`. Files no manifest knows pass untouched.
void check_input_fresh(const std::string& path, const std::string& out_dir,
                       bool force);

}  // namespace scoter::manifest
