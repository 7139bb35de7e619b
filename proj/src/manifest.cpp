// SPDX-License-Identifier: Apache-2.0

#include "scoter/manifest.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "scoter/common.hpp"
#include "scoter/hash.hpp"

namespace scoter::manifest {

using nlohmann::json;

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::string& path) {
  inputs[path] = sha256_file(path);
}

void RunManifest::add_output(const std::string& path) {
  outputs[path] = sha256_file(path);
}

void write_manifest(const RunManifest& m, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  const std::string path = out_dir + "/manifest_" + m.command + ".json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ScoterError("manifest: cannot write " + path);
  os << j.dump(2) << '\n';
}

void check_input_fresh(const std::string& path, const std::string& out_dir,
                       bool force) {
  if (force || !std::filesystem::exists(out_dir)) return;
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("manifest_", 0) != 0 || entry.path().extension() != ".json") {
      continue;
    }
    std::ifstream is(entry.path());
    if (!is) continue;
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.contains("outputs")) continue;
    for (const auto& [out_path, recorded] : j["outputs"].items()) {
      if (out_path != path) continue;
      const std::string current = sha256_file(path);
      if (current != recorded.get<std::string>()) {
        throw ScoterError("stale artifact: " + path + " no longer matches the " +
                          j.value("command", "?") +
                          " manifest (rerun upstream or pass --force)");
      }
    }
  }
}

}  // namespace scoter::manifest
