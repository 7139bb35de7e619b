// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "scoter/common.hpp"
#include "scoter/config.hpp"
#include "scoter/pipeline.hpp"

using namespace scoter;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int exit_code;
  std::string output;
};

CliRun run_cli(const std::string& args) {
  const char* bin = std::getenv("SCOTER_BIN");
  REQUIRE(bin != nullptr);
  const std::string log = (fs::temp_directory_path() / "scoter_cli_out.txt").string();
  const std::string cmd = std::string(bin) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::string output((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
  return {WEXITSTATUS(status), output};
}

fs::path workdir() {
  auto dir = fs::temp_directory_path() / "scoter_cli_test";
  return dir;
}

std::string write_config(const std::string& name, const std::string& out_sub) {
  const auto dir = workdir();
  fs::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream os(path);
  os << R"({
  "seed": 11,
  "variant": "full",
  "paths": {"raw_format": "synth", "fixtures": ")"
     << (dir / "fixtures.jsonl").string() << R"(", "cache_dir": "", "out_dir": ")"
     << (dir / out_sub).string() << R"("},
  "provider": {"kind": "fixture", "cache": false},
  "synth": {"n_users": 30, "n_items": 25, "n_topics": 5, "concentration": 0.9, "min_len": 5, "max_len": 8},
  "gvm": {"chains_per_user": 2, "eval_users": 15, "k_min": 3, "k_max": 5, "exemplars": 4},
  "model": {"d_item": 16, "heads": 2, "head_dim": 8, "layers": 1, "mlp": 32, "dropout": 0.1},
  "training": {"lr": 0.003, "epochs": 4, "patience": 4, "batch": 16}
})";
  return path;
}

}  // namespace

TEST_CASE("config parsing: defaults, strictness, mandatory seed") {
  auto cfg = config::parse_config(R"({"seed": 5})");
  CHECK(cfg.seed == 5);
  CHECK(cfg.training.lr == 2e-4);
  CHECK(cfg.training.weight_decay == 5e-5);
  CHECK(cfg.training.max_epochs == 200);
  CHECK(cfg.training.patience == 20);
  CHECK(cfg.training.batch_size == 256);
  CHECK(cfg.training.lambda == 0.1);
  CHECK(cfg.training.tau == 0.07);
  CHECK(cfg.model.d_model == 128);
  CHECK(cfg.model.n_heads == 6);
  CHECK(cfg.model.head_dim == 64);
  CHECK(cfg.model.n_layers == 4);
  CHECK(cfg.model.mlp_hidden == 1024);
  CHECK(cfg.model.dropout == 0.1);
  CHECK(cfg.model.seq_len == 20);
  CHECK(cfg.theory_config.order.delta == 0.8);
  CHECK(cfg.theory_config.order.catalog == 50);

  CHECK_THROWS_AS(config::parse_config(R"({})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "unknown_key": 2})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "gvm": {"gama": 0.9}})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "variant": "warp"})"),
                  ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"seed": 1, "training": {"tau": 0}})"),
                  ConfigError);

  // same logical config canonicalizes identically
  auto a = config::parse_config(R"({"seed": 5, "training": {"lr": 0.0002}})");
  auto b = config::parse_config(R"({"training": {"lr": 2e-4}, "seed": 5})");
  CHECK(a.canonical_json() == b.canonical_json());
}

TEST_CASE("cli pipeline: ingest through evaluate, pre-flight and staleness") {
  fs::remove_all(workdir());
  const auto cfg_path = write_config("config.json", "out");
  const auto out_dir = (workdir() / "out").string();

  auto ingest = run_cli("ingest --config " + cfg_path);
  CAPTURE(ingest.output);
  REQUIRE(ingest.exit_code == 0);
  CHECK(fs::exists(out_dir + "/splits.jsonl"));
  CHECK(fs::exists(out_dir + "/vocab.json"));
  CHECK(fs::exists(out_dir + "/manifest_ingest.json"));

  // training before the store exists: pre-flight error naming the path
  auto early_train = run_cli("train --config " + cfg_path);
  CHECK(early_train.exit_code != 0);
  CHECK(early_train.output.find("store.bin") != std::string::npos);

  auto fixtures = run_cli("make-fixtures --config " + cfg_path +
                          " --templates fixtures/templates");
  CAPTURE(fixtures.output);
  REQUIRE(fixtures.exit_code == 0);

  for (const char* phase : {"generate", "validate", "mine"}) {
    auto r = run_cli(std::string("gvm ") + phase + " --config " + cfg_path);
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
  }
  CHECK(fs::exists(out_dir + "/chains.jsonl"));
  CHECK(fs::exists(out_dir + "/template.json"));

  auto embed = run_cli("embed --config " + cfg_path);
  REQUIRE(embed.exit_code == 0);
  CHECK(fs::exists(out_dir + "/store.bin"));

  auto train = run_cli("train --config " + cfg_path);
  CAPTURE(train.output);
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(out_dir + "/checkpoint_full.bin"));
  CHECK(fs::exists(out_dir + "/metrics_full.csv"));

  auto evaluate = run_cli("evaluate --config " + cfg_path);
  CAPTURE(evaluate.output);
  REQUIRE(evaluate.exit_code == 0);
  CHECK(fs::exists(out_dir + "/eval_full.json"));
  CHECK(evaluate.output.find("full,11,") != std::string::npos);

  // variant override is honored end to end
  auto bb_train = run_cli("train --config " + cfg_path + " --variant backbone_only");
  REQUIRE(bb_train.exit_code == 0);
  auto bb_eval = run_cli("evaluate --config " + cfg_path + " --variant backbone_only");
  REQUIRE(bb_eval.exit_code == 0);
  CHECK(bb_eval.output.find("backbone_only,11,") != std::string::npos);

  // stale upstream artifact: corrupt chains.jsonl, validate must refuse
  {
    std::ofstream os(out_dir + "/chains.jsonl", std::ios::app);
    os << "\n";
  }
  auto stale = run_cli("gvm validate --config " + cfg_path);
  CHECK(stale.exit_code != 0);
  CHECK(stale.output.find("stale artifact") != std::string::npos);
  auto forced = run_cli("gvm validate --config " + cfg_path + " --force");
  CAPTURE(forced.output);
  CHECK(forced.exit_code == 0);

  // unknown variants and missing configs fail loudly
  CHECK(run_cli("train --config " + cfg_path + " --variant bogus").exit_code != 0);
  CHECK(run_cli("train --config /nonexistent.json").exit_code != 0);

  fs::remove_all(workdir());
}

TEST_CASE("compare-templates emits one row per template") {
  fs::remove_all(workdir());
  const auto cfg_path = write_config("config.json", "out");
  const auto out_dir = (workdir() / "out").string();

  REQUIRE(run_cli("ingest --config " + cfg_path).exit_code == 0);
  // make-fixtures materializes every artifact, including the discovered
  // template, so the comparison covers all four
  REQUIRE(run_cli("make-fixtures --config " + cfg_path +
                  " --templates fixtures/templates").exit_code == 0);
  auto compare = run_cli("compare-templates --config " + cfg_path +
                         " --templates fixtures/templates");
  CAPTURE(compare.output);
  REQUIRE(compare.exit_code == 0);

  std::ifstream csv(out_dir + "/compare_templates.csv");
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(csv, line)) {
    if (!line.empty()) rows.push_back(line);
  }
  REQUIRE(rows.size() == 5);  // header + three manual + discovered
  CHECK(rows[0].rfind("template,steps,", 0) == 0);
  CHECK(rows[1].rfind("five_step,5,", 0) == 0);
  CHECK(rows[2].rfind("three_step,3,", 0) == 0);
  CHECK(rows[3].rfind("two_step,2,", 0) == 0);
  CHECK(rows[4].rfind("discovered,", 0) == 0);

  fs::remove_all(workdir());
}
