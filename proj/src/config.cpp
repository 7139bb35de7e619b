// SPDX-License-Identifier: Apache-2.0

#include "scoter/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "scoter/common.hpp"

namespace scoter::config {

using nlohmann::json;

namespace {

// fail-fast on keys the schema does not know
void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string PathsConfig::store_path() const {
  return store.empty() ? out_dir + "/store.bin" : store;
}

std::string PathsConfig::checkpoint_path(const std::string& variant) const {
  const std::string dir = checkpoints.empty() ? out_dir : checkpoints;
  return dir + "/checkpoint_" + variant + ".bin";
}

std::string PathsConfig::reports_dir() const {
  return reports.empty() ? out_dir : reports;
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j, {"seed", "variant", "paths", "provider", "gvm", "model",
                 "training", "nce", "adam", "synth", "eval", "theory"},
             "top level");
  if (!j.contains("seed")) throw ConfigError("config: seed is mandatory");

  RunConfig cfg;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  read(j, "variant", cfg.variant);
  fusion::variant_from_string(cfg.variant);  // validate

  if (j.contains("paths")) {
    const auto& p = j["paths"];
    check_keys(p, {"raw_data", "raw_format", "meta_jsonl", "fixtures",
                   "cache_dir", "out_dir", "store", "checkpoints", "reports"},
               "paths");
    read(p, "raw_data", cfg.paths.raw_data);
    read(p, "raw_format", cfg.paths.raw_format);
    read(p, "meta_jsonl", cfg.paths.meta_jsonl);
    read(p, "fixtures", cfg.paths.fixtures);
    read(p, "cache_dir", cfg.paths.cache_dir);
    read(p, "out_dir", cfg.paths.out_dir);
    read(p, "store", cfg.paths.store);
    read(p, "checkpoints", cfg.paths.checkpoints);
    read(p, "reports", cfg.paths.reports);
    const std::set<std::string> formats = {"canonical", "amazon", "yelp", "synth"};
    if (!formats.count(cfg.paths.raw_format)) {
      throw ConfigError("config: unknown raw_format " + cfg.paths.raw_format);
    }
  }

  if (j.contains("provider")) {
    const auto& p = j["provider"];
    check_keys(p, {"kind", "base_url", "model_tag", "max_attempts",
                   "backoff_ms", "cache"},
               "provider");
    read(p, "kind", cfg.provider.kind);
    read(p, "base_url", cfg.provider.base_url);
    read(p, "model_tag", cfg.provider.model_tag);
    read(p, "max_attempts", cfg.provider.max_attempts);
    read(p, "backoff_ms", cfg.provider.backoff_ms);
    read(p, "cache", cfg.provider.cache);
    if (cfg.provider.kind != "fixture" && cfg.provider.kind != "http") {
      throw ConfigError("config: provider.kind must be fixture or http");
    }
  }

  if (j.contains("gvm")) {
    const auto& g = j["gvm"];
    check_keys(g, {"gamma", "chains_per_user", "eval_users", "k_min", "k_max",
                   "exemplars", "theta_match", "min_cluster_size",
                   "temperature", "top_p", "max_tokens"},
               "gvm");
    read(g, "gamma", cfg.gvm.gamma);
    read(g, "chains_per_user", cfg.gvm.chains_per_user);
    read(g, "eval_users", cfg.gvm.eval_users);
    read(g, "k_min", cfg.gvm.k_min);
    read(g, "k_max", cfg.gvm.k_max);
    read(g, "exemplars", cfg.gvm.exemplars);
    read(g, "theta_match", cfg.gvm.theta_match);
    read(g, "min_cluster_size", cfg.gvm.min_cluster_size);
    read(g, "temperature", cfg.gvm.temperature);
    read(g, "top_p", cfg.gvm.top_p);
    read(g, "max_tokens", cfg.gvm.max_tokens);
    if (cfg.gvm.gamma <= 0.0 || cfg.gvm.gamma > 1.0) {
      throw ConfigError("config: gvm.gamma must be in (0,1]");
    }
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"d_item", "heads", "head_dim", "layers", "mlp", "dropout",
                   "seq_len"},
               "model");
    read(m, "d_item", cfg.model.d_model);
    read(m, "heads", cfg.model.n_heads);
    read(m, "head_dim", cfg.model.head_dim);
    read(m, "layers", cfg.model.n_layers);
    read(m, "mlp", cfg.model.mlp_hidden);
    read(m, "dropout", cfg.model.dropout);
    read(m, "seq_len", cfg.model.seq_len);
  }

  if (j.contains("training")) {
    const auto& t = j["training"];
    check_keys(t, {"lr", "weight_decay", "epochs", "patience", "batch",
                   "lambda", "tau"},
               "training");
    read(t, "lr", cfg.training.lr);
    read(t, "weight_decay", cfg.training.weight_decay);
    read(t, "epochs", cfg.training.max_epochs);
    read(t, "patience", cfg.training.patience);
    read(t, "batch", cfg.training.batch_size);
    read(t, "lambda", cfg.training.lambda);
    read(t, "tau", cfg.training.tau);
    if (cfg.training.tau <= 0.0) throw ConfigError("config: training.tau must be > 0");
    if (cfg.training.lambda < 0.0) throw ConfigError("config: training.lambda must be >= 0");
  }

  if (j.contains("nce")) {
    check_keys(j["nce"], {"z_stage"}, "nce");
    std::string stage = "positional";
    read(j["nce"], "z_stage", stage);
    if (stage == "positional") {
      cfg.nce_stage = fusion::NceStage::kPositional;
    } else if (stage == "adapted") {
      cfg.nce_stage = fusion::NceStage::kAdapted;
    } else {
      throw ConfigError("config: nce.z_stage must be positional or adapted");
    }
  }

  if (j.contains("adam")) {
    check_keys(j["adam"], {"coupled_decay"}, "adam");
    read(j["adam"], "coupled_decay", cfg.adam_coupled_decay);
  }

  if (j.contains("eval")) {
    check_keys(j["eval"], {"filter_history"}, "eval");
    read(j["eval"], "filter_history", cfg.eval_filter_history);
  }

  if (j.contains("synth")) {
    const auto& s = j["synth"];
    check_keys(s, {"n_users", "n_items", "n_topics", "concentration",
                   "min_len", "max_len"},
               "synth");
    read(s, "n_users", cfg.synth.n_users);
    read(s, "n_items", cfg.synth.n_items);
    read(s, "n_topics", cfg.synth.n_topics);
    read(s, "concentration", cfg.synth.concentration);
    read(s, "min_len", cfg.synth.min_len);
    read(s, "max_len", cfg.synth.max_len);
  }

  if (j.contains("theory")) {
    const auto& t = j["theory"];
    check_keys(t, {"dpi_trials", "lower_bound_instances", "lower_bound_k",
                   "collision_sequences", "order", "order_train", "order_seeds"},
               "theory");
    read(t, "dpi_trials", cfg.theory_config.dpi_trials);
    read(t, "lower_bound_instances", cfg.theory_config.lower_bound_instances);
    read(t, "lower_bound_k", cfg.theory_config.lower_bound_k);
    read(t, "collision_sequences", cfg.theory_config.collision_sequences);
    read(t, "order_seeds", cfg.theory_config.order_seeds);
    if (t.contains("order")) {
      const auto& o = t["order"];
      check_keys(o, {"rho", "delta", "k", "catalog", "n_users", "history_len",
                     "mean_collision"},
                 "theory.order");
      read(o, "rho", cfg.theory_config.order.rho);
      read(o, "delta", cfg.theory_config.order.delta);
      read(o, "k", cfg.theory_config.order.k);
      read(o, "catalog", cfg.theory_config.order.catalog);
      read(o, "n_users", cfg.theory_config.order.n_users);
      read(o, "history_len", cfg.theory_config.order.history_len);
      read(o, "mean_collision", cfg.theory_config.order.mean_collision);
    }
    if (t.contains("order_train")) {
      const auto& o = t["order_train"];
      check_keys(o, {"d_model", "heads", "head_dim", "layers", "mlp", "dropout",
                     "lr", "weight_decay", "epochs", "patience", "batch",
                     "lambda", "tau"},
                 "theory.order_train");
      read(o, "d_model", cfg.theory_config.order_train.d_model);
      read(o, "heads", cfg.theory_config.order_train.n_heads);
      read(o, "head_dim", cfg.theory_config.order_train.head_dim);
      read(o, "layers", cfg.theory_config.order_train.n_layers);
      read(o, "mlp", cfg.theory_config.order_train.mlp_hidden);
      read(o, "dropout", cfg.theory_config.order_train.dropout);
      read(o, "lr", cfg.theory_config.order_train.lr);
      read(o, "weight_decay", cfg.theory_config.order_train.weight_decay);
      read(o, "epochs", cfg.theory_config.order_train.max_epochs);
      read(o, "patience", cfg.theory_config.order_train.patience);
      read(o, "batch", cfg.theory_config.order_train.batch_size);
      read(o, "lambda", cfg.theory_config.order_train.lambda);
      read(o, "tau", cfg.theory_config.order_train.tau);
    }
  }

  cfg.theory_config.order.seed = cfg.seed;
  cfg.training.seed = cfg.seed;
  cfg.training.coupled_decay = cfg.adam_coupled_decay;
  cfg.training.variant = fusion::variant_from_string(cfg.variant);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string RunConfig::canonical_json() const {
  json j;
  j["seed"] = seed;
  j["variant"] = variant;
  j["paths"] = {{"raw_data", paths.raw_data},
                {"raw_format", paths.raw_format},
                {"meta_jsonl", paths.meta_jsonl},
                {"fixtures", paths.fixtures},
                {"cache_dir", paths.cache_dir},
                {"out_dir", paths.out_dir},
                {"store", paths.store},
                {"checkpoints", paths.checkpoints},
                {"reports", paths.reports}};
  j["provider"] = {{"kind", provider.kind},
                   {"base_url", provider.base_url},
                   {"model_tag", provider.model_tag},
                   {"max_attempts", provider.max_attempts},
                   {"backoff_ms", provider.backoff_ms},
                   {"cache", provider.cache}};
  j["gvm"] = {{"gamma", gvm.gamma},
              {"chains_per_user", gvm.chains_per_user},
              {"eval_users", gvm.eval_users},
              {"k_min", gvm.k_min},
              {"k_max", gvm.k_max},
              {"exemplars", gvm.exemplars},
              {"theta_match", gvm.theta_match},
              {"min_cluster_size", gvm.min_cluster_size},
              {"temperature", gvm.temperature},
              {"top_p", gvm.top_p},
              {"max_tokens", gvm.max_tokens}};
  j["model"] = {{"d_item", model.d_model},     {"heads", model.n_heads},
                {"head_dim", model.head_dim},  {"layers", model.n_layers},
                {"mlp", model.mlp_hidden},     {"dropout", model.dropout},
                {"seq_len", model.seq_len}};
  j["training"] = {{"lr", training.lr},
                   {"weight_decay", training.weight_decay},
                   {"epochs", training.max_epochs},
                   {"patience", training.patience},
                   {"batch", training.batch_size},
                   {"lambda", training.lambda},
                   {"tau", training.tau}};
  j["nce"] = {{"z_stage", nce_stage == fusion::NceStage::kPositional
                              ? "positional"
                              : "adapted"}};
  j["adam"] = {{"coupled_decay", adam_coupled_decay}};
  j["eval"] = {{"filter_history", eval_filter_history}};
  j["synth"] = {{"n_users", synth.n_users},
                {"n_items", synth.n_items},
                {"n_topics", synth.n_topics},
                {"concentration", synth.concentration},
                {"min_len", synth.min_len},
                {"max_len", synth.max_len}};
  j["theory"] = {
      {"dpi_trials", theory_config.dpi_trials},
      {"lower_bound_instances", theory_config.lower_bound_instances},
      {"lower_bound_k", theory_config.lower_bound_k},
      {"collision_sequences", theory_config.collision_sequences},
      {"order_seeds", theory_config.order_seeds},
      {"order",
       {{"rho", theory_config.order.rho},
        {"delta", theory_config.order.delta},
        {"k", theory_config.order.k},
        {"catalog", theory_config.order.catalog},
        {"n_users", theory_config.order.n_users},
        {"history_len", theory_config.order.history_len},
        {"mean_collision", theory_config.order.mean_collision}}},
      {"order_train",
       {{"d_model", theory_config.order_train.d_model},
        {"heads", theory_config.order_train.n_heads},
        {"head_dim", theory_config.order_train.head_dim},
        {"layers", theory_config.order_train.n_layers},
        {"mlp", theory_config.order_train.mlp_hidden},
        {"dropout", theory_config.order_train.dropout},
        {"lr", theory_config.order_train.lr},
        {"weight_decay", theory_config.order_train.weight_decay},
        {"epochs", theory_config.order_train.max_epochs},
        {"patience", theory_config.order_train.patience},
        {"batch", theory_config.order_train.batch_size},
        {"lambda", theory_config.order_train.lambda},
        {"tau", theory_config.order_train.tau}}}};
  return j.dump();
}

}  // namespace scoter::config
