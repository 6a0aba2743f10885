#include "icumort/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "icumort/error.hpp"

namespace icumort::config {

namespace {

using nlohmann::json;

template <class T>
void take(const json& section, const char* key, T& into, std::set<std::string>& seen) {
  seen.insert(key);
  if (section.contains(key)) into = section.at(key).get<T>();
}

void reject_unknown(const json& section, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : section.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    reject_unknown(j, {"train", "split", "bootstrap"}, "configuration");
    if (j.contains("train")) {
      const json& t = j.at("train");
      std::set<std::string> k;
      take(t, "epochs", c.train.epochs, k);
      take(t, "batch_size", c.train.batch_size, k);
      take(t, "dropout", c.train.dropout, k);
      take(t, "learning_rate", c.train.learning_rate, k);
      take(t, "early_stop_patience", c.train.early_stop_patience, k);
      take(t, "seed", c.train.seed, k);
      reject_unknown(t, k, "section 'train'");
    }
    if (j.contains("split")) {
      const json& s = j.at("split");
      std::set<std::string> k;
      take(s, "train_frac", c.split.train_frac, k);
      take(s, "val_frac", c.split.val_frac, k);
      take(s, "test_frac", c.split.test_frac, k);
      take(s, "seed", c.split.seed, k);
      reject_unknown(s, k, "section 'split'");
    }
    if (j.contains("bootstrap")) {
      const json& b = j.at("bootstrap");
      std::set<std::string> k;
      take(b, "replicates", c.bootstrap.replicates, k);
      take(b, "base_seed", c.bootstrap.base_seed, k);
      take(b, "threads", c.bootstrap.threads, k);
      reject_unknown(b, k, "section 'bootstrap'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  c.bootstrap.split = c.split;
  fusion::validate(c.train);
  eval::validate(c.split);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string snapshot(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"dropout", c.train.dropout},
                {"learning_rate", c.train.learning_rate},
                {"early_stop_patience", c.train.early_stop_patience},
                {"seed", c.train.seed}};
  j["split"] = {{"train_frac", c.split.train_frac}, {"val_frac", c.split.val_frac}, {"test_frac", c.split.test_frac}};
  j["bootstrap"] = {{"replicates", c.bootstrap.replicates}, {"threads", c.bootstrap.threads}};
  nlohmann::ordered_json variants = nlohmann::ordered_json::object();
  for (const auto& name : fusion::variant_names()) {
    const auto set = fusion::model_variant(name);
    nlohmann::ordered_json branches = nlohmann::ordered_json::array();
    for (const auto& b : set.branches)
      branches.push_back(std::string(fusion::modality_name(b.modality)) + " " + std::to_string(b.in_dim) + "->" +
                         std::to_string(b.out_dim));
    variants[name] = {{"score_only", set.score_only}, {"branches", branches}, {"fused_dim", set.fused_dim()}};
  }
  j["variants"] = variants;
  return j.dump(2);
}

}  // namespace icumort::config
