#pragma once

// Versioned JSON documents for tree ensembles. Doubles are written with
// round-trip precision, so predictions survive a save/load exactly.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/learner/gbdt.hpp"

namespace digitwise::learner {

inline constexpr const char* kModelSchema = "digitwise.tree_ensemble/v1";

namespace detail {

inline nlohmann::ordered_json node_to_json(const Tree& t, int id) {
  const auto& n = t.nodes[static_cast<std::size_t>(id)];
  nlohmann::ordered_json j;
  if (n.is_leaf()) {
    j["leaf"] = n.weight;
    j["cover"] = n.cover;
    return j;
  }
  j["feature"] = n.feature;
  j["threshold"] = n.threshold;
  j["missing"] = n.missing_goes == MissingGoes::left ? "left" : "right";
  j["gain"] = n.split_gain;
  j["cover"] = n.cover;
  j["left"] = node_to_json(t, n.left);
  j["right"] = node_to_json(t, n.right);
  return j;
}

inline int node_from_json(const nlohmann::json& j, Tree& t, std::size_t n_features) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("leaf")) {
    t.nodes[id].weight = j.at("leaf").get<double>();
    t.nodes[id].cover = j.value("cover", 0.0);
    return id;
  }
  TreeNode n;
  n.feature = j.at("feature").get<int>();
  if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= n_features)
    throw SchemaError("model: node feature index out of range");
  n.threshold = j.at("threshold").get<double>();
  const auto missing = j.at("missing").get<std::string>();
  if (missing != "left" && missing != "right") throw SchemaError("model: missing must be 'left' or 'right'");
  n.missing_goes = missing == "left" ? MissingGoes::left : MissingGoes::right;
  n.split_gain = j.at("gain").get<double>();
  n.cover = j.value("cover", 0.0);
  t.nodes[id] = n;
  const int l = node_from_json(j.at("left"), t, n_features);
  const int r = node_from_json(j.at("right"), t, n_features);
  t.nodes[id].left = l;
  t.nodes[id].right = r;
  return id;
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const TreeEnsemble& m) {
  nlohmann::ordered_json j;
  j["schema"] = kModelSchema;
  j["base_score"] = m.base_score;
  j["learning_rate"] = m.learning_rate;
  j["feature_names"] = m.feature_names;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
  j["trees"] = std::move(trees);
  return j;
}

inline TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != kModelSchema)
    throw SchemaError("model: unsupported schema '" + j.value("schema", std::string{}) + "'");
  TreeEnsemble m;
  m.base_score = j.at("base_score").get<double>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  for (const auto& tj : j.at("trees")) {
    Tree t;
    detail::node_from_json(tj, t, m.feature_names.size());
    m.trees.push_back(std::move(t));
  }
  return m;
}

inline nlohmann::ordered_json to_json(const GbdtConfig& c) {
  return {{"n_trees", c.n_trees},       {"max_depth", c.max_depth}, {"learning_rate", c.learning_rate},
          {"min_samples_leaf", c.min_samples_leaf}, {"colsample", c.colsample}, {"l2", c.l2}};
}

inline GbdtConfig config_from_json(const nlohmann::json& j) {
  GbdtConfig c;
  c.n_trees = j.at("n_trees").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  c.colsample = j.at("colsample").get<double>();
  c.l2 = j.at("l2").get<double>();
  return c;
}

inline void save_model(const std::filesystem::path& path, const TreeEnsemble& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model '" + path.string() + "'");
  out << to_json(m).dump() << '\n';
}

inline TreeEnsemble load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model '" + path.string() + "'");
  try {
    return ensemble_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("model '" + path.string() + "': " + e.what());
  }
}

}  // namespace digitwise::learner
