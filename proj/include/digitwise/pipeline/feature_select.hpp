#pragma once

// Correlation-penalized random-forest importance.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/forest.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/stats.hpp"

namespace digitwise::pipeline {

struct FeatureEntry {
  std::string name;
  double raw_importance = 0.0;
  double correlation_penalty = 1.0;
  double penalized_importance = 0.0;
  bool selected = false;
};

struct FeatureCatalog {
  double threshold = 0.0;
  std::vector<FeatureEntry> features;

  std::vector<std::string> selected_names() const {
    std::vector<std::string> out;
    for (const auto& f : features)
      if (f.selected) out.push_back(f.name);
    return out;
  }

  const FeatureEntry& at(const std::string& name) const {
    for (const auto& f : features)
      if (f.name == name) return f;
    throw NotFoundError("feature '" + name + "' not in catalog");
  }

  /// Same penalized scores, different cut.
  FeatureCatalog with_threshold(double t) const {
    FeatureCatalog c = *this;
    c.threshold = t;
    for (auto& f : c.features) f.selected = f.penalized_importance >= t;
    return c;
  }
};

inline bool is_identifier_column(const std::string& name) {
  return name == "user_id" || name == "session_id" || name == "video_id" || name == "engagement";
}

inline learner::ForestConfig default_selection_forest() { return {100, 8, 5, 1.0 / 3.0, true}; }

/// Sum over all candidates g of |spearman(f, g)| on pairwise-complete rows;
/// undefined correlations count as 0 and the self term as 1.
inline std::vector<double> correlation_penalties(const learner::Matrix& x) {
  const std::size_t d = x.cols();
  std::vector<double> penalty(d, 1.0);
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t g = f + 1; g < d; ++g) {
      const auto r = learner::spearman_pairwise(x.column(f), x.column(g));
      const double a = r ? std::fabs(*r) : 0.0;
      penalty[f] += a;
      penalty[g] += a;
    }
  return penalty;
}

inline FeatureCatalog select_features(const learner::Dataset& data, double threshold, std::uint64_t seed,
                                      const learner::ForestConfig& forest = default_selection_forest()) {
  const std::size_t d = data.x.cols();
  if (d < 2) throw ConfigError("select_features: at least 2 candidate features required");
  if (data.size() < 50) throw ConfigError("select_features: at least 50 records required");
  for (const auto& name : data.feature_names)
    if (is_identifier_column(name)) throw ConfigError("select_features: '" + name + "' is not a candidate feature");

  const auto rf = learner::fit_random_forest(data, forest, derive_seed(seed, "feature-selection"));
  const auto raw = learner::impurity_importance(rf);
  const auto penalty = correlation_penalties(data.x);

  FeatureCatalog cat;
  cat.threshold = threshold;
  double total = 0.0;
  for (std::size_t f = 0; f < d; ++f) {
    FeatureEntry e;
    e.name = data.feature_names[f];
    e.raw_importance = raw.at(e.name);
    e.correlation_penalty = penalty[f];
    e.penalized_importance = e.raw_importance / penalty[f];
    total += e.penalized_importance;
    cat.features.push_back(e);
  }
  for (auto& e : cat.features) {
    e.penalized_importance = total > 0.0 ? e.penalized_importance / total : 1.0 / static_cast<double>(d);
    e.selected = e.penalized_importance >= threshold;
  }
  return cat;
}

inline nlohmann::ordered_json to_json(const FeatureCatalog& c) {
  nlohmann::ordered_json j;
  j["schema"] = "digitwise.feature_catalog/v1";
  j["threshold"] = c.threshold;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& f : c.features)
    arr.push_back({{"name", f.name},
                   {"raw_importance", f.raw_importance},
                   {"correlation_penalty", f.correlation_penalty},
                   {"penalized_importance", f.penalized_importance},
                   {"selected", f.selected}});
  j["features"] = std::move(arr);
  j["selected"] = c.selected_names();
  return j;
}

inline FeatureCatalog catalog_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != "digitwise.feature_catalog/v1")
    throw SchemaError("feature catalog: unsupported schema");
  try {
    FeatureCatalog c;
    c.threshold = j.at("threshold").get<double>();
    for (const auto& f : j.at("features"))
      c.features.push_back({f.at("name").get<std::string>(), f.at("raw_importance").get<double>(),
                            f.at("correlation_penalty").get<double>(), f.at("penalized_importance").get<double>(),
                            f.at("selected").get<bool>()});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("feature catalog: ") + e.what());
  }
}

inline void save_catalog(const std::filesystem::path& path, const FeatureCatalog& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write catalog '" + path.string() + "'");
  out << to_json(c).dump(2) << '\n';
}

inline FeatureCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog '" + path.string() + "'");
  try {
    return catalog_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("catalog '" + path.string() + "': " + e.what());
  }
}

}  // namespace digitwise::pipeline
