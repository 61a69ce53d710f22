#pragma once

// Squared-error gradient-boosted regression trees.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/metrics.hpp"
#include "digitwise/learner/tree.hpp"

namespace digitwise::learner {

struct GbdtConfig {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 5;
  double colsample = 1.0;  // fraction of features offered to each tree
  double l2 = 1.0;

  void validate() const {
    if (n_trees <= 0) throw ConfigError("gbdt: n_trees must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("gbdt: learning_rate must lie in (0, 1]");
    if (max_depth < 0) throw ConfigError("gbdt: max_depth must be >= 0");
    if (min_samples_leaf < 1) throw ConfigError("gbdt: min_samples_leaf must be >= 1");
    if (!(colsample > 0.0 && colsample <= 1.0)) throw ConfigError("gbdt: colsample must lie in (0, 1]");
    if (!(l2 >= 0.0)) throw ConfigError("gbdt: l2 must be >= 0");
  }

  auto operator<=>(const GbdtConfig&) const = default;
};

/// Named-feature record used for prediction by name. Missing values may be
/// given as kMissing; extra keys are ignored.
using FeatureRecord = std::unordered_map<std::string, double>;

struct TreeEnsemble {
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  /// Model that predicts `value` everywhere (no trees).
  static TreeEnsemble constant(double value, std::vector<std::string> names) {
    return TreeEnsemble{value, 1.0, {}, std::move(names)};
  }

  double predict_row(std::span<const double> row) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict_row(row);
    return base_score + learning_rate * s;
  }

  std::vector<double> predict(const Matrix& x) const {
    if (x.cols() != feature_names.size()) throw SchemaError("predict: matrix has wrong number of columns");
    std::vector<double> out(x.rows(), 0.0);
    for (const auto& t : trees)
      for (std::size_t r = 0; r < x.rows(); ++r) out[r] += t.predict_row(x, r);
    for (auto& v : out) v = base_score + learning_rate * v;
    return out;
  }

  double predict(const FeatureRecord& record) const {
    std::vector<double> row(feature_names.size());
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
      auto it = record.find(feature_names[i]);
      if (it == record.end()) throw SchemaError("predict: record lacks feature '" + feature_names[i] + "'");
      row[i] = it->second;
    }
    return predict_row(row);
  }
};

inline std::vector<std::size_t> sample_columns(std::size_t d, double fraction, Rng& rng) {
  std::vector<std::size_t> pool(d);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t k = std::min(d, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(d) - 1e-12)));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(d - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(std::max<std::size_t>(k, 1));
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Boosting with residual_t = y - prediction_{t-1}, unit hessians, and a
/// seeded feature subset per tree. If `round_rmse` is given it receives the
/// training RMSE before the first tree and after every round.
inline TreeEnsemble fit_gbdt(const Dataset& data, const GbdtConfig& cfg, std::uint64_t seed,
                             std::vector<double>* round_rmse = nullptr) {
  cfg.validate();
  const std::size_t n = data.size();
  if (n < 10) throw ConfigError("gbdt: at least 10 training rows required");
  if (data.x.rows() != n || data.x.cols() != data.feature_names.size())
    throw SchemaError("gbdt: dataset shape mismatch");
  for (double v : data.y)
    if (!std::isfinite(v)) throw ConfigError("gbdt: targets must be finite");

  TreeEnsemble model;
  model.feature_names = data.feature_names;
  model.learning_rate = cfg.learning_rate;
  model.base_score = mean(data.y);

  const SortedColumns sorted = presort(data.x);
  std::vector<double> pred(n, model.base_score), grad(n), hess(n, 1.0);
  TreeConfig tc{cfg.max_depth, static_cast<double>(cfg.min_samples_leaf), cfg.l2, 0};
  Rng rng(seed);
  if (round_rmse) round_rmse->push_back(root_mean_squared_error(data.y, pred));
  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - data.y[i];
    const auto cols = sample_columns(data.x.cols(), cfg.colsample, rng);
    TreeFitOptions opt;
    opt.allowed_features = cols;
    opt.sorted = &sorted;
    Tree tree = fit_tree(data.x, grad, hess, tc, opt);
    for (std::size_t i = 0; i < n; ++i) pred[i] += cfg.learning_rate * tree.predict_row(data.x, i);
    model.trees.push_back(std::move(tree));
    if (round_rmse) round_rmse->push_back(root_mean_squared_error(data.y, pred));
  }
  return model;
}

/// Per-feature sum of split gains, normalised to sum 1. All-zero when the
/// model contains no split.
inline std::map<std::string, double> gain_importance(const std::vector<Tree>& trees,
                                                     const std::vector<std::string>& names) {
  std::vector<double> acc(names.size(), 0.0);
  for (const auto& t : trees)
    for (const auto& node : t.nodes)
      if (!node.is_leaf()) acc[static_cast<std::size_t>(node.feature)] += node.split_gain;
  double total = 0.0;
  for (double v : acc) total += v;
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = total > 0.0 ? acc[i] / total : 0.0;
  return out;
}

inline std::map<std::string, double> gain_importance(const TreeEnsemble& model) {
  return gain_importance(model.trees, model.feature_names);
}

inline bool has_splits(const TreeEnsemble& model) {
  for (const auto& t : model.trees)
    for (const auto& node : t.nodes)
      if (!node.is_leaf()) return true;
  return false;
}

}  // namespace digitwise::learner
