#pragma once

// Bagged variance-reduction regression forest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/tree.hpp"

namespace digitwise::learner {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_samples_leaf = 5;
  double max_features = 1.0 / 3.0;  // fraction of features tried per split; 1 = all
  bool bootstrap = true;

  void validate() const {
    if (n_trees <= 0) throw ConfigError("forest: n_trees must be >= 1");
    if (max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
    if (min_samples_leaf < 1) throw ConfigError("forest: min_samples_leaf must be >= 1");
    if (!(max_features > 0.0 && max_features <= 1.0)) throw ConfigError("forest: max_features must lie in (0, 1]");
  }
};

struct RandomForest {
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  double predict_row(std::span<const double> row) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict_row(row);
    return trees.empty() ? kMissing : s / static_cast<double>(trees.size());
  }

  std::vector<double> predict(const Matrix& x) const {
    std::vector<double> out(x.rows(), 0.0);
    for (const auto& t : trees)
      for (std::size_t r = 0; r < x.rows(); ++r) out[r] += t.predict_row(x, r);
    for (auto& v : out) v /= static_cast<double>(trees.size());
    return out;
  }
};

/// Each tree minimises squared error directly: gradients -y, unit
/// hessians and no L2 term make the leaf weight the node mean and the split
/// gain the reduction in sum of squared errors.
inline RandomForest fit_random_forest(const Dataset& data, const ForestConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = data.size();
  if (n < 2) throw ConfigError("forest: at least 2 training rows required");
  for (double v : data.y)
    if (!std::isfinite(v)) throw ConfigError("forest: targets must be finite");

  RandomForest forest;
  forest.feature_names = data.feature_names;
  const SortedColumns sorted = presort(data.x);
  std::vector<double> grad(n), hess(n, 1.0), weight(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) grad[i] = -data.y[i];
  const std::size_t d = data.x.cols();
  const std::size_t per_split = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.max_features * static_cast<double>(d) - 1e-12)));
  TreeConfig tc{cfg.max_depth, static_cast<double>(cfg.min_samples_leaf), 0.0, per_split >= d ? 0 : per_split};
  Rng rng(seed);
  for (int t = 0; t < cfg.n_trees; ++t) {
    if (cfg.bootstrap) {
      std::fill(weight.begin(), weight.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) weight[rng.below(n)] += 1.0;
    }
    TreeFitOptions opt;
    opt.row_weight = weight;
    opt.sorted = &sorted;
    opt.rng = &rng;
    forest.trees.push_back(fit_tree(data.x, grad, hess, tc, opt));
  }
  return forest;
}

/// Mean decrease in impurity, normalised to sum 1.
inline std::map<std::string, double> impurity_importance(const RandomForest& forest) {
  return gain_importance(forest.trees, forest.feature_names);
}

}  // namespace digitwise::learner
