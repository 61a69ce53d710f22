#pragma once

// Successive-halving grid search with k-fold cross-validation, using the
// number of training rows as the resource.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/metrics.hpp"

namespace digitwise::learner {

struct SearchSpace {
  std::vector<int> n_trees{50, 100};
  std::vector<int> max_depth{2, 3, 4};
  std::vector<double> learning_rate{0.1};
  std::vector<int> min_samples_leaf{5};
  std::vector<double> colsample{0.6, 1.0};
  std::vector<double> l2{1.0};

  std::size_t size() const {
    return n_trees.size() * max_depth.size() * learning_rate.size() * min_samples_leaf.size() *
           colsample.size() * l2.size();
  }

  /// Cartesian product in lexicographic order (n_trees outermost, l2
  /// innermost). The index in this list is the tie-break order.
  std::vector<GbdtConfig> enumerate() const {
    std::vector<GbdtConfig> out;
    for (int nt : n_trees)
      for (int md : max_depth)
        for (double lr : learning_rate)
          for (int msl : min_samples_leaf)
            for (double cs : colsample)
              for (double l : l2) {
                GbdtConfig c{nt, md, lr, msl, cs, l};
                c.validate();
                out.push_back(c);
              }
    return out;
  }
};

struct HalvingOptions {
  int folds = 3;
  double factor = 2.0;
  double min_fraction = 0.125;
};

struct LeaderboardEntry {
  int rung = 0;
  std::size_t candidate = 0;  // index into SearchSpace::enumerate()
  GbdtConfig config;
  std::size_t n_rows = 0;
  double mean_mae = 0.0;
};

struct HalvingResult {
  GbdtConfig best;
  std::size_t best_index = 0;
  std::vector<std::size_t> rung_sizes;
  std::vector<LeaderboardEntry> leaderboard;
};

/// Mean k-fold MAE of one configuration on the given rows. Folds are
/// contiguous blocks of `rows`.
inline double cross_validated_mae(const Dataset& data, std::span<const std::size_t> rows, const GbdtConfig& cfg,
                                  int folds, std::uint64_t seed) {
  double acc = 0.0;
  const std::size_t m = rows.size();
  for (int k = 0; k < folds; ++k) {
    const std::size_t lo = m * static_cast<std::size_t>(k) / static_cast<std::size_t>(folds);
    const std::size_t hi = m * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(folds);
    std::vector<std::size_t> train, test;
    train.reserve(m - (hi - lo));
    for (std::size_t i = 0; i < m; ++i) (i >= lo && i < hi ? test : train).push_back(rows[i]);
    const Dataset tr = data.subset(train);
    const Dataset te = data.subset(test);
    const auto model = fit_gbdt(tr, cfg, seed);
    acc += mean_absolute_error(te.y, model.predict(te.x));
  }
  return acc / folds;
}

inline HalvingResult halving_search(const SearchSpace& space, const Dataset& data, const HalvingOptions& opt,
                                    std::uint64_t seed) {
  const auto configs = space.enumerate();
  if (configs.empty()) throw ConfigError("halving_search: empty search space");
  if (opt.folds < 2) throw ConfigError("halving_search: folds must be >= 2");
  if (!(opt.factor > 1.0)) throw ConfigError("halving_search: factor must be > 1");
  if (!(opt.min_fraction > 0.0 && opt.min_fraction <= 1.0))
    throw ConfigError("halving_search: min_fraction must lie in (0, 1]");

  HalvingResult result;
  if (configs.size() == 1) {
    result.best = configs.front();
    result.rung_sizes = {1};
    return result;
  }
  const std::size_t n = data.size();
  const auto folds = static_cast<std::size_t>(opt.folds);
  if (n < folds * 10) throw ConfigError("halving_search: need at least folds*10 rows");
  if (opt.min_fraction * static_cast<double>(n) < static_cast<double>(folds * 5))
    throw ConfigError("halving_search: min_fraction * rows must be >= folds*5");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "halving-rows"));
  rng.shuffle(order);
  const std::uint64_t fit_seed = derive_seed(seed, "halving-fit");

  std::vector<std::size_t> alive(configs.size());
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  double fraction = opt.min_fraction;
  result.rung_sizes.push_back(alive.size());
  for (int rung = 0; alive.size() > 1; ++rung) {
    const auto m = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    std::span<const std::size_t> rows(order.data(), m);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t c : alive) {
      const double score = cross_validated_mae(data, rows, configs[c], opt.folds, fit_seed);
      scored.emplace_back(score, c);
      result.leaderboard.push_back({rung, c, configs[c], m, score});
    }
    std::sort(scored.begin(), scored.end());
    const auto keep = static_cast<std::size_t>(std::ceil(static_cast<double>(alive.size()) / opt.factor - 1e-12));
    alive.clear();
    for (std::size_t i = 0; i < std::max<std::size_t>(keep, 1); ++i) alive.push_back(scored[i].second);
    result.rung_sizes.push_back(alive.size());
    fraction = std::min(1.0, fraction * opt.factor);
  }
  result.best_index = alive.front();
  result.best = configs[result.best_index];
  return result;
}

}  // namespace digitwise::learner
