#pragma once

// Exact-greedy regression trees with second-order split gain.
//
// Growth is level-wise over presorted feature columns: every level scans
// each feature's sorted row list once, so a level costs O(rows * features)
// independent of the number of nodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/matrix.hpp"

namespace digitwise::learner {

enum class MissingGoes { left, right };

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x < threshold go left
  MissingGoes missing_goes = MissingGoes::left;
  int left = -1;
  int right = -1;
  double split_gain = 0.0;
  double weight = 0.0;  // leaf output
  double cover = 0.0;   // hessian sum reaching the node

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  template <class RowAccess>
  double predict(RowAccess&& value_of) const {
    int id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& n = nodes[id];
      const double v = value_of(static_cast<std::size_t>(n.feature));
      const bool go_left = is_missing(v) ? n.missing_goes == MissingGoes::left : v < n.threshold;
      id = go_left ? n.left : n.right;
    }
    return nodes[id].weight;
  }

  double predict_row(std::span<const double> row) const {
    return predict([&](std::size_t f) { return row[f]; });
  }

  double predict_row(const Matrix& x, std::size_t r) const {
    return predict([&](std::size_t f) { return x(r, f); });
  }

  int depth() const { return depth_from(0); }

 private:
  int depth_from(int id) const {
    if (nodes.empty() || nodes[id].is_leaf()) return 0;
    return 1 + std::max(depth_from(nodes[id].left), depth_from(nodes[id].right));
  }
};

struct TreeConfig {
  int max_depth = 3;
  double min_samples_leaf = 1.0;
  double l2 = 1.0;  // lambda in the gain and leaf weight
  // 0 = every allowed feature at every node; otherwise a seeded sample of
  // this many features per node (random-forest style).
  std::size_t features_per_split = 0;
};

/// Row indices of each column sorted by value; missing values excluded.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;
};

inline SortedColumns presort(const Matrix& x) {
  SortedColumns s;
  s.order.resize(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto col = x.column(f);
    auto& o = s.order[f];
    o.reserve(x.rows());
    for (std::uint32_t r = 0; r < x.rows(); ++r)
      if (!is_missing(col[r])) o.push_back(r);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }
  return s;
}

struct TreeFitOptions {
  std::span<const double> row_weight;              // multiplicity per row; empty = all 1
  std::span<const std::size_t> allowed_features;   // empty = all columns
  const SortedColumns* sorted = nullptr;           // reuse a presort of x
  Rng* rng = nullptr;                              // required when features_per_split > 0
};

/// Relative tolerance under which two gains count as tied. Ties keep the
/// earlier candidate in (feature, threshold, missing-left-first) order.
inline constexpr double kGainTieTolerance = 1e-12;

inline bool gain_beats(double candidate, double best) {
  return candidate > best + kGainTieTolerance * std::fabs(best);
}

inline double split_gain(double gl, double hl, double gr, double hr, double l2) {
  const double g = gl + gr, h = hl + hr;
  return gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2);
}

inline double leaf_weight(double g, double h, double l2) {
  const double denom = h + l2;
  return denom > 0.0 ? -g / denom : 0.0;
}

inline double split_midpoint(double lo, double hi) {
  const double mid = 0.5 * lo + 0.5 * hi;
  return mid > lo ? mid : hi;
}

/// Fits one tree to gradients/hessians. Greedy best split per node,
/// missing values routed to the gain-maximising side; growth stops at
/// max_depth, min_samples_leaf, or non-positive gain.
inline Tree fit_tree(const Matrix& x, std::span<const double> grad, std::span<const double> hess,
                     const TreeConfig& cfg, const TreeFitOptions& opt = {}) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (grad.size() != n || hess.size() != n) throw ConfigError("fit_tree: gradient/hessian length mismatch");
  if (cfg.max_depth < 0) throw ConfigError("fit_tree: max_depth must be >= 0");
  if (cfg.features_per_split > 0 && opt.rng == nullptr) throw ConfigError("fit_tree: per-split sampling needs an rng");

  SortedColumns local;
  const SortedColumns* sorted = opt.sorted;
  if (sorted == nullptr) {
    local = presort(x);
    sorted = &local;
  }

  std::vector<std::size_t> features;
  if (opt.allowed_features.empty()) {
    features.resize(d);
    std::iota(features.begin(), features.end(), std::size_t{0});
  } else {
    features.assign(opt.allowed_features.begin(), opt.allowed_features.end());
    std::sort(features.begin(), features.end());
  }
  auto weight_of = [&](std::size_t r) { return opt.row_weight.empty() ? 1.0 : opt.row_weight[r]; };

  struct Slot {
    int node = 0;
    double g = 0, h = 0, c = 0;
    std::vector<char> allowed;  // per feature, used only with per-split sampling
    // best split so far
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    MissingGoes best_missing = MissingGoes::left;
    double bl_g = 0, bl_h = 0, bl_c = 0;
  };

  Tree tree;
  tree.nodes.emplace_back();
  std::vector<int> slot_of(n, -1);
  std::vector<Slot> slots(1);
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weight_of(r);
    if (w <= 0.0) continue;
    slot_of[r] = 0;
    slots[0].g += grad[r] * w;
    slots[0].h += hess[r] * w;
    slots[0].c += w;
  }

  auto sample_features = [&](Slot& s) {
    if (cfg.features_per_split == 0 || cfg.features_per_split >= features.size()) return;
    s.allowed.assign(d, 0);
    std::vector<std::size_t> pool = features;
    const std::size_t k = cfg.features_per_split;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(opt.rng->below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      s.allowed[pool[i]] = 1;
    }
  };
  sample_features(slots[0]);

  auto finalize_leaf = [&](const Slot& s) {
    auto& node = tree.nodes[s.node];
    node.weight = leaf_weight(s.g, s.h, cfg.l2);
    node.cover = s.h;
  };

  std::vector<double> nm_g, nm_h, nm_c, acc_g, acc_h, acc_c, last;
  std::vector<char> seen;
  for (int depth = 0; !slots.empty(); ++depth) {
    const std::size_t ns = slots.size();
    if (depth >= cfg.max_depth) {
      for (auto& s : slots) finalize_leaf(s);
      break;
    }
    std::vector<char> splittable(ns);
    for (std::size_t i = 0; i < ns; ++i) splittable[i] = slots[i].c >= 2.0 * cfg.min_samples_leaf;

    for (std::size_t f : features) {
      const auto& order = sorted->order[f];
      auto col = x.column(f);
      nm_g.assign(ns, 0.0);
      nm_h.assign(ns, 0.0);
      nm_c.assign(ns, 0.0);
      for (std::uint32_t r : order) {
        const int s = slot_of[r];
        if (s < 0) continue;
        const double w = weight_of(r);
        nm_g[s] += grad[r] * w;
        nm_h[s] += hess[r] * w;
        nm_c[s] += w;
      }
      acc_g.assign(ns, 0.0);
      acc_h.assign(ns, 0.0);
      acc_c.assign(ns, 0.0);
      last.assign(ns, 0.0);
      seen.assign(ns, 0);
      for (std::uint32_t r : order) {
        const int si = slot_of[r];
        if (si < 0 || !splittable[si]) continue;
        Slot& s = slots[si];
        if (!s.allowed.empty() && !s.allowed[f]) continue;
        const double v = col[r];
        if (seen[si] && v > last[si]) {
          const double mg = s.g - nm_g[si], mh = s.h - nm_h[si], mc = s.c - nm_c[si];
          const double thr = split_midpoint(last[si], v);
          for (MissingGoes side : {MissingGoes::left, MissingGoes::right}) {
            if (side == MissingGoes::right && mc <= 0.0) break;
            const bool ml = side == MissingGoes::left;
            const double gl = acc_g[si] + (ml ? mg : 0.0);
            const double hl = acc_h[si] + (ml ? mh : 0.0);
            const double cl = acc_c[si] + (ml ? mc : 0.0);
            const double cr = s.c - cl;
            if (cl < cfg.min_samples_leaf || cr < cfg.min_samples_leaf) continue;
            const double gain = split_gain(gl, hl, s.g - gl, s.h - hl, cfg.l2);
            if (gain_beats(gain, s.best_gain)) {
              s.best_gain = gain;
              s.best_feature = static_cast<int>(f);
              s.best_threshold = thr;
              s.best_missing = side;
              s.bl_g = gl;
              s.bl_h = hl;
              s.bl_c = cl;
            }
          }
        }
        const double w = weight_of(r);
        acc_g[si] += grad[r] * w;
        acc_h[si] += hess[r] * w;
        acc_c[si] += w;
        last[si] = v;
        seen[si] = 1;
      }
    }

    // Apply splits and build the next level.
    std::vector<Slot> next;
    std::vector<int> left_slot(ns, -1);
    for (std::size_t i = 0; i < ns; ++i) {
      Slot& s = slots[i];
      if (s.best_feature < 0 || !(s.best_gain > 0.0)) {
        finalize_leaf(s);
        continue;
      }
      const int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[s.node];
      node.feature = s.best_feature;
      node.threshold = s.best_threshold;
      node.missing_goes = s.best_missing;
      node.split_gain = s.best_gain;
      node.cover = s.h;
      node.left = left_id;
      node.right = left_id + 1;

      Slot l, r;
      l.node = left_id;
      l.g = s.bl_g;
      l.h = s.bl_h;
      l.c = s.bl_c;
      r.node = left_id + 1;
      r.g = s.g - s.bl_g;
      r.h = s.h - s.bl_h;
      r.c = s.c - s.bl_c;
      left_slot[i] = static_cast<int>(next.size());
      next.push_back(std::move(l));
      next.push_back(std::move(r));
    }
    for (auto& s : next) sample_features(s);
    for (std::size_t r = 0; r < n; ++r) {
      const int si = slot_of[r];
      if (si < 0) continue;
      if (left_slot[si] < 0) {
        slot_of[r] = -1;
        continue;
      }
      const auto& node = tree.nodes[slots[si].node];
      const double v = x(r, static_cast<std::size_t>(node.feature));
      const bool go_left = is_missing(v) ? node.missing_goes == MissingGoes::left : v < node.threshold;
      slot_of[r] = go_left ? left_slot[si] : left_slot[si] + 1;
    }
    slots = std::move(next);
  }
  return tree;
}

}  // namespace digitwise::learner
