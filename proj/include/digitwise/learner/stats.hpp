#pragma once

// Descriptive statistics and correlation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "digitwise/core/error.hpp"

namespace digitwise::learner {

inline double mean(std::span<const double> v) {
  if (v.empty()) return kMissing;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation (ddof = 0).
inline double stddev(std::span<const double> v) {
  if (v.empty()) return kMissing;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

/// Biased Fisher-Pearson coefficient g1 = m3 / m2^(3/2).
/// Null for fewer than three samples or zero variance.
inline std::optional<double> skewness(std::span<const double> v) {
  if (v.size() < 3) return std::nullopt;
  const double m = mean(v);
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  const double n = static_cast<double>(v.size());
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) return std::nullopt;
  return m3 / std::pow(m2, 1.5);
}

/// Pearson correlation; null when either side has zero variance or the
/// lengths differ / are below two.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// 1-based ranks; ties get the average of the ranks they span.
inline std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

/// Spearman rank correlation with mid-rank tie handling.
/// Requires equal lengths >= 3; null on zero rank variance.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 3) return std::nullopt;
  const auto ra = mid_ranks(a);
  const auto rb = mid_ranks(b);
  return pearson(ra, rb);
}

/// Spearman over the rows where both inputs are present.
inline std::optional<double> spearman_pairwise(std::span<const double> a, std::span<const double> b) {
  std::vector<double> xa, xb;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    if (is_missing(a[i]) || is_missing(b[i])) continue;
    xa.push_back(a[i]);
    xb.push_back(b[i]);
  }
  return spearman(xa, xb);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return kMissing;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace digitwise::learner
