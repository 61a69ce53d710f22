#pragma once

#include <cmath>
#include <optional>
#include <span>

#include "digitwise/core/error.hpp"
#include "digitwise/learner/stats.hpp"

namespace digitwise::learner {

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> pearson;
  std::optional<double> spearman;
};

inline double mean_absolute_error(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw ConfigError("mae: length mismatch or empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::fabs(y_true[i] - y_pred[i]);
  return s / static_cast<double>(y_true.size());
}

inline double root_mean_squared_error(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw ConfigError("rmse: length mismatch or empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  return std::sqrt(s / static_cast<double>(y_true.size()));
}

inline Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  Metrics m;
  m.mae = mean_absolute_error(y_true, y_pred);
  m.rmse = root_mean_squared_error(y_true, y_pred);
  m.pearson = learner::pearson(y_true, y_pred);
  m.spearman = learner::spearman(y_true, y_pred);
  return m;
}

}  // namespace digitwise::learner
