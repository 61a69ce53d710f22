#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/metrics.hpp"

namespace digitwise::learner {

/// Increase in MAE when one feature column is shuffled, averaged over
/// `repeats` seeded shuffles. Negative values mean shuffling helped.
/// Works with any model exposing `std::vector<double> predict(const Matrix&)`.
template <class Model>
std::map<std::string, double> permutation_importance(const Model& model, const Dataset& data, int repeats,
                                                     std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("permutation_importance: repeats must be >= 1");
  if (data.size() < 2) throw ConfigError("permutation_importance: need at least 2 rows");
  const double baseline = mean_absolute_error(data.y, model.predict(data.x));
  std::map<std::string, double> out;
  Matrix shuffled = data.x;
  for (std::size_t f = 0; f < data.x.cols(); ++f) {
    Rng rng(derive_seed(seed, f));
    double acc = 0.0;
    auto original = data.x.column(f);
    std::vector<double> col(original.begin(), original.end());
    for (int k = 0; k < repeats; ++k) {
      rng.shuffle(col);
      std::copy(col.begin(), col.end(), shuffled.column(f).begin());
      acc += mean_absolute_error(data.y, model.predict(shuffled)) - baseline;
    }
    std::copy(original.begin(), original.end(), shuffled.column(f).begin());
    out[data.feature_names[f]] = acc / repeats;
  }
  return out;
}

}  // namespace digitwise::learner
