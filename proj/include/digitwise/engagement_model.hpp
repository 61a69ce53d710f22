#pragma once

// Unified engagement model: session features plus the user's sensitivity
// vector, its no-sensitivity benchmark, time-horizon evaluation, the
// feature-selection threshold sweep and classification adapters.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/core/text.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/learner/halving.hpp"
#include "digitwise/learner/metrics.hpp"
#include "digitwise/learner/stats.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/feature_select.hpp"
#include "digitwise/pipeline/run.hpp"
#include "digitwise/pipeline/split.hpp"
#include "digitwise/twin_registry.hpp"

namespace digitwise::engagement {

inline constexpr std::string_view kWeightPrefix = "sens_";

inline std::string weight_column(const std::string& feature) { return std::string(kWeightPrefix) + feature; }

inline bool is_weight_column(const std::string& name) { return name.rfind(kWeightPrefix, 0) == 0; }

/// Column names of the augmented table: features, then one weight column
/// per sensitivity-database feature.
inline std::vector<std::string> augmented_columns(const std::vector<std::string>& features,
                                                  const twins::SensitivityDb& db) {
  auto cols = features;
  for (const auto& f : db.features) cols.push_back(weight_column(f));
  return cols;
}

/// Joins records with their user's weights. Identifiers are not columns;
/// row order follows `records`.
inline learner::Dataset concatenate(std::span<const pipeline::SessionRecord> records,
                                    const std::vector<std::string>& features, const twins::SensitivityDb& db) {
  std::set<std::string> missing;
  for (const auto& r : records)
    if (!db.users.count(r.user_id)) missing.insert(r.user_id);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw NotFoundError("concatenate: users missing from sensitivity database: " + list);
  }
  auto d = pipeline::to_dataset(records, features);
  learner::Dataset out;
  out.feature_names = augmented_columns(features, db);
  out.x = learner::Matrix(records.size(), out.feature_names.size());
  out.y = std::move(d.y);
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (std::size_t c = 0; c < features.size(); ++c) out.x(r, c) = d.x(r, c);
    const auto& w = db.users.at(records[r].user_id).weights;
    for (std::size_t k = 0; k < db.features.size(); ++k) {
      const auto it = w.find(db.features[k]);
      out.x(r, features.size() + k) = it == w.end() ? 0.0 : it->second;
    }
  }
  return out;
}

/// Feature record for model.predict(FeatureRecord): session features plus
/// weight columns.
inline learner::FeatureRecord augmented_record(const pipeline::SessionRecord& r, const std::vector<std::string>& features,
                                               const twins::SensitivityVector& v) {
  learner::FeatureRecord out;
  for (const auto& f : features) out[f] = pipeline::field_value(r, f);
  for (const auto& [f, w] : v.weights) out[weight_column(f)] = w;
  return out;
}

struct TrainOptions {
  learner::SearchSpace space;
  learner::HalvingOptions halving;
  std::size_t min_rows = 200;
};

/// Halving search and refit. Used for both the augmented and the benchmark
/// table; they differ only in columns.
inline learner::TreeEnsemble train_engagement_model(const learner::Dataset& train, const TrainOptions& opt,
                                                    std::uint64_t seed) {
  if (train.size() < opt.min_rows)
    throw ConfigError("engagement model: need at least " + std::to_string(opt.min_rows) + " training rows, got " +
                      std::to_string(train.size()));
  if (train.x.cols() == 0) return learner::TreeEnsemble::constant(learner::mean(train.y), {});
  const auto best = learner::halving_search(opt.space, train, opt.halving, seed).best;
  return learner::fit_gbdt(train, best, derive_seed(seed, "unified-refit"));
}

inline learner::TreeEnsemble train_unified(std::span<const pipeline::SessionRecord> train,
                                           const std::vector<std::string>& features, const twins::SensitivityDb& db,
                                           const TrainOptions& opt, std::uint64_t seed) {
  return train_engagement_model(concatenate(train, features, db), opt, seed);
}

inline learner::TreeEnsemble train_benchmark(std::span<const pipeline::SessionRecord> train,
                                             const std::vector<std::string>& features, const TrainOptions& opt,
                                             std::uint64_t seed) {
  return train_engagement_model(pipeline::to_dataset(train, features), opt, seed);
}

inline std::vector<double> clamp_predictions(std::vector<double> p) {
  for (auto& v : p) v = std::clamp(v, 0.0, 1.0);
  return p;
}

// ---------------------------------------------------------------------------
// Classification adapters over regression output.

inline int bin10(double y) {
  const double c = std::clamp(y, 0.0, std::nextafter(1.0, 0.0));
  return static_cast<int>(std::floor(10.0 * c));
}

inline double bin10_accuracy(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw ConfigError("bin10_accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += bin10(y_true[i]) == bin10(y_pred[i]);
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

inline double binary_at_threshold(std::span<const double> y_true, std::span<const double> y_pred, double tau = 0.7) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ConfigError("binary_at_threshold: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hit += (y_true[i] >= tau) == (y_pred[i] >= tau);
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

/// Pearson correlation, across videos with >= min_sessions sessions, of
/// the fraction of sessions with engagement < 0.5 (true vs predicted).
/// Null with fewer than 3 qualifying videos or an undefined correlation.
inline std::optional<double> quit50_pcc(std::span<const double> y_true, std::span<const double> y_pred,
                                        std::span<const std::string> video_ids, std::size_t min_sessions = 10) {
  if (y_true.size() != y_pred.size() || y_true.size() != video_ids.size())
    throw ConfigError("quit50_pcc: size mismatch");
  struct Acc {
    std::size_t n = 0, quit_true = 0, quit_pred = 0;
  };
  std::map<std::string, Acc> per_video;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    auto& a = per_video[video_ids[i]];
    ++a.n;
    a.quit_true += y_true[i] < 0.5;
    a.quit_pred += y_pred[i] < 0.5;
  }
  std::vector<double> ft, fp;
  for (const auto& [v, a] : per_video)
    if (a.n >= min_sessions) {
      ft.push_back(static_cast<double>(a.quit_true) / static_cast<double>(a.n));
      fp.push_back(static_cast<double>(a.quit_pred) / static_cast<double>(a.n));
    }
  if (ft.size() < 3) return std::nullopt;
  return learner::pearson(ft, fp);
}

struct VariantScore {
  learner::Metrics metrics;
  double bin10_accuracy = 0.0;
  double binary70_accuracy = 0.0;
  std::optional<double> quit50_pcc;
};

inline VariantScore score(std::span<const double> y_true, const std::vector<double>& raw_pred,
                          std::span<const std::string> video_ids) {
  const auto p = clamp_predictions(raw_pred);
  VariantScore s;
  s.metrics = learner::compute_metrics(y_true, p);
  s.bin10_accuracy = bin10_accuracy(y_true, p);
  s.binary70_accuracy = binary_at_threshold(y_true, p, 0.7);
  s.quit50_pcc = quit50_pcc(y_true, p, video_ids);
  return s;
}

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json to_json(const VariantScore& s) {
  return {{"mae", s.metrics.mae},
          {"rmse", s.metrics.rmse},
          {"pearson", opt_json(s.metrics.pearson)},
          {"spearman", opt_json(s.metrics.spearman)},
          {"bin10_accuracy", s.bin10_accuracy},
          {"binary70_accuracy", s.binary70_accuracy},
          {"quit50_pcc", opt_json(s.quit50_pcc)}};
}

// ---------------------------------------------------------------------------
// Horizons

struct Horizon {
  std::string label;
  double seconds = std::numeric_limits<double>::infinity();
};

/// "10s", "30s", "2m", "full"; plain numbers are seconds.
inline Horizon parse_horizon(std::string_view text) {
  const auto t = trim(text);
  if (t == "full" || t == "inf") return {"full", std::numeric_limits<double>::infinity()};
  if (t.empty()) throw ConfigError("empty horizon");
  double scale = 1.0;
  auto num = t;
  if (t.back() == 's') num.remove_suffix(1);
  else if (t.back() == 'm') {
    num.remove_suffix(1);
    scale = 60.0;
  } else if (t.back() == 'h') {
    num.remove_suffix(1);
    scale = 3600.0;
  }
  const auto v = parse_double(num);
  if (!v || !(*v > 0.0)) throw ConfigError("bad horizon '" + std::string(t) + "'");
  return {std::string(t), *v * scale};
}

inline std::vector<Horizon> parse_horizons(std::string_view list) {
  std::vector<Horizon> out;
  for (const auto& part : split(list, ',')) out.push_back(parse_horizon(part));
  if (out.empty()) throw ConfigError("no horizons given");
  return out;
}

inline const char* kDefaultHorizons = "10s,30s,1m,2m,3m,5m,7m,10m,full";

/// Rows of `splits` (train or test part) looked up in a horizon's records;
/// sessions without events inside the horizon are skipped.
inline std::vector<pipeline::SessionRecord> rows_at(const std::vector<pipeline::UserSplit>& splits, bool test,
                                                    const std::map<SessionKey, pipeline::SessionRecord>& at_horizon,
                                                    std::size_t& dropped) {
  std::vector<pipeline::SessionRecord> out;
  for (const auto& s : splits)
    for (const auto& r : test ? s.test : s.train) {
      const auto it = at_horizon.find(r.key());
      if (it == at_horizon.end()) ++dropped;
      else out.push_back(it->second);
    }
  return out;
}

struct HorizonResult {
  Horizon horizon;
  std::size_t n_train = 0, n_test = 0, dropped = 0;
  VariantScore augmented;
  VariantScore benchmark;
};

struct EvalInputs {
  const std::vector<pipeline::EnrichedSession>* sessions = nullptr;  // cleaned, enriched, full length
  const std::vector<pipeline::UserSplit>* splits = nullptr;
  std::vector<std::string> features;
  const twins::SensitivityDb* db = nullptr;
};

struct EvalOptions {
  TrainOptions train;
  bool benchmark = true;
};

inline HorizonResult evaluate_horizon(const EvalInputs& in, const Horizon& h, const EvalOptions& opt,
                                      std::uint64_t seed, learner::TreeEnsemble* augmented_out = nullptr) {
  HorizonResult res;
  res.horizon = h;
  std::map<SessionKey, pipeline::SessionRecord> at;
  for (auto& r : pipeline::compress_all(*in.sessions, h.seconds)) at.emplace(r.key(), std::move(r));
  const auto train = rows_at(*in.splits, false, at, res.dropped);
  const auto test = rows_at(*in.splits, true, at, res.dropped);
  res.n_train = train.size();
  res.n_test = test.size();
  if (test.empty()) throw ConfigError("evaluate: no test rows at horizon " + h.label);
  std::vector<double> y_test;
  std::vector<std::string> videos;
  for (const auto& r : test) {
    y_test.push_back(r.engagement);
    videos.push_back(r.video_id);
  }
  const auto aug_model = train_unified(train, in.features, *in.db, opt.train, seed);
  res.augmented = score(y_test, aug_model.predict(concatenate(test, in.features, *in.db).x), videos);
  if (augmented_out) *augmented_out = aug_model;
  if (opt.benchmark) {
    const auto bench = train_benchmark(train, in.features, opt.train, seed);
    res.benchmark = score(y_test, bench.predict(pipeline::to_dataset(test, in.features).x), videos);
  }
  return res;
}

inline nlohmann::ordered_json to_json(const HorizonResult& r, bool benchmark = true) {
  nlohmann::ordered_json j;
  j["horizon"] = r.horizon.label;
  j["seconds"] = std::isinf(r.horizon.seconds) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.horizon.seconds);
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["dropped"] = r.dropped;
  j["augmented"] = to_json(r.augmented);
  if (benchmark) j["benchmark"] = to_json(r.benchmark);
  return j;
}

struct EvalReport {
  std::uint64_t seed = 0;
  std::vector<std::string> features;
  std::vector<HorizonResult> horizons;
  bool benchmark = true;
};

inline EvalReport evaluate(const EvalInputs& in, const std::vector<Horizon>& horizons, const EvalOptions& opt,
                           std::uint64_t seed) {
  EvalReport rep;
  rep.seed = seed;
  rep.features = in.features;
  rep.benchmark = opt.benchmark;
  for (const auto& h : horizons) rep.horizons.push_back(evaluate_horizon(in, h, opt, seed));
  return rep;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "digitwise.eval_report/v1";
  j["seed"] = r.seed;
  j["features"] = r.features;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& h : r.horizons) arr.push_back(to_json(h, r.benchmark));
  j["horizons"] = std::move(arr);
  return j;
}

/// horizon,seconds,augmented_mae,benchmark_mae
inline void write_horizon_plot(std::ostream& os, const EvalReport& r) {
  write_csv_row(os, {"horizon", "seconds", "augmented_mae", "benchmark_mae"});
  for (const auto& h : r.horizons)
    write_csv_row(os, {h.horizon.label, std::isinf(h.horizon.seconds) ? "" : format_double(h.horizon.seconds),
                       format_double(h.augmented.metrics.mae),
                       r.benchmark ? format_double(h.benchmark.metrics.mae) : ""});
}

// ---------------------------------------------------------------------------
// Threshold sweep: select -> twins -> unified, per threshold.

struct SweepPoint {
  double threshold = 0.0;
  std::size_t n_features = 0;
  double mae = 0.0;
  double twin_seconds = 0.0;
  double unified_seconds = 0.0;
};

struct SweepInputs {
  const pipeline::FeatureCatalog* catalog = nullptr;
  const std::vector<pipeline::UserSplit>* splits = nullptr;
};

/// With no selected feature the twins and the unified model reduce to the
/// training mean.
inline std::vector<SweepPoint> threshold_sweep(const SweepInputs& in, const std::vector<double>& thresholds,
                                               const twins::TwinOptions& twin_opt, const TrainOptions& train_opt,
                                               std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  std::vector<SweepPoint> out;
  const auto train = pipeline::gather(*in.splits, false);
  const auto test = pipeline::gather(*in.splits, true);
  for (double t : thresholds) {
    SweepPoint p;
    p.threshold = t;
    const auto features = in.catalog->with_threshold(t).selected_names();
    p.n_features = features.size();
    const auto t0 = clock::now();
    twins::SensitivityDb db;
    db.features = features;
    if (!features.empty()) {
      db = twins::build_db(twins::train_all_twins(*in.splits, features, twin_opt, seed), features);
    } else {
      for (const auto& s : *in.splits) db.users[s.user_id] = {s.user_id, {}, true};
    }
    const auto t1 = clock::now();
    const auto model = train_unified(train, features, db, train_opt, seed);
    const auto t2 = clock::now();
    const auto test_x = concatenate(test, features, db);
    p.mae = learner::mean_absolute_error(test_x.y, clamp_predictions(model.predict(test_x.x)));
    p.twin_seconds = std::chrono::duration<double>(t1 - t0).count();
    p.unified_seconds = std::chrono::duration<double>(t2 - t1).count();
    out.push_back(p);
  }
  return out;
}

inline nlohmann::ordered_json to_json(const std::vector<SweepPoint>& sweep) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : sweep)
    arr.push_back({{"threshold", p.threshold},
                   {"n_features", p.n_features},
                   {"mae", p.mae},
                   {"twin_seconds", p.twin_seconds},
                   {"unified_seconds", p.unified_seconds}});
  return {{"schema", "digitwise.threshold_sweep/v1"}, {"points", arr}};
}

/// threshold,n_features,augmented_mae,train_seconds
inline void write_threshold_plot(std::ostream& os, const std::vector<SweepPoint>& sweep) {
  write_csv_row(os, {"threshold", "n_features", "augmented_mae", "train_seconds"});
  for (const auto& p : sweep)
    write_csv_row(os, {format_double(p.threshold), std::to_string(p.n_features), format_double(p.mae),
                       format_double(p.twin_seconds + p.unified_seconds)});
}

}  // namespace digitwise::engagement
