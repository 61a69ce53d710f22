#pragma once

// Per-user twins and the sensitivity database.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/parallel.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/core/text.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/learner/halving.hpp"
#include "digitwise/learner/metrics.hpp"
#include "digitwise/learner/model_io.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/split.hpp"

namespace digitwise::twins {

struct TwinEntry {
  std::string user_id;
  learner::TreeEnsemble model;
  learner::GbdtConfig config;
  double train_mae = 0.0;
  double test_mae = kMissing;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  bool degenerate = false;
};

struct SensitivityVector {
  std::string user_id;
  std::map<std::string, double> weights;
  bool degenerate = false;
};

/// Column order is `features`; users are kept sorted by id.
struct SensitivityDb {
  std::vector<std::string> features;
  std::map<std::string, SensitivityVector> users;

  const SensitivityVector& at(const std::string& user) const {
    const auto it = users.find(user);
    if (it == users.end()) throw NotFoundError("user '" + user + "' not in sensitivity database");
    return it->second;
  }
};

struct TwinOptions {
  learner::SearchSpace space;
  learner::HalvingOptions halving;
  std::size_t min_train = 80;
};

inline bool constant_target(const std::vector<double>& y) {
  return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
}

/// Halving search on the user's train split, refit of the winner on all of
/// it, MAE on train and on the held-out test split.
inline TwinEntry train_twin(const pipeline::UserSplit& split, const std::vector<std::string>& features,
                            const TwinOptions& opt, std::uint64_t seed) {
  if (split.train.size() < opt.min_train)
    throw ConfigError("train_twin: user '" + split.user_id + "' has " + std::to_string(split.train.size()) +
                      " training sessions, need " + std::to_string(opt.min_train));
  TwinEntry t;
  t.user_id = split.user_id;
  const auto train = pipeline::to_dataset(split.train, features);
  const auto test = pipeline::to_dataset(split.test, features);
  t.n_train = train.size();
  t.n_test = test.size();
  if (constant_target(train.y)) {
    t.model = learner::TreeEnsemble::constant(train.y.front(), features);
    t.config = opt.space.enumerate().front();
    t.degenerate = true;
  } else {
    auto halving = opt.halving;
    const double floor_fraction =
        static_cast<double>(halving.folds * 5) / static_cast<double>(train.size());
    halving.min_fraction = std::min(1.0, std::max(halving.min_fraction, floor_fraction));
    t.config = learner::halving_search(opt.space, train, halving, seed).best;
    t.model = learner::fit_gbdt(train, t.config, derive_seed(seed, "twin-refit"));
    t.degenerate = !learner::has_splits(t.model);
  }
  t.train_mae = learner::mean_absolute_error(train.y, t.model.predict(train.x));
  if (test.size() > 0) t.test_mae = learner::mean_absolute_error(test.y, t.model.predict(test.x));
  return t;
}

/// Normalized gain importance; uniform weights for a twin without splits.
inline SensitivityVector extract_sensitivities(const TwinEntry& t) {
  SensitivityVector v;
  v.user_id = t.user_id;
  v.degenerate = t.degenerate || !learner::has_splits(t.model);
  if (v.degenerate) {
    for (const auto& f : t.model.feature_names) v.weights[f] = 1.0 / static_cast<double>(t.model.feature_names.size());
  } else {
    v.weights = learner::gain_importance(t.model);
  }
  return v;
}

inline std::vector<TwinEntry> train_all_twins(const std::vector<pipeline::UserSplit>& splits,
                                              const std::vector<std::string>& features, const TwinOptions& opt,
                                              std::uint64_t seed) {
  std::vector<TwinEntry> out(splits.size());
  parallel_for(splits.size(), [&](std::size_t i) { out[i] = train_twin(splits[i], features, opt, seed); });
  return out;
}

inline SensitivityDb build_db(const std::vector<TwinEntry>& twins, const std::vector<std::string>& features) {
  SensitivityDb db;
  db.features = features;
  for (const auto& t : twins) db.users[t.user_id] = extract_sensitivities(t);
  return db;
}

// ---------------------------------------------------------------------------
// sensitivities.csv: user_id, one column per feature (12 significant
// digits), degenerate (0/1, optional on load).

inline void write_sensitivities(std::ostream& os, const SensitivityDb& db) {
  std::vector<std::string> row{"user_id"};
  row.insert(row.end(), db.features.begin(), db.features.end());
  row.emplace_back("degenerate");
  write_csv_row(os, row);
  for (const auto& [user, v] : db.users) {
    row = {user};
    for (const auto& f : db.features) {
      const auto it = v.weights.find(f);
      row.push_back(format_significant(it == v.weights.end() ? 0.0 : it->second, 12));
    }
    row.emplace_back(v.degenerate ? "1" : "0");
    write_csv_row(os, row);
  }
  if (!os) throw IoError("write failure while serializing sensitivities");
}

/// When `expected` is given, the file's feature columns must equal it
/// exactly (same names, same order).
inline SensitivityDb read_sensitivities(std::istream& is,
                                        const std::optional<std::vector<std::string>>& expected = std::nullopt) {
  if (!is) throw IoError("sensitivity stream is not readable");
  CsvReader reader(is);
  std::vector<std::string> header, fields;
  bool malformed = false;
  if (!reader.next(header, malformed) || header.empty() || trim(header[0]) != "user_id")
    throw SchemaError("sensitivities: header must start with 'user_id'");
  SensitivityDb db;
  bool has_flag = false;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (name == "degenerate" && i + 1 == header.size()) has_flag = true;
    else db.features.push_back(name);
  }
  if (expected) {
    for (const auto& f : *expected)
      if (std::find(db.features.begin(), db.features.end(), f) == db.features.end())
        throw SchemaError("sensitivities: missing column '" + f + "' required by the feature catalog");
    for (const auto& f : db.features)
      if (std::find(expected->begin(), expected->end(), f) == expected->end())
        throw SchemaError("sensitivities: column '" + f + "' is not a selected catalog feature");
    if (db.features != *expected) throw SchemaError("sensitivities: column order differs from the feature catalog");
  }
  std::size_t line = 1;
  while (reader.next(fields, malformed)) {
    ++line;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    if (malformed || fields.size() != header.size())
      throw SchemaError("sensitivities: malformed row at line " + std::to_string(line));
    SensitivityVector v;
    v.user_id = fields[0];
    for (std::size_t i = 0; i < db.features.size(); ++i) {
      const auto w = parse_double(fields[i + 1]);
      if (!w || !std::isfinite(*w)) throw SchemaError("sensitivities: bad weight at line " + std::to_string(line));
      v.weights[db.features[i]] = *w;
    }
    if (has_flag) v.degenerate = trim(fields.back()) == "1";
    db.users[v.user_id] = std::move(v);
  }
  return db;
}

inline void save_sensitivities(const std::filesystem::path& path, const SensitivityDb& db) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write sensitivities '" + path.string() + "'");
  write_sensitivities(out, db);
}

inline SensitivityDb load_sensitivities(const std::filesystem::path& path,
                                        const std::optional<std::vector<std::string>>& expected = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sensitivities '" + path.string() + "'");
  return read_sensitivities(in, expected);
}

inline std::string model_file_name(const std::string& user_id) {
  std::string s = "twin_";
  for (char c : user_id) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return s + "_" + std::to_string(fnv1a(user_id) % 100000) + ".json";
}

/// One model file per twin plus twins.json (index with configs and MAEs).
inline void save_twins(const std::filesystem::path& dir, const std::vector<TwinEntry>& twins) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index;
  index["schema"] = "digitwise.twins/v1";
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : twins) {
    const auto file = model_file_name(t.user_id);
    learner::save_model(dir / file, t.model);
    nlohmann::ordered_json e;
    e["user_id"] = t.user_id;
    e["model"] = file;
    e["config"] = learner::to_json(t.config);
    e["train_mae"] = t.train_mae;
    e["test_mae"] = is_missing(t.test_mae) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(t.test_mae);
    e["n_train"] = t.n_train;
    e["n_test"] = t.n_test;
    e["degenerate"] = t.degenerate;
    arr.push_back(std::move(e));
  }
  index["twins"] = std::move(arr);
  std::ofstream out(dir / "twins.json");
  out << index.dump(2) << '\n';
  if (!out) throw IoError("cannot write twins index in '" + dir.string() + "'");
}

}  // namespace digitwise::twins
