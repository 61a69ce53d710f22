#pragma once

// What-if runs: simulate sessions per scenario for a cohort, compress them
// with the regular pipeline, attach each user's sensitivities, predict with
// the unified model and aggregate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
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
#include "digitwise/engagement_model.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/learner/stats.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/engineer.hpp"
#include "digitwise/twin_registry.hpp"
#include "digitwise/whatif/simulator.hpp"
#include "digitwise/whatif/traces.hpp"

namespace digitwise::whatif {

/// Invalid request field; `field` is a path such as "scenarios[2].abr".
class FieldError : public SchemaError {
 public:
  FieldError(std::string field, const std::string& message)
      : SchemaError(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Request larger than the configured simulation cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

struct Cohort {
  std::vector<std::string> users;  // explicit ids
  std::size_t random_k = 0;        // > 0 means "random:k"
};

struct WhatIfScenario {
  std::string label;
  double segment_s = 2.0;
  AbrPolicy abr = AbrPolicy::throughput;
  std::string trace = "constant-16";
  double video_duration_s = 600.0;
  Ladder ladder = default_ladder();
  std::size_t n_sessions = 10;
  Cohort cohort{{}, 5};
  std::uint64_t seed = 1;
  std::optional<double> popularity;

  PlayerConfig player() const {
    PlayerConfig p;
    p.segment_s = segment_s;
    p.abr = abr;
    p.ladder = ladder;
    p.video_duration_s = video_duration_s;
    return p;
  }
};

inline nlohmann::ordered_json to_json(const Cohort& c) {
  if (c.random_k > 0) return "random:" + std::to_string(c.random_k);
  return c.users;
}

inline nlohmann::ordered_json to_json(const WhatIfScenario& s) {
  nlohmann::ordered_json ladder = nlohmann::ordered_json::array();
  for (const auto& r : s.ladder) ladder.push_back({{"bitrate_kbps", r.bitrate_kbps}, {"resolution", r.resolution}});
  nlohmann::ordered_json j{{"label", s.label},
                           {"segment_size", s.segment_s},
                           {"abr", std::string(to_string(s.abr))},
                           {"trace", s.trace},
                           {"video_duration", s.video_duration_s},
                           {"ladder", ladder},
                           {"n_sessions", s.n_sessions},
                           {"cohort", to_json(s.cohort)},
                           {"seed", s.seed}};
  j["popularity"] = s.popularity ? nlohmann::ordered_json(*s.popularity) : nlohmann::ordered_json(nullptr);
  return j;
}

namespace detail {

inline double number_field(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw FieldError(path, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw FieldError(path, "must be finite");
  return d;
}

inline std::size_t count_field(const nlohmann::json& v, const std::string& path, std::size_t min) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < static_cast<std::int64_t>(min))
    throw FieldError(path, "must be an integer >= " + std::to_string(min));
  return v.get<std::size_t>();
}

inline Cohort parse_cohort(const nlohmann::json& v, const std::string& path) {
  Cohort c;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const auto k = s.rfind("random:", 0) == 0 ? parse_int64(std::string_view(s).substr(7)) : std::nullopt;
    if (!k || *k < 1) throw FieldError(path, "must be a list of user ids or \"random:k\" with k >= 1");
    c.random_k = static_cast<std::size_t>(*k);
    return c;
  }
  if (!v.is_array() || v.empty()) throw FieldError(path, "must be a non-empty list of user ids or \"random:k\"");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string() || v[i].get<std::string>().empty())
      throw FieldError(path + "[" + std::to_string(i) + "]", "must be a non-empty string");
    c.users.push_back(v[i].get<std::string>());
  }
  return c;
}

}  // namespace detail

/// Keys absent from `j` keep the values of `base`.
inline WhatIfScenario parse_scenario(const nlohmann::json& j, const std::string& path, WhatIfScenario s = {}) {
  if (!j.is_object()) throw FieldError(path, "must be an object");
  static const std::set<std::string> known{"label", "segment_size", "abr", "trace", "video_duration", "ladder",
                                           "n_sessions", "cohort", "seed", "popularity"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw FieldError(path + "." + k, "unknown field");
  auto at = [&](const char* k) { return path + "." + k; };
  if (j.contains("label")) {
    if (!j["label"].is_string()) throw FieldError(at("label"), "must be a string");
    s.label = j["label"].get<std::string>();
  }
  if (j.contains("segment_size")) {
    s.segment_s = detail::number_field(j["segment_size"], at("segment_size"));
    if (s.segment_s != 1.0 && s.segment_s != 2.0) throw FieldError(at("segment_size"), "must be 1 or 2 seconds");
  }
  if (j.contains("abr")) {
    if (!j["abr"].is_string()) throw FieldError(at("abr"), "must be a string");
    try {
      s.abr = parse_abr_policy(j["abr"].get<std::string>());
    } catch (const ConfigError& e) {
      throw FieldError(at("abr"), e.what());
    }
  }
  if (j.contains("trace")) {
    if (!j["trace"].is_string() || j["trace"].get<std::string>().empty())
      throw FieldError(at("trace"), "must be a non-empty string");
    s.trace = j["trace"].get<std::string>();
  }
  if (j.contains("video_duration")) {
    s.video_duration_s = detail::number_field(j["video_duration"], at("video_duration"));
    if (!(s.video_duration_s >= 10.0)) throw FieldError(at("video_duration"), "must be >= 10 seconds");
  }
  if (j.contains("ladder")) {
    const auto& l = j["ladder"];
    if (!l.is_array() || l.empty()) throw FieldError(at("ladder"), "must be a non-empty list");
    s.ladder.clear();
    for (std::size_t i = 0; i < l.size(); ++i) {
      const auto p = at("ladder") + "[" + std::to_string(i) + "]";
      if (!l[i].is_object() || !l[i].contains("bitrate_kbps")) throw FieldError(p, "must be {bitrate_kbps, resolution}");
      LadderRung r;
      r.bitrate_kbps = detail::number_field(l[i]["bitrate_kbps"], p + ".bitrate_kbps");
      if (l[i].contains("resolution")) {
        if (!l[i]["resolution"].is_string()) throw FieldError(p + ".resolution", "must be a string");
        r.resolution = l[i]["resolution"].get<std::string>();
      }
      s.ladder.push_back(r);
    }
    try {
      validate_ladder(s.ladder);
    } catch (const ConfigError& e) {
      throw FieldError(at("ladder"), e.what());
    }
  }
  if (j.contains("n_sessions")) s.n_sessions = detail::count_field(j["n_sessions"], at("n_sessions"), 1);
  if (j.contains("cohort")) s.cohort = detail::parse_cohort(j["cohort"], at("cohort"));
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
      throw FieldError(at("seed"), "must be a non-negative integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("popularity")) {
    if (j["popularity"].is_null()) s.popularity.reset();
    else s.popularity = detail::number_field(j["popularity"], at("popularity"));
  }
  return s;
}

/// {"defaults": {...}, "scenarios": [...]} or a bare list. Unlabelled
/// scenarios are named by position.
inline std::vector<WhatIfScenario> parse_request(const nlohmann::json& j) {
  WhatIfScenario base;
  const nlohmann::json* list = &j;
  if (j.is_object()) {
    if (j.contains("defaults")) base = parse_scenario(j["defaults"], "defaults");
    if (!j.contains("scenarios")) throw FieldError("scenarios", "missing");
    list = &j["scenarios"];
  }
  if (!list->is_array() || list->empty()) throw FieldError("scenarios", "must be a non-empty list");
  std::vector<WhatIfScenario> out;
  std::set<std::string> labels;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto path = "scenarios[" + std::to_string(i) + "]";
    auto s = parse_scenario((*list)[i], path, base);
    if (!(*list)[i].contains("label") || s.label.empty()) s.label = "scenario-" + std::to_string(i + 1);
    if (!labels.insert(s.label).second) throw FieldError(path + ".label", "duplicate label '" + s.label + "'");
    out.push_back(std::move(s));
  }
  return out;
}

struct Aggregates {
  std::size_t n = 0;
  double mean = 0.0, std = 0.0, min = 0.0, median = 0.0, max = 0.0;
};

inline Aggregates aggregate(const std::vector<double>& v) {
  if (v.empty()) throw ConfigError("aggregate: no predictions");
  Aggregates a;
  a.n = v.size();
  a.mean = learner::mean(v);
  a.std = learner::stddev(v);
  a.min = *std::min_element(v.begin(), v.end());
  a.max = *std::max_element(v.begin(), v.end());
  a.median = learner::median(v);
  return a;
}

struct Prediction {
  std::string user_id;
  std::size_t session = 0;
  double engagement = 0.0;
};

struct ScenarioOutcome {
  WhatIfScenario scenario;
  std::vector<std::string> cohort;
  std::vector<Prediction> predictions;
  Aggregates aggregates;
  double mean_stall_time = 0.0;
  double mean_bitrate = 0.0;
};

struct Delta {
  std::string from;
  std::string to;
  double delta = 0.0;  // mean(from) - mean(to)
};

struct WhatIfResult {
  std::vector<ScenarioOutcome> outcomes;
  std::vector<Delta> deltas;
  std::vector<std::string> varied;
};

/// Scenario fields (other than the label) whose values differ.
inline std::vector<std::string> varied_fields(const std::vector<WhatIfScenario>& scenarios) {
  std::vector<std::string> out;
  if (scenarios.empty()) return out;
  const auto first = to_json(scenarios.front());
  for (const auto& [k, v] : first.items()) {
    if (k == "label") continue;
    for (const auto& s : scenarios)
      if (to_json(s)[k] != v) {
        out.push_back(k);
        break;
      }
  }
  return out;
}

class WhatIfEngine {
 public:
  /// The session features are the model's non-weight columns; its weight
  /// columns must match the database features in order.
  WhatIfEngine(learner::TreeEnsemble model, twins::SensitivityDb db, TraceLibrary traces)
      : model_(std::move(model)), db_(std::move(db)), traces_(std::move(traces)) {
    std::vector<std::string> weights;
    for (const auto& n : model_.feature_names)
      (engagement::is_weight_column(n) ? weights : features_).push_back(n);
    std::vector<std::string> expected;
    for (const auto& f : db_.features) expected.push_back(engagement::weight_column(f));
    if (weights != expected)
      throw ConfigError("what-if: model weight columns do not match the sensitivity database features");
    for (const auto& f : features_) pipeline::field_member(f);
  }

  const learner::TreeEnsemble& model() const { return model_; }
  const twins::SensitivityDb& db() const { return db_; }
  const TraceLibrary& traces() const { return traces_; }
  const std::vector<std::string>& features() const { return features_; }

  std::vector<std::string> resolve_cohort(const WhatIfScenario& s) const {
    if (s.cohort.random_k > 0) {
      if (s.cohort.random_k > db_.users.size())
        throw CapacityError("cohort random:" + std::to_string(s.cohort.random_k) + " exceeds the " +
                            std::to_string(db_.users.size()) + " users in the database");
      std::vector<std::string> ids;
      for (const auto& [id, v] : db_.users) ids.push_back(id);
      Rng rng(derive_seed(s.seed, "cohort"));
      rng.shuffle(ids);
      ids.resize(s.cohort.random_k);
      std::sort(ids.begin(), ids.end());
      return ids;
    }
    for (const auto& u : s.cohort.users)
      if (!db_.users.count(u)) throw NotFoundError("unknown user '" + u + "'");
    return s.cohort.users;
  }

  /// Unknown traces and users raise NotFoundError naming them.
  void check(const std::vector<WhatIfScenario>& scenarios) const {
    for (const auto& s : scenarios) {
      traces_.at(s.trace);
      resolve_cohort(s);
    }
  }

  std::size_t simulation_count(const std::vector<WhatIfScenario>& scenarios) const {
    std::size_t n = 0;
    for (const auto& s : scenarios)
      n += s.n_sessions * (s.cohort.random_k > 0 ? s.cohort.random_k : s.cohort.users.size());
    return n;
  }

  /// Simulated session for (scenario, user, index). The seed does not
  /// depend on the scenario parameters, so scenarios share random draws.
  SimulationResult simulate(const WhatIfScenario& s, const std::string& user, std::size_t i) const {
    SessionIdentity id;
    id.user_id = user;
    id.video_id = "whatif-video";
    id.session_id = user + "-sim" + std::to_string(i);
    id.start_ms += static_cast<std::int64_t>(i) * 3'600'000;
    return simulate_session(s.player(), traces_.at(s.trace), derive_seed(derive_seed(s.seed, user), i), id);
  }

  pipeline::SessionRecord record_of(const WhatIfScenario& s, const SimulationResult& sim) const {
    const auto& first = sim.events.front();
    auto rec = pipeline::compress(pipeline::engineer(key_of(first), sim.events, {}));
    rec.popularity = s.popularity ? *s.popularity : kMissing;
    return rec;
  }

  double predict(const pipeline::SessionRecord& rec) const {
    const auto row = engagement::augmented_record(rec, features_, db_.at(rec.user_id));
    return std::clamp(model_.predict(row), 0.0, 1.0);
  }

  ScenarioOutcome run_scenario(const WhatIfScenario& s) const {
    ScenarioOutcome out;
    out.scenario = s;
    out.cohort = resolve_cohort(s);
    const std::size_t total = out.cohort.size() * s.n_sessions;
    out.predictions.resize(total);
    std::vector<double> stall(total), bitrate(total);
    parallel_for(total, [&](std::size_t k) {
      const auto& user = out.cohort[k / s.n_sessions];
      const std::size_t i = k % s.n_sessions;
      const auto sim = simulate(s, user, i);
      const auto rec = record_of(s, sim);
      out.predictions[k] = {user, i, predict(rec)};
      stall[k] = sim.stall_time;
      bitrate[k] = rec.bitrate_mean;
    });
    std::vector<double> v;
    for (const auto& p : out.predictions) v.push_back(p.engagement);
    out.aggregates = aggregate(v);
    out.mean_stall_time = learner::mean(stall);
    out.mean_bitrate = learner::mean(bitrate);
    return out;
  }

  WhatIfResult run(const std::vector<WhatIfScenario>& scenarios) const {
    check(scenarios);
    WhatIfResult r;
    for (const auto& s : scenarios) r.outcomes.push_back(run_scenario(s));
    for (const auto& a : r.outcomes)
      for (const auto& b : r.outcomes)
        if (&a != &b)
          r.deltas.push_back({a.scenario.label, b.scenario.label, a.aggregates.mean - b.aggregates.mean});
    r.varied = varied_fields(scenarios);
    return r;
  }

 private:
  learner::TreeEnsemble model_;
  twins::SensitivityDb db_;
  TraceLibrary traces_;
  std::vector<std::string> features_;
};

inline nlohmann::ordered_json to_json(const Aggregates& a) {
  return {{"n", a.n}, {"mean", a.mean}, {"std", a.std}, {"min", a.min}, {"median", a.median}, {"max", a.max}};
}

inline nlohmann::ordered_json to_json(const WhatIfResult& r, bool with_predictions = true) {
  nlohmann::ordered_json j;
  j["schema"] = "digitwise.whatif_result/v1";
  j["varied"] = r.varied;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::ordered_json e;
    e["label"] = o.scenario.label;
    e["scenario"] = to_json(o.scenario);
    e["cohort"] = o.cohort;
    e["aggregates"] = to_json(o.aggregates);
    e["mean_stall_time_s"] = o.mean_stall_time;
    e["mean_bitrate_kbps"] = o.mean_bitrate;
    if (with_predictions) {
      auto p = nlohmann::ordered_json::array();
      for (const auto& x : o.predictions)
        p.push_back({{"user_id", x.user_id}, {"session", x.session}, {"engagement", x.engagement}});
      e["predictions"] = std::move(p);
    }
    arr.push_back(std::move(e));
  }
  j["scenarios"] = std::move(arr);
  auto d = nlohmann::ordered_json::array();
  for (const auto& x : r.deltas) d.push_back({{"from", x.from}, {"to", x.to}, {"delta", x.delta}});
  j["deltas"] = std::move(d);
  return j;
}

/// One row per scenario: label, segment size, abr, trace and the five
/// aggregate columns.
inline void write_table(std::ostream& os, const WhatIfResult& r) {
  write_csv_row(os, {"label", "segment_size", "abr", "trace", "mean", "std", "min", "median", "max"});
  for (const auto& o : r.outcomes) {
    const auto& s = o.scenario;
    const auto& a = o.aggregates;
    write_csv_row(os, {s.label, format_double(s.segment_s), std::string(to_string(s.abr)), s.trace,
                       format_significant(a.mean, 6), format_significant(a.std, 6), format_significant(a.min, 6),
                       format_significant(a.median, 6), format_significant(a.max, 6)});
  }
}

}  // namespace digitwise::whatif
