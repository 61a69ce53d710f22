#pragma once

// Sessions -> cleaned sessions -> records -> balanced splits -> catalog.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "digitwise/core/parallel.hpp"
#include "digitwise/event_store.hpp"
#include "digitwise/pipeline/clean.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/engineer.hpp"
#include "digitwise/pipeline/feature_select.hpp"
#include "digitwise/pipeline/records_io.hpp"
#include "digitwise/pipeline/split.hpp"

namespace digitwise::pipeline {

inline std::vector<EnrichedSession> enrich_all(const Sessions& sessions) {
  const auto popularity = build_popularity_index(sessions);
  std::vector<const Sessions::value_type*> items;
  items.reserve(sessions.size());
  for (const auto& kv : sessions) items.push_back(&kv);
  std::vector<EnrichedSession> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) { out[i] = engineer(items[i]->first, items[i]->second, popularity); });
  return out;
}

/// Compressed records at a horizon (seconds; infinity = full session).
/// Sessions with no event inside the horizon are skipped and counted.
inline std::vector<SessionRecord> compress_all(const std::vector<EnrichedSession>& sessions, double horizon_s,
                                               std::size_t* dropped = nullptr) {
  std::vector<std::optional<SessionRecord>> tmp(sessions.size());
  parallel_for(sessions.size(), [&](std::size_t i) {
    const auto t = truncate_horizon(sessions[i], horizon_s);
    if (!t.events.empty()) tmp[i] = compress(t);
  });
  std::vector<SessionRecord> out;
  out.reserve(tmp.size());
  std::size_t n_dropped = 0;
  for (auto& r : tmp) {
    if (r) out.push_back(std::move(*r));
    else ++n_dropped;
  }
  if (dropped) *dropped = n_dropped;
  return out;
}

struct ProcessOptions {
  std::uint64_t seed = 42;
  double threshold = 0.02;
  CleanOptions clean;
  SplitOptions split;
  learner::ForestConfig forest = default_selection_forest();
};

struct ProcessResult {
  Sessions cleaned;
  CleanReport clean_report;
  std::vector<EnrichedSession> enriched;
  std::vector<SessionRecord> records;
  BalanceResult balance;
  FeatureCatalog catalog;
};

inline ProcessResult process(Sessions sessions, const ProcessOptions& opt) {
  ProcessResult r;
  auto cleaned = clean(std::move(sessions), opt.clean);
  r.cleaned = std::move(cleaned.sessions);
  r.clean_report = std::move(cleaned.report);
  if (r.cleaned.empty()) throw ConfigError("process: no sessions survive cleaning");
  r.enriched = enrich_all(r.cleaned);
  r.records = compress_all(r.enriched, std::numeric_limits<double>::infinity());
  r.balance = balance_and_split(r.records, opt.seed, opt.split);
  if (r.balance.splits.empty()) throw ConfigError("process: no user keeps enough sessions after balancing");
  const auto train = gather(r.balance.splits, false);
  r.catalog = select_features(to_dataset(train, candidate_features()), opt.threshold, opt.seed, opt.forest);
  if (r.catalog.selected_names().empty())
    throw ConfigError("process: threshold " + format_double(opt.threshold) + " selects no feature");
  return r;
}

inline void write_process_outputs(const std::filesystem::path& dir, const ProcessResult& r, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  save_records(dir / "records.csv", r.records);
  save_catalog(dir / "catalog.json", r.catalog);
  save_splits(dir / "splits.json", r.balance.splits, seed);
  auto report = to_json(r.clean_report);
  report["balance"] = to_json(r.balance.report);
  std::ofstream rep(dir / "clean_report.json");
  rep << report.dump(2) << '\n';
  if (!rep) throw IoError("cannot write clean_report.json in '" + dir.string() + "'");
  std::ofstream ev(dir / "cleaned_events.csv");
  if (!ev) throw IoError("cannot write cleaned_events.csv in '" + dir.string() + "'");
  write_event_log(ev, flatten(r.cleaned), EventFormat::csv);
}

}  // namespace digitwise::pipeline
