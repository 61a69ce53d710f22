#pragma once

// Engagement-bin balancing, the per-user session floor and the 80/20 split.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/pipeline/compress.hpp"

namespace digitwise::pipeline {

inline constexpr int kEngagementBins = 10;

/// [0,0.1), ..., [0.8,0.9), [0.9,1.0].
inline int engagement_bin(double e) {
  return std::clamp(static_cast<int>(std::floor(e * kEngagementBins)), 0, kEngagementBins - 1);
}

struct UserSplit {
  std::string user_id;
  std::vector<SessionRecord> train;
  std::vector<SessionRecord> test;
};

struct SplitOptions {
  std::size_t min_user_sessions = 100;
  double test_fraction = 0.2;
};

struct BalanceReport {
  std::array<std::size_t, kEngagementBins> bin_sizes_in{};
  std::size_t per_bin = 0;
  std::size_t records_in = 0;
  std::size_t downsampled_away = 0;
  std::size_t users_removed = 0;
  std::size_t records_of_removed_users = 0;
};

struct BalanceResult {
  std::vector<UserSplit> splits;  // ordered by user_id
  BalanceReport report;
};

inline BalanceResult balance_and_split(const std::vector<SessionRecord>& records, std::uint64_t seed,
                                       const SplitOptions& opt = {}) {
  BalanceResult out;
  auto& rep = out.report;
  rep.records_in = records.size();
  std::array<std::vector<std::size_t>, kEngagementBins> bins;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double e = records[i].engagement;
    if (is_missing(e) || e < 0.0 || e > 1.0) throw ConfigError("balance_and_split: record without a valid engagement label");
    bins[static_cast<std::size_t>(engagement_bin(e))].push_back(i);
  }
  for (int b = 0; b < kEngagementBins; ++b) {
    rep.bin_sizes_in[static_cast<std::size_t>(b)] = bins[static_cast<std::size_t>(b)].size();
    if (bins[static_cast<std::size_t>(b)].empty())
      throw ConfigError("balance_and_split: engagement bin " + std::to_string(b) +
                        " is empty; use fewer bins or more data");
  }
  rep.per_bin = records.size();
  for (const auto& b : bins) rep.per_bin = std::min(rep.per_bin, b.size());

  std::vector<std::size_t> kept;
  for (int b = 0; b < kEngagementBins; ++b) {
    auto idx = bins[static_cast<std::size_t>(b)];
    Rng rng(derive_seed(seed, "balance-bin-" + std::to_string(b)));
    rng.shuffle(idx);
    idx.resize(rep.per_bin);
    kept.insert(kept.end(), idx.begin(), idx.end());
  }
  std::sort(kept.begin(), kept.end());
  rep.downsampled_away = records.size() - kept.size();

  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i : kept) by_user[records[i].user_id].push_back(i);
  for (auto& [user, idx] : by_user) {
    if (idx.size() < opt.min_user_sessions) {
      ++rep.users_removed;
      rep.records_of_removed_users += idx.size();
      continue;
    }
    Rng rng(derive_seed(seed, "split-" + user));
    rng.shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::floor(opt.test_fraction * static_cast<double>(idx.size())));
    UserSplit s;
    s.user_id = user;
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? s.test : s.train).push_back(records[idx[k]]);
    out.splits.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::ordered_json to_json(const BalanceReport& r) {
  nlohmann::ordered_json j;
  j["bin_sizes_in"] = r.bin_sizes_in;
  j["per_bin"] = r.per_bin;
  j["records_in"] = r.records_in;
  j["downsampled_away"] = r.downsampled_away;
  j["users_removed"] = r.users_removed;
  j["records_of_removed_users"] = r.records_of_removed_users;
  return j;
}

/// Concatenated train (or test) records of all users, in split order.
inline std::vector<SessionRecord> gather(const std::vector<UserSplit>& splits, bool test) {
  std::vector<SessionRecord> out;
  for (const auto& s : splits) {
    const auto& part = test ? s.test : s.train;
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace digitwise::pipeline
