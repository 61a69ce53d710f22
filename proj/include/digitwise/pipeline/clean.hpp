#pragma once

// Cleaning rules R1..R11. Each removed session is attributed to the first
// rule that triggered on it; R1 and R5 repair values instead of removing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/event_store.hpp"
#include "digitwise/pipeline/engineer.hpp"

namespace digitwise::pipeline {

inline const std::vector<std::string>& clean_rule_ids() {
  static const std::vector<std::string> ids{"R1", "R2", "R3", "R4", "R5", "R6",
                                            "R7", "R8", "R9", "R10", "R11", "unlabeled"};
  return ids;
}

struct CleanOptions {
  std::size_t bot_repeat_limit = 100;  // R2: more sessions than this of one video
  std::size_t min_sessions = 50;       // R3
  std::size_t min_videos = 5;          // R4
  double min_play_time_s = 10.0;       // R8
  std::int64_t max_span_ms = 24LL * 3600 * 1000;  // R9
};

struct CleanReport {
  std::map<std::string, std::size_t> sessions_removed_by_rule;
  std::map<std::string, std::size_t> users_removed_by_rule;
  std::map<std::string, std::size_t> repairs_by_rule;
  std::size_t rows_in = 0, rows_out = 0;
  std::size_t sessions_in = 0, sessions_out = 0;
  std::size_t users_in = 0, users_out = 0;

  CleanReport() {
    for (const auto& id : clean_rule_ids()) {
      sessions_removed_by_rule[id] = 0;
      users_removed_by_rule[id] = 0;
      repairs_by_rule[id] = 0;
    }
  }
};

inline nlohmann::ordered_json to_json(const CleanReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "digitwise.clean_report/v1";
  j["rows_in"] = r.rows_in;
  j["rows_out"] = r.rows_out;
  j["sessions_in"] = r.sessions_in;
  j["sessions_out"] = r.sessions_out;
  j["users_in"] = r.users_in;
  j["users_out"] = r.users_out;
  auto ordered = [](const std::map<std::string, std::size_t>& m) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& id : clean_rule_ids()) o[id] = m.at(id);
    return o;
  };
  j["sessions_removed_by_rule"] = ordered(r.sessions_removed_by_rule);
  j["users_removed_by_rule"] = ordered(r.users_removed_by_rule);
  j["repairs_by_rule"] = ordered(r.repairs_by_rule);
  return j;
}

namespace detail {

inline std::size_t count_rows(const Sessions& s) {
  std::size_t n = 0;
  for (const auto& [k, ev] : s) n += ev.size();
  return n;
}

inline std::size_t count_users(const Sessions& s) {
  std::set<std::string> users;
  for (const auto& [k, ev] : s) users.insert(k.user_id);
  return users.size();
}

/// R1: one repair per field changed.
inline std::size_t standardize_nulls(RawEvent& e) {
  std::size_t n = 0;
  for (double* v : {&e.bitrate, &e.videotime_start, &e.videotime_end, &e.event_duration, &e.video_duration})
    if (!is_missing(*v) && !std::isfinite(*v)) {
      *v = kMissing;
      ++n;
    }
  if (!is_missing(e.bitrate) && e.bitrate <= 0.0) {
    e.bitrate = kMissing;
    ++n;
  }
  if (!is_missing(e.video_duration) && e.video_duration <= 0.0) {
    e.video_duration = kMissing;
    ++n;
  }
  if (e.error_code && e.error_code->empty()) {
    e.error_code.reset();
    ++n;
  }
  if (e.error_code && e.event_type != EventType::error) {
    e.event_type = EventType::error;
    ++n;
  }
  if (!e.error_code && e.event_type == EventType::error) {
    e.error_code = "unspecified";
    ++n;
  }
  return n;
}

/// Removes every session of users failing R2, R3 or R4. Returns true if
/// anything was removed.
inline bool apply_user_rules(Sessions& s, const CleanOptions& opt, CleanReport& rep) {
  struct Stats {
    std::size_t sessions = 0;
    std::map<std::string, std::size_t> per_video;
  };
  std::map<std::string, Stats> users;
  for (const auto& [k, ev] : s) {
    auto& u = users[k.user_id];
    ++u.sessions;
    ++u.per_video[k.video_id];
  }
  std::map<std::string, std::string> verdict;
  for (const auto& [user, st] : users) {
    std::size_t top = 0;
    for (const auto& [v, c] : st.per_video) top = std::max(top, c);
    if (top > opt.bot_repeat_limit) verdict[user] = "R2";
    else if (st.sessions < opt.min_sessions) verdict[user] = "R3";
    else if (st.per_video.size() < opt.min_videos) verdict[user] = "R4";
  }
  if (verdict.empty()) return false;
  for (const auto& [user, rule] : verdict) ++rep.users_removed_by_rule[rule];
  for (auto it = s.begin(); it != s.end();) {
    const auto v = verdict.find(it->first.user_id);
    if (v != verdict.end()) {
      ++rep.sessions_removed_by_rule[v->second];
      it = s.erase(it);
    } else {
      ++it;
    }
  }
  return true;
}

/// First session-level rule (R6..R11, then unlabeled) the session fails,
/// or empty.
inline std::string session_verdict(const std::vector<RawEvent>& ev, const CleanOptions& opt) {
  for (const auto& e : ev)
    if (e.event_type == EventType::error) return "R6";
  for (const auto& e : ev)
    if (!is_missing(e.videotime_end) && e.videotime_end < 0.0) return "R7";
  if (play_time(ev) < opt.min_play_time_s) return "R8";
  std::optional<std::int64_t> lo, hi;
  for (const auto& e : ev)
    if (e.client_time) {
      lo = lo ? std::min(*lo, *e.client_time) : *e.client_time;
      hi = hi ? std::max(*hi, *e.client_time) : *e.client_time;
    }
  if (lo && *hi - *lo > opt.max_span_ms) return "R9";
  for (const auto& e : ev)
    if (!is_missing(e.event_duration) && e.event_duration < 0.0) return "R10";
  for (const auto& e : ev)
    if (!is_missing(e.videotime_end) && !is_missing(e.video_duration) && e.videotime_end > e.video_duration)
      return "R11";
  if (!compute_engagement(ev, session_video_duration(ev))) return "unlabeled";
  return {};
}

}  // namespace detail

struct CleanResult {
  Sessions sessions;
  CleanReport report;
};

inline CleanResult clean(Sessions sessions, const CleanOptions& opt = {}) {
  CleanResult out;
  auto& rep = out.report;
  rep.rows_in = detail::count_rows(sessions);
  rep.sessions_in = sessions.size();
  rep.users_in = detail::count_users(sessions);

  for (auto& [k, ev] : sessions)
    for (auto& e : ev) rep.repairs_by_rule["R1"] += detail::standardize_nulls(e);

  detail::apply_user_rules(sessions, opt, rep);

  std::map<std::string, double> max_duration;
  for (const auto& [k, ev] : sessions)
    for (const auto& e : ev)
      if (!is_missing(e.video_duration)) {
        auto [it, fresh] = max_duration.try_emplace(k.video_id, e.video_duration);
        if (!fresh) it->second = std::max(it->second, e.video_duration);
      }
  for (auto& [k, ev] : sessions) {
    const auto it = max_duration.find(k.video_id);
    if (it == max_duration.end()) continue;
    for (auto& e : ev)
      if (!(e.video_duration == it->second)) {
        e.video_duration = it->second;
        ++rep.repairs_by_rule["R5"];
      }
  }

  for (auto it = sessions.begin(); it != sessions.end();) {
    const auto rule = detail::session_verdict(it->second, opt);
    if (!rule.empty()) {
      ++rep.sessions_removed_by_rule[rule];
      it = sessions.erase(it);
    } else {
      ++it;
    }
  }

  while (detail::apply_user_rules(sessions, opt, rep)) {
  }

  rep.rows_out = detail::count_rows(sessions);
  rep.sessions_out = sessions.size();
  rep.users_out = detail::count_users(sessions);
  out.sessions = std::move(sessions);
  return out;
}

}  // namespace digitwise::pipeline
