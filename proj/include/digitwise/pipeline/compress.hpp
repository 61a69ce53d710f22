#pragma once

// One SessionRecord per session: aggregates over the enriched events.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/learner/matrix.hpp"
#include "digitwise/learner/stats.hpp"
#include "digitwise/pipeline/engineer.hpp"

namespace digitwise::pipeline {

/// Numeric fields use kMissing for "not defined".
struct SessionRecord {
  std::string user_id;
  std::string video_id;
  std::string session_id;
  double hour_of_day = kMissing;
  double popularity = 0.0;
  double screen_size = kMissing;
  double video_duration = kMissing;
  double startup_delay = 0.0;
  double play_time = 0.0;
  double stall_count = 0.0;
  double stall_duration_mean = kMissing;
  double stall_duration_std = kMissing;
  double stall_duration_skew = kMissing;  // positional, weighted by stall duration
  double bitrate_mean = kMissing;
  double bitrate_std = kMissing;
  double switch_count = 0.0;
  double switch_magnitude_mean = kMissing;
  double switch_skew = kMissing;  // positional, weighted by |bitrate delta|
  double seek_count = 0.0;
  double pause_count = 0.0;
  double latency_mean = kMissing;
  double engagement = kMissing;

  SessionKey key() const { return {user_id, video_id, session_id}; }
};

struct NumericField {
  std::string_view name;
  double SessionRecord::*member;
};

/// Every numeric column in persisted order (engagement last).
inline constexpr std::array<NumericField, 19> kNumericFields{{
    {"hour_of_day", &SessionRecord::hour_of_day},
    {"popularity", &SessionRecord::popularity},
    {"screen_size", &SessionRecord::screen_size},
    {"video_duration", &SessionRecord::video_duration},
    {"startup_delay", &SessionRecord::startup_delay},
    {"play_time", &SessionRecord::play_time},
    {"stall_count", &SessionRecord::stall_count},
    {"stall_duration_mean", &SessionRecord::stall_duration_mean},
    {"stall_duration_std", &SessionRecord::stall_duration_std},
    {"stall_duration_skew", &SessionRecord::stall_duration_skew},
    {"bitrate_mean", &SessionRecord::bitrate_mean},
    {"bitrate_std", &SessionRecord::bitrate_std},
    {"switch_count", &SessionRecord::switch_count},
    {"switch_magnitude_mean", &SessionRecord::switch_magnitude_mean},
    {"switch_skew", &SessionRecord::switch_skew},
    {"seek_count", &SessionRecord::seek_count},
    {"pause_count", &SessionRecord::pause_count},
    {"latency_mean", &SessionRecord::latency_mean},
    {"engagement", &SessionRecord::engagement},
}};

/// Predictors offered to feature selection. play_time is kept out: at the
/// full horizon it is essentially the label times the video duration.
inline const std::vector<std::string>& candidate_features() {
  static const std::vector<std::string> names{
      "hour_of_day",  "popularity",          "screen_size",  "video_duration",        "startup_delay",
      "stall_count",  "stall_duration_mean", "stall_duration_std", "stall_duration_skew", "bitrate_mean",
      "bitrate_std",  "switch_count",        "switch_magnitude_mean", "switch_skew",      "seek_count",
      "pause_count",  "latency_mean"};
  return names;
}

inline double SessionRecord::*field_member(std::string_view name) {
  for (const auto& f : kNumericFields)
    if (f.name == name) return f.member;
  throw SchemaError("unknown session record field '" + std::string(name) + "'");
}

inline double field_value(const SessionRecord& r, std::string_view name) { return r.*field_member(name); }

/// Builds a feature matrix (columns in `features` order) with engagement as
/// the target.
inline learner::Dataset to_dataset(std::span<const SessionRecord> records, const std::vector<std::string>& features) {
  std::vector<double SessionRecord::*> members;
  for (const auto& f : features) members.push_back(field_member(f));
  learner::Dataset d;
  d.feature_names = features;
  d.x = learner::Matrix(records.size(), features.size());
  d.y.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (std::size_t c = 0; c < members.size(); ++c) d.x(r, c) = records[r].*members[c];
    d.y.push_back(records[r].engagement);
  }
  return d;
}

/// Skewness of where weighted events fall in the played span [0, span].
/// The event-position distribution is mixed in equal mass with a uniform
/// distribution over the span, so events clustered early give a positive
/// value and events clustered late a negative one. Null below 3 events.
inline std::optional<double> positional_skewness(std::span<const double> positions, std::span<const double> weights,
                                                 double span) {
  if (positions.size() < 3 || positions.size() != weights.size()) return std::nullopt;
  if (!(span > 0.0) || !std::isfinite(span)) return std::nullopt;
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  const bool equal = !(wsum > 0.0);
  const double total = equal ? static_cast<double>(positions.size()) : wsum;
  auto w_at = [&](std::size_t i) { return equal ? 1.0 : weights[i]; };

  double mu_x = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) mu_x += w_at(i) * positions[i];
  mu_x /= total;
  const double m = 0.5 * mu_x + 0.25 * span;

  double mx2 = 0.0, mx3 = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double d = positions[i] - m;
    mx2 += w_at(i) * d * d;
    mx3 += w_at(i) * d * d * d;
  }
  mx2 /= total;
  mx3 /= total;
  auto uniform_moment = [&](int k) {
    return (std::pow(span - m, k + 1) - std::pow(-m, k + 1)) / ((k + 1) * span);
  };
  const double m2 = 0.5 * mx2 + 0.5 * uniform_moment(2);
  const double m3 = 0.5 * mx3 + 0.5 * uniform_moment(3);
  if (!(m2 > 0.0)) return std::nullopt;
  return m3 / std::pow(m2, 1.5);
}

inline double to_value(const std::optional<double>& v) { return v ? *v : kMissing; }

inline SessionRecord compress(const EnrichedSession& s) {
  SessionRecord r;
  r.user_id = s.key.user_id;
  r.video_id = s.key.video_id;
  r.session_id = s.key.session_id;
  r.hour_of_day = s.hour_of_day;
  r.popularity = s.popularity;
  r.screen_size = s.screen_size;
  r.video_duration = s.video_duration;
  r.engagement = to_value(s.engagement);

  std::vector<double> stall_durations, stall_pos, stall_w, bitrates, magnitudes, switch_pos, switch_w, latencies;
  double span = 0.0;
  bool startup_seen = false;
  for (const auto& x : s.events) {
    const auto& e = x.raw;
    if (!is_missing(e.videotime_end)) span = std::max(span, e.videotime_end);
    const double pos = event_position(e);
    if (!is_missing(pos)) span = std::max(span, pos);
    if (!is_missing(e.bitrate)) bitrates.push_back(e.bitrate);
    if (!is_missing(x.latency_ms)) latencies.push_back(x.latency_ms);
    switch (e.event_type) {
      case EventType::startup:
        if (!startup_seen && !is_missing(e.event_duration)) r.startup_delay = e.event_duration;
        startup_seen = true;
        break;
      case EventType::play:
      case EventType::heartbeat:
        if (!is_missing(e.event_duration) && e.event_duration > 0.0) r.play_time += e.event_duration;
        break;
      case EventType::stall:
        r.stall_count += 1;
        if (!is_missing(e.event_duration)) stall_durations.push_back(e.event_duration);
        if (!is_missing(pos)) {
          stall_pos.push_back(pos);
          stall_w.push_back(is_missing(e.event_duration) ? 0.0 : std::max(0.0, e.event_duration));
        }
        break;
      case EventType::bitrate_switch:
        r.switch_count += 1;
        if (!is_missing(x.bitrate_delta)) {
          magnitudes.push_back(std::fabs(x.bitrate_delta));
          if (!is_missing(pos)) {
            switch_pos.push_back(pos);
            switch_w.push_back(std::fabs(x.bitrate_delta));
          }
        }
        break;
      case EventType::seek: r.seek_count += 1; break;
      case EventType::pause: r.pause_count += 1; break;
      default: break;
    }
  }
  if (!stall_durations.empty()) {
    r.stall_duration_mean = learner::mean(stall_durations);
    r.stall_duration_std = learner::stddev(stall_durations);
  }
  r.stall_duration_skew = to_value(positional_skewness(stall_pos, stall_w, span));
  if (!bitrates.empty()) {
    r.bitrate_mean = learner::mean(bitrates);
    r.bitrate_std = learner::stddev(bitrates);
  }
  if (!magnitudes.empty()) r.switch_magnitude_mean = learner::mean(magnitudes);
  r.switch_skew = to_value(positional_skewness(switch_pos, switch_w, span));
  if (!latencies.empty()) r.latency_mean = learner::mean(latencies);
  return r;
}

/// Keeps events whose client-relative time is within `horizon_s`. Events
/// without a timestamp are kept only for an unbounded horizon. The
/// engagement label is left untouched.
inline EnrichedSession truncate_horizon(const EnrichedSession& s, double horizon_s) {
  if (std::isinf(horizon_s)) return s;
  EnrichedSession t = s;
  t.events.clear();
  for (const auto& x : s.events)
    if (!is_missing(x.offset_s) && x.offset_s <= horizon_s) t.events.push_back(x);
  return t;
}

}  // namespace digitwise::pipeline
