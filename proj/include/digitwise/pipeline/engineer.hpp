#pragma once

// Per-event feature engineering and the engagement label.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/event_store.hpp"

namespace digitwise::pipeline {

/// video_id -> number of sessions in the (cleaned) corpus.
using PopularityIndex = std::map<std::string, std::size_t>;

inline PopularityIndex build_popularity_index(const Sessions& sessions) {
  PopularityIndex idx;
  for (const auto& [key, events] : sessions) ++idx[key.video_id];
  return idx;
}

inline double popularity_score(const PopularityIndex& idx, const std::string& video_id) {
  const auto it = idx.find(video_id);
  return std::log1p(static_cast<double>(it == idx.end() ? 0 : it->second));
}

/// UTC hour of an epoch-millisecond timestamp.
inline int hour_of_day(std::int64_t epoch_ms) {
  constexpr std::int64_t kHourMs = 3'600'000;
  std::int64_t hours = epoch_ms / kHourMs;
  if (epoch_ms % kHourMs < 0) --hours;
  return static_cast<int>(((hours % 24) + 24) % 24);
}

/// phone=1, tablet=2, laptop=3, desktop=4, tv/console=5, unknown=missing.
inline double screen_size(DeviceClass d) {
  switch (d) {
    case DeviceClass::phone: return 1;
    case DeviceClass::tablet: return 2;
    case DeviceClass::laptop: return 3;
    case DeviceClass::desktop: return 4;
    case DeviceClass::tv:
    case DeviceClass::console: return 5;
    case DeviceClass::unknown: break;
  }
  return kMissing;
}

/// clamp(max videotime_end / video_duration, 0, 1); nullopt when the
/// duration is unusable or no event carries a videotime_end.
inline std::optional<double> compute_engagement(const std::vector<RawEvent>& events, double video_duration) {
  if (!(video_duration > 0.0) || !std::isfinite(video_duration)) return std::nullopt;
  double furthest = kMissing;
  for (const auto& e : events)
    if (!is_missing(e.videotime_end) && (is_missing(furthest) || e.videotime_end > furthest)) furthest = e.videotime_end;
  if (is_missing(furthest)) return std::nullopt;
  return std::clamp(furthest / video_duration, 0.0, 1.0);
}

/// Largest non-missing video_duration among the events.
inline double session_video_duration(const std::vector<RawEvent>& events) {
  double d = kMissing;
  for (const auto& e : events)
    if (!is_missing(e.video_duration) && (is_missing(d) || e.video_duration > d)) d = e.video_duration;
  return d;
}

/// Seconds of playback: summed durations of play and heartbeat events.
inline double play_time(const std::vector<RawEvent>& events) {
  double t = 0.0;
  for (const auto& e : events)
    if ((e.event_type == EventType::play || e.event_type == EventType::heartbeat) && !is_missing(e.event_duration) &&
        e.event_duration > 0.0)
      t += e.event_duration;
  return t;
}

/// Position of an event in the video: where it started, else where it ended.
inline double event_position(const RawEvent& e) {
  return is_missing(e.videotime_start) ? e.videotime_end : e.videotime_start;
}

struct EnrichedEvent {
  RawEvent raw;
  double hour_of_day = kMissing;
  double bitrate_delta = kMissing;  // kbps, bitrate_switch events only
  double latency_ms = kMissing;     // server_time - client_time
  double offset_s = kMissing;       // client time since session start
};

struct EnrichedSession {
  SessionKey key;
  std::vector<EnrichedEvent> events;
  double hour_of_day = kMissing;
  double popularity = 0.0;
  double screen_size = kMissing;
  double video_duration = kMissing;
  std::optional<double> engagement;  // always from the full session
};

/// `events` must be time-ordered (as produced by group_sessions).
inline EnrichedSession engineer(const SessionKey& key, const std::vector<RawEvent>& events,
                                const PopularityIndex& popularity) {
  EnrichedSession s;
  s.key = key;
  s.popularity = popularity_score(popularity, key.video_id);
  s.video_duration = session_video_duration(events);
  s.engagement = compute_engagement(events, s.video_duration);

  std::optional<std::int64_t> start;
  for (const auto& e : events)
    if (e.client_time) {
      start = e.client_time;
      break;
    }
  if (start) s.hour_of_day = hour_of_day(*start);
  for (const auto& e : events)
    if (e.device_class != DeviceClass::unknown) {
      s.screen_size = screen_size(e.device_class);
      break;
    }

  double last_bitrate = kMissing;
  s.events.reserve(events.size());
  for (const auto& e : events) {
    EnrichedEvent x;
    x.raw = e;
    if (e.client_time) {
      x.hour_of_day = hour_of_day(*e.client_time);
      x.offset_s = static_cast<double>(*e.client_time - *start) / 1000.0;
    }
    if (e.client_time && e.server_time) x.latency_ms = static_cast<double>(*e.server_time - *e.client_time);
    if (e.event_type == EventType::bitrate_switch && !is_missing(e.bitrate) && !is_missing(last_bitrate))
      x.bitrate_delta = e.bitrate - last_bitrate;
    if (!is_missing(e.bitrate)) last_bitrate = e.bitrate;
    s.events.push_back(std::move(x));
  }
  return s;
}

}  // namespace digitwise::pipeline
