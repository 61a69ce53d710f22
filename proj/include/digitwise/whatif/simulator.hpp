#pragma once

// Segment-level playback simulator. Downloads are sequential; a segment is
// fetched once the buffer has room for it, playback starts when the startup
// target is buffered, and an underrun stalls until the next segment lands.
// Output is an event sequence in the event_store schema.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/event_store.hpp"
#include "digitwise/whatif/traces.hpp"

namespace digitwise::whatif {

struct LadderRung {
  double bitrate_kbps = 0.0;
  std::string resolution;
};

using Ladder = std::vector<LadderRung>;

inline Ladder default_ladder() {
  return {{400, "240p"}, {800, "360p"}, {1600, "480p"}, {3200, "720p"}, {6400, "1080p"}};
}

inline void validate_ladder(const Ladder& l) {
  if (l.empty()) throw ConfigError("ladder must not be empty");
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (!(l[i].bitrate_kbps > 0.0) || !std::isfinite(l[i].bitrate_kbps))
      throw ConfigError("ladder bitrates must be finite and > 0");
    if (i > 0 && !(l[i].bitrate_kbps > l[i - 1].bitrate_kbps))
      throw ConfigError("ladder must be strictly increasing in bitrate");
  }
}

enum class AbrPolicy { throughput, buffer, hybrid };

inline std::string_view to_string(AbrPolicy p) {
  switch (p) {
    case AbrPolicy::throughput: return "throughput";
    case AbrPolicy::buffer: return "buffer";
    case AbrPolicy::hybrid: return "hybrid";
  }
  return "throughput";
}

inline AbrPolicy parse_abr_policy(std::string_view s) {
  if (s == "throughput") return AbrPolicy::throughput;
  if (s == "buffer") return AbrPolicy::buffer;
  if (s == "hybrid" || s == "hybrid-low-latency") return AbrPolicy::hybrid;
  throw ConfigError("unknown abr '" + std::string(s) + "' (expected throughput, buffer or hybrid)");
}

struct PlayerConfig {
  double segment_s = 2.0;
  AbrPolicy abr = AbrPolicy::throughput;
  Ladder ladder = default_ladder();
  double video_duration_s = 600.0;
  int startup_segments = 2;
  double max_buffer_s = 30.0;
  double jitter = 0.1;  // bandwidth multiplied by U[1 - jitter, 1 + jitter] per trace step

  void validate() const {
    if (!(segment_s > 0.0)) throw ConfigError("segment_size must be > 0");
    if (!(video_duration_s > 0.0) || !std::isfinite(video_duration_s))
      throw ConfigError("video_duration must be finite and > 0");
    if (startup_segments < 1) throw ConfigError("startup_segments must be >= 1");
    if (!(max_buffer_s >= (startup_segments + 1) * segment_s))
      throw ConfigError("max_buffer must hold the startup target plus one segment");
    if (!(jitter >= 0.0 && jitter < 1.0)) throw ConfigError("jitter must lie in [0, 1)");
    validate_ladder(ladder);
  }
};

struct SessionIdentity {
  std::string user_id = "sim-user";
  std::string video_id = "sim-video";
  std::string session_id = "sim-session";
  std::int64_t start_ms = 1'700'000'000'000;
  DeviceClass device = DeviceClass::desktop;
};

struct SegmentLog {
  std::size_t rung = 0;
  double content_start = 0.0;
  double length = 0.0;
  double download_start = 0.0;
  double download_end = 0.0;
  double play_start = 0.0;
  double stall_before = 0.0;
};

struct SimulationResult {
  std::vector<RawEvent> events;
  std::vector<SegmentLog> segments;
  double startup_delay = 0.0;
  double play_time = 0.0;
  double stall_time = 0.0;
  double wall_time = 0.0;
  std::size_t stall_count = 0;
  std::size_t switch_count = 0;
};

namespace detail {

/// Walks the (repeating) trace forward in wall time. Each step occurrence
/// gets its own jitter factor derived from the session seed.
class TraceCursor {
 public:
  TraceCursor(const BandwidthTrace& trace, double jitter, std::uint64_t seed)
      : trace_(trace), jitter_(jitter), seed_(seed) {}

  /// Wall time at which `kbit` have been delivered starting from `t`.
  double deliver(double t, double kbit) {
    seek(t);
    double now = t;
    double remaining = kbit;
    for (;;) {
      const double end = step_start_ + duration();
      const double bw = bandwidth();
      const double avail = (end - now) * bw;
      if (avail >= remaining) return now + remaining / bw;
      remaining -= avail;
      now = end;
      step_start_ = end;
      ++occurrence_;
    }
  }

 private:
  const TraceStep& step() const { return trace_.steps[occurrence_ % trace_.steps.size()]; }
  double duration() const { return step().duration_s; }

  double bandwidth() const {
    const std::uint64_t x = splitmix64(derive_seed(seed_, static_cast<std::uint64_t>(occurrence_)));
    const double u = static_cast<double>(x >> 11) * 0x1.0p-53;
    return step().bandwidth_kbps * (1.0 + jitter_ * (2.0 * u - 1.0));
  }

  void seek(double t) {
    while (step_start_ + duration() <= t) {
      step_start_ += duration();
      ++occurrence_;
    }
  }

  const BandwidthTrace& trace_;
  double jitter_;
  std::uint64_t seed_;
  std::size_t occurrence_ = 0;
  double step_start_ = 0.0;
};

inline std::size_t highest_rung_below(const Ladder& l, double kbps) {
  std::size_t r = 0;
  for (std::size_t i = 0; i < l.size(); ++i)
    if (l[i].bitrate_kbps <= kbps) r = i;
  return r;
}

inline double harmonic_mean_last(const std::vector<double>& v, std::size_t n) {
  const std::size_t k = std::min(n, v.size());
  double acc = 0.0;
  for (std::size_t i = v.size() - k; i < v.size(); ++i) acc += 1.0 / v[i];
  return static_cast<double>(k) / acc;
}

}  // namespace detail

/// Next rung. `previous` is meaningless when `history` is empty; the first
/// segment always goes out at the lowest rung except under the buffer rule.
inline std::size_t choose_rung(const PlayerConfig& cfg, const std::vector<double>& throughput_history,
                               double buffer_level_s, std::size_t previous) {
  const auto& l = cfg.ladder;
  switch (cfg.abr) {
    case AbrPolicy::buffer: {
      const double step = cfg.max_buffer_s / static_cast<double>(l.size());
      std::size_t r = 0;
      for (std::size_t i = 1; i < l.size(); ++i)
        if (buffer_level_s >= step * static_cast<double>(i)) r = i;
      return r;
    }
    case AbrPolicy::throughput:
    case AbrPolicy::hybrid: {
      if (throughput_history.empty()) return 0;
      std::size_t r = detail::highest_rung_below(l, detail::harmonic_mean_last(throughput_history, 3));
      if (cfg.abr == AbrPolicy::hybrid) r = std::min(r, previous + 1);
      return r;
    }
  }
  return 0;
}

inline SimulationResult simulate_session(const PlayerConfig& cfg, const BandwidthTrace& trace, std::uint64_t seed,
                                         const SessionIdentity& id = {}) {
  cfg.validate();
  trace.validate();
  SimulationResult res;
  const double d = cfg.video_duration_s;
  const auto n = static_cast<std::size_t>(std::ceil(d / cfg.segment_s - 1e-9));
  const std::size_t m = std::min(n, static_cast<std::size_t>(cfg.startup_segments));
  detail::TraceCursor cursor(trace, cfg.jitter, derive_seed(seed, "bandwidth"));

  auto& segs = res.segments;
  segs.reserve(n);
  std::vector<double> throughput;

  // Content position played at wall time t; valid once playback started.
  auto position_at = [&](double t) {
    for (std::size_t j = segs.size(); j-- > 0;)
      if (segs[j].play_start <= t) return segs[j].content_start + std::min(segs[j].length, t - segs[j].play_start);
    return 0.0;
  };
  // Earliest wall time at which content position q is reached.
  auto time_at_position = [&](double q) {
    for (std::size_t j = segs.size(); j-- > 0;)
      if (segs[j].content_start <= q) return segs[j].play_start + (q - segs[j].content_start);
    return 0.0;
  };

  double t_ready = 0.0;  // previous download completion
  double played_end = 0.0;
  double content = 0.0;
  double startup = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    SegmentLog s;
    s.content_start = content;
    s.length = std::min(cfg.segment_s, d - content);
    double start = t_ready;
    if (k >= m) {
      const double q = content - (cfg.max_buffer_s - s.length);
      if (q > 0.0) start = std::max(start, time_at_position(q));
    }
    const bool playing = k >= m;
    const double level = playing ? content - position_at(start) : content;
    s.rung = choose_rung(cfg, throughput, level, k == 0 ? 0 : segs.back().rung);
    const double kbit = s.length * cfg.ladder[s.rung].bitrate_kbps;
    s.download_start = start;
    s.download_end = cursor.deliver(start, kbit);
    throughput.push_back(kbit / (s.download_end - s.download_start));
    t_ready = s.download_end;

    if (k + 1 == m) {
      startup = s.download_end;
      double ps = startup;
      for (auto& prev : segs) {
        prev.play_start = ps;
        ps += prev.length;
      }
      s.play_start = ps;
      played_end = ps + s.length;
    } else if (k >= m) {
      s.play_start = std::max(played_end, s.download_end);
      s.stall_before = s.play_start - played_end;
      played_end = s.play_start + s.length;
    }
    content += s.length;
    segs.push_back(s);
  }

  res.startup_delay = startup;
  res.wall_time = played_end;
  res.play_time = d;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    res.stall_time += segs[k].stall_before;
    res.stall_count += segs[k].stall_before > 0.0;
    res.switch_count += k > 0 && segs[k].rung != segs[k - 1].rung;
  }

  Rng rng(derive_seed(seed, "latency"));
  auto make = [&](EventType type, double wall) {
    RawEvent e;
    e.client_time = id.start_ms + static_cast<std::int64_t>(std::llround(wall * 1000.0));
    e.server_time = *e.client_time + static_cast<std::int64_t>(rng.between(20, 200));
    e.user_id = id.user_id;
    e.video_id = id.video_id;
    e.session_id = id.session_id;
    e.event_type = type;
    e.device_class = id.device;
    e.cdn = "sim";
    e.video_duration = d;
    return e;
  };
  auto& ev = res.events;
  auto e = make(EventType::startup, 0.0);
  e.videotime_start = e.videotime_end = 0.0;
  e.event_duration = startup;
  ev.push_back(e);
  e = make(EventType::play, startup);
  e.bitrate = cfg.ladder[segs.front().rung].bitrate_kbps;
  e.videotime_start = e.videotime_end = 0.0;
  e.event_duration = 0.0;
  ev.push_back(e);
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& s = segs[k];
    const double rate = cfg.ladder[s.rung].bitrate_kbps;
    if (s.stall_before > 0.0) {
      e = make(EventType::stall, s.play_start - s.stall_before);
      e.bitrate = k > 0 ? cfg.ladder[segs[k - 1].rung].bitrate_kbps : rate;
      e.videotime_start = e.videotime_end = s.content_start;
      e.event_duration = s.stall_before;
      ev.push_back(e);
    }
    if (k > 0 && s.rung != segs[k - 1].rung) {
      e = make(EventType::bitrate_switch, s.play_start);
      e.bitrate = rate;
      e.videotime_start = e.videotime_end = s.content_start;
      e.event_duration = 0.0;
      ev.push_back(e);
    }
    e = make(EventType::heartbeat, s.play_start + s.length);
    e.bitrate = rate;
    e.videotime_start = s.content_start;
    e.videotime_end = s.content_start + s.length;
    e.event_duration = s.length;
    ev.push_back(e);
  }
  e = make(EventType::quit, res.wall_time);
  e.bitrate = cfg.ladder[segs.back().rung].bitrate_kbps;
  e.videotime_start = e.videotime_end = d;
  e.event_duration = 0.0;
  ev.push_back(e);
  return res;
}

}  // namespace digitwise::whatif
