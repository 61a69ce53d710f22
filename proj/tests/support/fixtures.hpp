#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "digitwise/event_store.hpp"

namespace digitwise::testing {

struct SessionSpec {
  std::string user = "u";
  std::string video = "v";
  std::string session = "s";
  std::int64_t start_ms = 1'700'000'000'000;  // 2023-11-14 22:13:20 UTC
  double video_duration = 600.0;
  double watched = 300.0;
  double startup = 1.0;
  double bitrate = 1600.0;
  DeviceClass device = DeviceClass::phone;
};

/// startup, play, one heartbeat per 10 s of playback, quit. Each heartbeat
/// covers [k*10, min((k+1)*10, watched)] and its client time advances by the
/// same amount, so play_time == watched.
inline std::vector<RawEvent> make_session(const SessionSpec& s) {
  std::vector<RawEvent> ev;
  auto base = [&](EventType t, double at_s) {
    RawEvent e;
    e.client_time = s.start_ms + static_cast<std::int64_t>(std::llround(at_s * 1000.0));
    e.server_time = *e.client_time + 40;
    e.user_id = s.user;
    e.video_id = s.video;
    e.session_id = s.session;
    e.event_type = t;
    e.device_class = s.device;
    e.cdn = "cdn-a";
    e.video_duration = s.video_duration;
    return e;
  };
  auto startup = base(EventType::startup, 0.0);
  startup.event_duration = s.startup;
  startup.videotime_start = 0.0;
  startup.videotime_end = 0.0;
  ev.push_back(startup);
  auto play = base(EventType::play, s.startup);
  play.bitrate = s.bitrate;
  play.videotime_start = 0.0;
  play.videotime_end = 0.0;
  play.event_duration = 0.0;
  ev.push_back(play);
  for (double pos = 0.0; pos < s.watched; pos += 10.0) {
    const double end = std::min(pos + 10.0, s.watched);
    auto hb = base(EventType::heartbeat, s.startup + end);
    hb.bitrate = s.bitrate;
    hb.videotime_start = pos;
    hb.videotime_end = end;
    hb.event_duration = end - pos;
    ev.push_back(hb);
  }
  auto quit = base(EventType::quit, s.startup + s.watched);
  quit.videotime_start = s.watched;
  quit.videotime_end = s.watched;
  quit.event_duration = 0.0;
  ev.push_back(quit);
  return ev;
}

/// n valid sessions cycling over `videos` distinct video ids.
inline void add_user(Sessions& out, const std::string& user, int n, int videos, double watched = 300.0) {
  for (int i = 0; i < n; ++i) {
    SessionSpec s;
    s.user = user;
    s.video = "v" + std::to_string(i % videos);
    s.session = user + "-s" + std::to_string(i);
    s.start_ms += static_cast<std::int64_t>(i) * 86'400'000LL;
    s.watched = watched;
    auto ev = make_session(s);
    out[key_of(ev.front())] = std::move(ev);
  }
}

}  // namespace digitwise::testing
