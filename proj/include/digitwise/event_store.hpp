#pragma once

// Raw player-event data model, CSV/JSONL log parsing and session grouping.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/text.hpp"

namespace digitwise {

enum class EventType { startup, play, pause, seek, stall, bitrate_switch, heartbeat, quit, error };
enum class DeviceClass { phone, tablet, laptop, desktop, tv, console, unknown };
enum class EventFormat { csv, jsonl };

inline constexpr std::array<std::string_view, 9> kEventTypeNames = {
    "startup", "play", "pause", "seek", "stall", "bitrate_switch", "heartbeat", "quit", "error"};
inline constexpr std::array<std::string_view, 7> kDeviceClassNames = {
    "phone", "tablet", "laptop", "desktop", "tv", "console", "unknown"};

inline std::string_view to_string(EventType t) { return kEventTypeNames[static_cast<std::size_t>(t)]; }
inline std::string_view to_string(DeviceClass d) { return kDeviceClassNames[static_cast<std::size_t>(d)]; }

/// Canonical names plus the synonym table raw analytics exports use.
inline std::optional<EventType> parse_event_type(std::string_view s) {
  s = trim(s);
  for (std::size_t i = 0; i < kEventTypeNames.size(); ++i)
    if (s == kEventTypeNames[i]) return static_cast<EventType>(i);
  if (s == "rebuffering" || s == "buffering") return EventType::stall;
  if (s == "qualitychange") return EventType::bitrate_switch;
  if (s == "startuptime") return EventType::startup;
  return std::nullopt;
}

inline DeviceClass parse_device_class(std::string_view s) {
  s = trim(s);
  for (std::size_t i = 0; i < kDeviceClassNames.size(); ++i)
    if (s == kDeviceClassNames[i]) return static_cast<DeviceClass>(i);
  return DeviceClass::unknown;
}

inline EventFormat parse_event_format(std::string_view s) {
  if (s == "csv") return EventFormat::csv;
  if (s == "jsonl") return EventFormat::jsonl;
  throw ConfigError("unknown event log format '" + std::string(s) + "' (expected csv or jsonl)");
}

/// One analytics row per player event. Optional numeric fields hold kMissing.
struct RawEvent {
  std::optional<std::int64_t> client_time;  // epoch ms
  std::optional<std::int64_t> server_time;  // epoch ms
  std::string user_id;
  std::string video_id;
  std::string session_id;
  EventType event_type = EventType::heartbeat;
  DeviceClass device_class = DeviceClass::unknown;
  std::string cdn;
  double bitrate = kMissing;          // kbps
  double videotime_start = kMissing;  // s
  double videotime_end = kMissing;    // s
  double event_duration = kMissing;   // s
  double video_duration = kMissing;   // s
  std::optional<std::string> error_code;
  std::vector<std::pair<std::string, std::string>> extras;  // pass-through columns
};

struct SessionKey {
  std::string user_id;
  std::string video_id;
  std::string session_id;

  auto operator<=>(const SessionKey&) const = default;
  bool operator==(const SessionKey&) const = default;
};

inline SessionKey key_of(const RawEvent& e) { return {e.user_id, e.video_id, e.session_id}; }

using Sessions = std::map<SessionKey, std::vector<RawEvent>>;

struct ParseReport {
  std::size_t rows = 0;
  std::size_t skipped = 0;
  std::size_t nulled_fields = 0;
};

struct ParsedLog {
  std::vector<RawEvent> events;
  ParseReport report;
};

inline constexpr std::array<std::string_view, 14> kEventColumns = {
    "client_time",     "server_time",   "user_id",        "video_id",       "session_id",
    "event_type",      "device_class",  "cdn",            "bitrate",        "videotime_start",
    "videotime_end",   "event_duration", "video_duration", "error_code"};

namespace detail {

enum class Col {
  client_time, server_time, user_id, video_id, session_id, event_type, device_class, cdn,
  bitrate, videotime_start, videotime_end, event_duration, video_duration, error_code
};

// Applies one textual field to an event. Returns false when a mandatory
// field is unusable (row must be skipped); `nulled` counts optional fields
// that were present but unparseable.
inline bool apply_field(RawEvent& e, Col col, std::string_view raw, bool present, std::size_t& nulled) {
  const std::string_view v = trim(raw);
  auto number = [&](double& dst) {
    if (!present || v.empty()) return;
    if (auto d = parse_double(v)) {
      dst = *d;
    } else {
      ++nulled;
    }
  };
  auto integer = [&](std::optional<std::int64_t>& dst) {
    if (!present || v.empty()) return;
    if (auto i = parse_int64(v)) {
      dst = *i;
    } else {
      ++nulled;
    }
  };
  switch (col) {
    case Col::client_time: integer(e.client_time); break;
    case Col::server_time: integer(e.server_time); break;
    case Col::user_id: e.user_id = std::string(v); return !e.user_id.empty();
    case Col::video_id: e.video_id = std::string(v); break;
    case Col::session_id: e.session_id = std::string(v); return !e.session_id.empty();
    case Col::event_type: {
      auto t = parse_event_type(v);
      if (!t) return false;
      e.event_type = *t;
      break;
    }
    case Col::device_class: e.device_class = parse_device_class(v); break;
    case Col::cdn: e.cdn = std::string(v); break;
    case Col::bitrate: number(e.bitrate); break;
    case Col::videotime_start: number(e.videotime_start); break;
    case Col::videotime_end: number(e.videotime_end); break;
    case Col::event_duration: number(e.event_duration); break;
    case Col::video_duration: number(e.video_duration); break;
    case Col::error_code:
      if (present && !v.empty()) e.error_code = std::string(v);
      break;
  }
  return true;
}

// event_type = error <=> error_code non-null.
inline void reconcile_error(RawEvent& e) {
  if (e.error_code) {
    e.event_type = EventType::error;
  } else if (e.event_type == EventType::error) {
    e.error_code = "unspecified";
  }
}

inline std::optional<Col> column_of(std::string_view name) {
  for (std::size_t i = 0; i < kEventColumns.size(); ++i)
    if (name == kEventColumns[i]) return static_cast<Col>(i);
  return std::nullopt;
}

inline ParsedLog parse_csv(std::istream& is) {
  ParsedLog out;
  CsvReader reader(is);
  std::vector<std::string> header;
  bool malformed = false;
  if (!reader.next(header, malformed)) throw SchemaError("event log is empty: missing header row");
  std::vector<std::optional<Col>> mapping;
  for (auto& h : header) mapping.push_back(column_of(trim(h)));
  for (std::string_view mandatory : {"user_id", "session_id", "event_type"}) {
    if (std::none_of(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == mandatory; }))
      throw SchemaError("event log header is missing mandatory column '" + std::string(mandatory) + "'");
  }
  std::vector<std::string> fields;
  while (reader.next(fields, malformed)) {
    if (fields.size() == 1 && trim(fields[0]).empty() && !malformed) continue;  // blank line
    ++out.report.rows;
    if (malformed || fields.size() != header.size()) {
      ++out.report.skipped;
      continue;
    }
    RawEvent e;
    std::size_t nulled = 0;
    bool ok = true;
    for (std::size_t i = 0; i < fields.size() && ok; ++i) {
      if (mapping[i]) {
        ok = apply_field(e, *mapping[i], fields[i], true, nulled);
      } else {
        e.extras.emplace_back(std::string(trim(header[i])), fields[i]);
      }
    }
    if (!ok) {
      ++out.report.skipped;
      continue;
    }
    reconcile_error(e);
    out.report.nulled_fields += nulled;
    out.events.push_back(std::move(e));
  }
  if (is.bad()) throw IoError("read failure while parsing event log");
  return out;
}

inline ParsedLog parse_jsonl(std::istream& is) {
  using nlohmann::json;
  ParsedLog out;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    ++out.report.rows;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      ++out.report.skipped;
      continue;
    }
    if (!obj.is_object()) {
      ++out.report.skipped;
      continue;
    }
    RawEvent e;
    std::size_t nulled = 0;
    bool ok = true;
    for (std::string_view mandatory : {"user_id", "session_id", "event_type"})
      if (!obj.contains(mandatory) || !obj[std::string(mandatory)].is_string()) ok = false;
    for (auto it = obj.begin(); it != obj.end() && ok; ++it) {
      const auto col = column_of(it.key());
      std::string text;
      bool present = !it->is_null();
      if (it->is_string()) {
        text = it->get<std::string>();
      } else if (it->is_number_integer()) {
        text = std::to_string(it->get<std::int64_t>());
      } else if (it->is_number()) {
        text = format_double(it->get<double>());
      } else if (present) {
        text = it->dump();
      }
      if (col) {
        ok = apply_field(e, *col, text, present, nulled);
      } else {
        e.extras.emplace_back(it.key(), text);
      }
    }
    if (!ok) {
      ++out.report.skipped;
      continue;
    }
    reconcile_error(e);
    out.report.nulled_fields += nulled;
    out.events.push_back(std::move(e));
  }
  if (is.bad()) throw IoError("read failure while parsing event log");
  return out;
}

inline std::string time_text(const std::optional<std::int64_t>& t) { return t ? std::to_string(*t) : std::string{}; }

}  // namespace detail

inline ParsedLog parse_event_log(std::istream& is, EventFormat format) {
  if (!is) throw IoError("event log stream is not readable");
  return format == EventFormat::csv ? detail::parse_csv(is) : detail::parse_jsonl(is);
}

inline ParsedLog load_event_log(const std::filesystem::path& path, EventFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open event log '" + path.string() + "'");
  return parse_event_log(in, format);
}

/// Writes events with the same column names the parser expects. Extra
/// pass-through columns are appended in first-seen order.
inline void write_event_log(std::ostream& os, const std::vector<RawEvent>& events, EventFormat format) {
  std::vector<std::string> extra_names;
  for (const auto& e : events)
    for (const auto& [k, v] : e.extras)
      if (std::find(extra_names.begin(), extra_names.end(), k) == extra_names.end()) extra_names.push_back(k);

  auto values = [](const RawEvent& e) {
    return std::vector<std::string>{detail::time_text(e.client_time), detail::time_text(e.server_time),
                                    e.user_id, e.video_id, e.session_id,
                                    std::string(to_string(e.event_type)), std::string(to_string(e.device_class)),
                                    e.cdn, format_double(e.bitrate), format_double(e.videotime_start),
                                    format_double(e.videotime_end), format_double(e.event_duration),
                                    format_double(e.video_duration), e.error_code.value_or("")};
  };

  if (format == EventFormat::csv) {
    std::vector<std::string> header(kEventColumns.begin(), kEventColumns.end());
    header.insert(header.end(), extra_names.begin(), extra_names.end());
    write_csv_row(os, header);
    for (const auto& e : events) {
      auto row = values(e);
      for (const auto& name : extra_names) {
        auto it = std::find_if(e.extras.begin(), e.extras.end(), [&](auto& kv) { return kv.first == name; });
        row.push_back(it == e.extras.end() ? std::string{} : it->second);
      }
      write_csv_row(os, row);
    }
  } else {
    using nlohmann::ordered_json;
    for (const auto& e : events) {
      ordered_json obj;
      auto num = [](double v) { return is_missing(v) ? ordered_json(nullptr) : ordered_json(v); };
      obj["client_time"] = e.client_time ? ordered_json(*e.client_time) : ordered_json(nullptr);
      obj["server_time"] = e.server_time ? ordered_json(*e.server_time) : ordered_json(nullptr);
      obj["user_id"] = e.user_id;
      obj["video_id"] = e.video_id;
      obj["session_id"] = e.session_id;
      obj["event_type"] = to_string(e.event_type);
      obj["device_class"] = to_string(e.device_class);
      obj["cdn"] = e.cdn;
      obj["bitrate"] = num(e.bitrate);
      obj["videotime_start"] = num(e.videotime_start);
      obj["videotime_end"] = num(e.videotime_end);
      obj["event_duration"] = num(e.event_duration);
      obj["video_duration"] = num(e.video_duration);
      obj["error_code"] = e.error_code ? ordered_json(*e.error_code) : ordered_json(nullptr);
      for (const auto& [k, v] : e.extras) obj[k] = v;
      os << obj.dump() << '\n';
    }
  }
  if (!os) throw IoError("write failure while serializing event log");
}

/// Groups events by SessionKey; each group is sorted by client_time
/// (stable, missing times first).
inline Sessions group_sessions(std::vector<RawEvent> events) {
  Sessions out;
  for (auto& e : events) {
    auto key = key_of(e);
    out[std::move(key)].push_back(std::move(e));
  }
  for (auto& [key, group] : out) {
    std::stable_sort(group.begin(), group.end(), [](const RawEvent& a, const RawEvent& b) {
      return a.client_time.value_or(INT64_MIN) < b.client_time.value_or(INT64_MIN);
    });
  }
  return out;
}

inline std::vector<RawEvent> flatten(const Sessions& sessions) {
  std::vector<RawEvent> out;
  for (const auto& [key, group] : sessions) out.insert(out.end(), group.begin(), group.end());
  return out;
}

// ---------------------------------------------------------------------------
// Sessions directory: events.csv (grouped, time-ordered) + manifest.json.

inline void save_sessions(const std::filesystem::path& dir, const Sessions& sessions, const ParseReport& report = {}) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "events.csv");
  if (!out) throw IoError("cannot write '" + (dir / "events.csv").string() + "'");
  const auto events = flatten(sessions);
  write_event_log(out, events, EventFormat::csv);
  nlohmann::ordered_json manifest;
  manifest["schema"] = "digitwise.sessions/v1";
  manifest["sessions"] = sessions.size();
  manifest["events"] = events.size();
  manifest["parse_report"] = {{"rows", report.rows}, {"skipped", report.skipped}, {"nulled_fields", report.nulled_fields}};
  std::ofstream m(dir / "manifest.json");
  m << manifest.dump(2) << '\n';
  if (!m) throw IoError("cannot write session manifest in '" + dir.string() + "'");
}

inline Sessions load_sessions(const std::filesystem::path& dir) {
  return group_sessions(load_event_log(dir / "events.csv", EventFormat::csv).events);
}

}  // namespace digitwise
