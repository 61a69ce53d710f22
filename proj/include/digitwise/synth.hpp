#pragma once

// Synthetic users with known sensitivity structure and the raw event logs
// that realize them.
//
// Engagement of a session is
//   clamp(1 - sum_f w_f * p_f + N(0, noise_sd), 15 / D, 1)
// with one penalty p_f in [0,1] per feature family:
//   stall       stall_count / 8, stall_count in 0..8
//   bitrate     (4 - rung) / 4 on the five-rung ladder
//   duration    (D - 120) / (1800 - 120), clipped
//   popularity  popularity rank / (n_videos - 1), rank 0 = most watched
// The 15 s floor keeps every session above the minimum play time.
//
// Sessions of a user are drawn from a candidate pool so that every
// engagement decile receives the same number of sessions; corpora
// therefore survive bin balancing with few losses.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/parallel.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/core/text.hpp"
#include "digitwise/event_store.hpp"

namespace digitwise::synth {

enum class Archetype { stall_sensitive, bitrate_sensitive, duration_sensitive, popularity_driven, mixed };
inline constexpr std::array<std::string_view, 5> kArchetypeNames{"stall_sensitive", "bitrate_sensitive",
                                                                 "duration_sensitive", "popularity_driven", "mixed"};
inline constexpr std::array<std::string_view, 4> kFamilies{"stall", "bitrate", "duration", "popularity"};
inline constexpr std::array<double, 5> kLadderKbps{400, 800, 1600, 3200, 6400};
inline constexpr double kDurationPenaltyMin = 120.0;
inline constexpr double kDurationPenaltyMax = 1800.0;
inline constexpr int kMaxStalls = 8;
inline constexpr double kMinWatchedS = 15.0;

inline std::string_view to_string(Archetype a) { return kArchetypeNames[static_cast<std::size_t>(a)]; }

inline Archetype parse_archetype(std::string_view s) {
  for (std::size_t i = 0; i < kArchetypeNames.size(); ++i)
    if (kArchetypeNames[i] == s) return static_cast<Archetype>(i);
  throw ConfigError("unknown archetype '" + std::string(s) + "'");
}

/// Dominant family of an archetype; -1 for mixed.
inline int dominant_family(Archetype a) { return a == Archetype::mixed ? -1 : static_cast<int>(a); }

/// Feature family a session-record feature belongs to, or empty.
inline std::string family_of(std::string_view feature) {
  if (feature.rfind("stall_", 0) == 0) return "stall";
  if (feature.rfind("bitrate_", 0) == 0 || feature.rfind("switch_", 0) == 0) return "bitrate";
  if (feature == "video_duration") return "duration";
  if (feature == "popularity") return "popularity";
  return {};
}

struct GroundTruthUser {
  std::string user_id;
  Archetype archetype = Archetype::mixed;
  std::array<double, 4> weights{};  // by kFamilies order, sum 1
  double noise_sd = 0.05;

  double weight(std::string_view family) const {
    for (std::size_t i = 0; i < kFamilies.size(); ++i)
      if (kFamilies[i] == family) return weights[i];
    throw ConfigError("unknown feature family '" + std::string(family) + "'");
  }
};

struct SynthConfig {
  std::size_t n_users = 60;
  std::size_t sessions_per_user = 300;
  std::size_t n_videos = 40;
  double video_duration_min = 120.0;
  double video_duration_max = 1800.0;
  std::uint64_t seed = 1;
  std::map<Archetype, double> archetype_mix{{Archetype::stall_sensitive, 0.5}, {Archetype::bitrate_sensitive, 0.5}};
  double noise_sd = 0.05;
  double dominant_weight_min = 0.55;
  double dominant_weight_max = 0.75;
  double zipf_exponent = 0.8;
  double heartbeat_interval_s = 30.0;
  std::size_t pool_factor = 20;
  std::int64_t start_time_ms = 1'700'000'000'000;

  void validate() const {
    if (n_users == 0) throw ConfigError("synth: n_users must be >= 1");
    if (sessions_per_user < 100) throw ConfigError("synth: sessions_per_user must be >= 100");
    if (n_videos < 5) throw ConfigError("synth: n_videos must be >= 5");
    if (!(video_duration_min >= 2 * kMinWatchedS) || !(video_duration_max >= video_duration_min) ||
        video_duration_max > 24 * 3600.0)
      throw ConfigError("synth: video duration range must satisfy 30 <= min <= max <= 86400");
    double total = 0.0;
    for (const auto& [a, p] : archetype_mix) {
      if (!(p >= 0.0)) throw ConfigError("synth: archetype proportions must be >= 0");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("synth: archetype proportions must sum to 1");
    if (!(noise_sd >= 0.0)) throw ConfigError("synth: noise_sd must be >= 0");
    if (!(dominant_weight_min > 0.25 && dominant_weight_min <= dominant_weight_max && dominant_weight_max <= 1.0))
      throw ConfigError("synth: dominant weight range must lie in (0.25, 1]");
    if (!(heartbeat_interval_s > 0.0)) throw ConfigError("synth: heartbeat_interval_s must be > 0");
    if (pool_factor < 1) throw ConfigError("synth: pool_factor must be >= 1");
  }
};

inline nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json mix = nlohmann::ordered_json::object();
  for (const auto& [a, p] : c.archetype_mix) mix[std::string(to_string(a))] = p;
  return {{"schema", "digitwise.synth_config/v1"},
          {"n_users", c.n_users},
          {"sessions_per_user", c.sessions_per_user},
          {"n_videos", c.n_videos},
          {"video_duration_min", c.video_duration_min},
          {"video_duration_max", c.video_duration_max},
          {"seed", c.seed},
          {"archetype_mix", mix},
          {"noise_sd", c.noise_sd},
          {"dominant_weight_min", c.dominant_weight_min},
          {"dominant_weight_max", c.dominant_weight_max},
          {"zipf_exponent", c.zipf_exponent},
          {"heartbeat_interval_s", c.heartbeat_interval_s},
          {"pool_factor", c.pool_factor},
          {"start_time_ms", c.start_time_ms}};
}

/// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n_users = j.value("n_users", c.n_users);
    c.sessions_per_user = j.value("sessions_per_user", c.sessions_per_user);
    c.n_videos = j.value("n_videos", c.n_videos);
    c.video_duration_min = j.value("video_duration_min", c.video_duration_min);
    c.video_duration_max = j.value("video_duration_max", c.video_duration_max);
    c.seed = j.value("seed", c.seed);
    if (j.contains("archetype_mix")) {
      c.archetype_mix.clear();
      for (const auto& [k, v] : j.at("archetype_mix").items()) c.archetype_mix[parse_archetype(k)] = v.get<double>();
    }
    c.noise_sd = j.value("noise_sd", c.noise_sd);
    c.dominant_weight_min = j.value("dominant_weight_min", c.dominant_weight_min);
    c.dominant_weight_max = j.value("dominant_weight_max", c.dominant_weight_max);
    c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
    c.heartbeat_interval_s = j.value("heartbeat_interval_s", c.heartbeat_interval_s);
    c.pool_factor = j.value("pool_factor", c.pool_factor);
    c.start_time_ms = j.value("start_time_ms", c.start_time_ms);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

struct Video {
  std::string video_id;
  double duration = 0.0;
  std::size_t rank = 0;
};

/// Video i has popularity rank i; durations are uniform in the configured
/// range (whole seconds).
inline std::vector<Video> make_catalog(const SynthConfig& c) {
  Rng rng(derive_seed(c.seed, "catalog"));
  std::vector<Video> out;
  for (std::size_t i = 0; i < c.n_videos; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "vid-%03zu", i);
    out.push_back({id, std::round(rng.uniform(c.video_duration_min, c.video_duration_max)), i});
  }
  return out;
}

inline std::vector<GroundTruthUser> generate_population(const SynthConfig& c) {
  c.validate();
  // Largest-remainder apportionment of archetype counts.
  std::vector<std::pair<Archetype, double>> mix(c.archetype_mix.begin(), c.archetype_mix.end());
  std::vector<std::size_t> counts(mix.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    const double exact = mix[i].second * static_cast<double>(c.n_users);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t k = 0; assigned < c.n_users; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

  std::vector<Archetype> labels;
  for (std::size_t i = 0; i < mix.size(); ++i) labels.insert(labels.end(), counts[i], mix[i].first);
  Rng rng(derive_seed(c.seed, "population"));
  rng.shuffle(labels);

  std::vector<GroundTruthUser> users;
  for (std::size_t u = 0; u < c.n_users; ++u) {
    GroundTruthUser g;
    char id[32];
    std::snprintf(id, sizeof id, "user-%04zu", u);
    g.user_id = id;
    g.archetype = labels[u];
    g.noise_sd = c.noise_sd;
    const int dom = dominant_family(g.archetype);
    if (dom < 0) {
      double total = 0.0;
      for (auto& w : g.weights) total += (w = rng.uniform(0.05, 1.0));
      for (auto& w : g.weights) w /= total;
    } else {
      const double wd = rng.uniform(c.dominant_weight_min, c.dominant_weight_max);
      std::array<double, 3> rest{};
      double total = 0.0;
      for (auto& r : rest) total += (r = rng.uniform(0.2, 1.0));
      std::size_t k = 0;
      for (std::size_t f = 0; f < 4; ++f)
        g.weights[f] = static_cast<int>(f) == dom ? wd : (1.0 - wd) * rest[k++] / total;
    }
    users.push_back(g);
  }
  return users;
}

/// Penalties of one session's conditions, in kFamilies order.
struct Conditions {
  int stalls = 0;
  int rung = 4;
  std::size_t video = 0;
  double noise = 0.0;
  double engagement = 1.0;
};

inline std::array<double, 4> penalties(const Conditions& k, const std::vector<Video>& catalog) {
  const auto& v = catalog[k.video];
  const double n = static_cast<double>(catalog.size());
  return {static_cast<double>(k.stalls) / kMaxStalls, (4.0 - k.rung) / 4.0,
          std::clamp((v.duration - kDurationPenaltyMin) / (kDurationPenaltyMax - kDurationPenaltyMin), 0.0, 1.0),
          static_cast<double>(v.rank) / (n - 1.0)};
}

inline double noiseless_engagement(const GroundTruthUser& u, const std::array<double, 4>& p) {
  double s = 0.0;
  for (std::size_t f = 0; f < 4; ++f) s += u.weights[f] * p[f];
  return 1.0 - s;
}

inline double realized_engagement(double noiseless, double noise, double duration) {
  return std::clamp(noiseless + noise, kMinWatchedS / duration, 1.0);
}

struct SessionTruth {
  std::string user_id;
  std::string video_id;
  std::string session_id;
  double engagement = 0.0;
  int stalls = 0;
  int rung = 0;
  double video_duration = 0.0;
};

struct UserSessions {
  std::vector<RawEvent> events;
  std::vector<SessionTruth> truth;
};

namespace detail {

inline std::vector<double> zipf_weights(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
  return w;
}

inline int decile(double e) { return std::clamp(static_cast<int>(std::floor(e * 10.0)), 0, 9); }

inline constexpr std::array<DeviceClass, 5> kDevices{DeviceClass::phone, DeviceClass::tablet, DeviceClass::laptop,
                                                     DeviceClass::desktop, DeviceClass::tv};

/// Events for one session: startup, play, heartbeats over playback split at
/// interruptions, stall/pause/seek events inside the watched span, quit.
inline void emit_session(std::vector<RawEvent>& out, const GroundTruthUser& u, const Video& v, const std::string& sid,
                         const Conditions& k, std::int64_t start_ms, const SynthConfig& c, Rng& rng) {
  const double watched = k.engagement * v.duration;
  const double bitrate = kLadderKbps[static_cast<std::size_t>(k.rung)];
  const DeviceClass device = kDevices[rng.below(kDevices.size())];
  const std::string cdn = rng.bernoulli(0.5) ? "cdn-a" : "cdn-b";
  const double startup = std::round(rng.uniform(0.3, 3.0) * 1000.0) / 1000.0;

  struct Interruption {
    double pos;
    EventType type;
    double duration;
  };
  std::vector<Interruption> cuts;
  for (int s = 0; s < k.stalls; ++s)
    cuts.push_back({rng.uniform(0.0, watched), EventType::stall, std::round(rng.uniform(1.0, 5.0) * 1000.0) / 1000.0});
  for (std::uint64_t p = rng.below(3); p > 0; --p)
    cuts.push_back({rng.uniform(0.0, watched), EventType::pause, std::round(rng.uniform(2.0, 20.0) * 1000.0) / 1000.0});
  for (std::uint64_t s = rng.below(3); s > 0; --s) cuts.push_back({rng.uniform(0.0, watched), EventType::seek, 0.0});
  std::sort(cuts.begin(), cuts.end(), [](const auto& a, const auto& b) { return a.pos < b.pos; });

  double wall = 0.0;  // seconds since session start
  auto make = [&](EventType t) {
    RawEvent e;
    e.client_time = start_ms + static_cast<std::int64_t>(std::llround(wall * 1000.0));
    e.server_time = *e.client_time + static_cast<std::int64_t>(rng.between(20, 200));
    e.user_id = u.user_id;
    e.video_id = v.video_id;
    e.session_id = sid;
    e.event_type = t;
    e.device_class = device;
    e.cdn = cdn;
    e.video_duration = v.duration;
    return e;
  };

  auto ev = make(EventType::startup);
  ev.videotime_start = ev.videotime_end = 0.0;
  ev.event_duration = startup;
  out.push_back(ev);
  wall += startup;
  ev = make(EventType::play);
  ev.bitrate = bitrate;
  ev.videotime_start = ev.videotime_end = 0.0;
  ev.event_duration = 0.0;
  out.push_back(ev);

  double pos = 0.0;
  std::size_t next_cut = 0;
  auto play_until = [&](double target) {
    while (pos < target) {
      const double boundary = std::min(target, (std::floor(pos / c.heartbeat_interval_s) + 1) * c.heartbeat_interval_s);
      wall += boundary - pos;
      auto hb = make(EventType::heartbeat);
      hb.bitrate = bitrate;
      hb.videotime_start = pos;
      hb.videotime_end = boundary;
      hb.event_duration = boundary - pos;
      out.push_back(hb);
      pos = boundary;
    }
  };
  for (; next_cut < cuts.size(); ++next_cut) {
    const auto& cut = cuts[next_cut];
    play_until(cut.pos);
    auto e = make(cut.type);
    e.videotime_start = e.videotime_end = pos;
    e.event_duration = cut.duration;
    out.push_back(e);
    wall += cut.duration;
  }
  play_until(watched);
  ev = make(EventType::quit);
  ev.videotime_start = ev.videotime_end = watched;
  ev.event_duration = 0.0;
  out.push_back(ev);
}

}  // namespace detail

inline UserSessions generate_sessions(const GroundTruthUser& u, const SynthConfig& c,
                                      const std::vector<Video>& catalog) {
  Rng rng(derive_seed(c.seed, "sessions-" + u.user_id));
  const auto zipf = detail::zipf_weights(catalog.size(), c.zipf_exponent);

  // Candidate pool, bucketed by engagement decile.
  std::array<std::vector<Conditions>, 10> buckets;
  std::vector<Conditions> pool;
  const std::size_t pool_size = c.pool_factor * c.sessions_per_user;
  for (std::size_t i = 0; i < pool_size; ++i) {
    Conditions k;
    k.stalls = static_cast<int>(rng.below(kMaxStalls + 1));
    k.rung = static_cast<int>(rng.below(kLadderKbps.size()));
    k.video = rng.weighted_index(zipf);
    k.noise = rng.normal(0.0, u.noise_sd);
    k.engagement = realized_engagement(noiseless_engagement(u, penalties(k, catalog)), k.noise,
                                       catalog[k.video].duration);
    buckets[static_cast<std::size_t>(detail::decile(k.engagement))].push_back(k);
    pool.push_back(k);
  }

  std::vector<int> targets(c.sessions_per_user);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<int>(i % 10);
  rng.shuffle(targets);

  UserSessions out;
  std::array<std::size_t, 10> used{};
  for (auto& b : buckets) rng.shuffle(b);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto& b = buckets[static_cast<std::size_t>(targets[i])];
    Conditions k;
    if (!b.empty()) {
      auto& n = used[static_cast<std::size_t>(targets[i])];
      k = b[n % b.size()];
      ++n;
    } else {
      const double centre = (targets[i] + 0.5) / 10.0;
      k = *std::min_element(pool.begin(), pool.end(), [&](const Conditions& a, const Conditions& b2) {
        return std::fabs(a.engagement - centre) < std::fabs(b2.engagement - centre);
      });
    }
    const auto& video = catalog[k.video];
    char sid[48];
    std::snprintf(sid, sizeof sid, "%s-s%04zu", u.user_id.c_str(), i);
    const std::int64_t start = c.start_time_ms + static_cast<std::int64_t>(i) * 6 * 3'600'000LL +
                               static_cast<std::int64_t>(rng.below(3 * 3'600'000));
    detail::emit_session(out.events, u, video, sid, k, start, c, rng);
    out.truth.push_back({u.user_id, video.video_id, sid, k.engagement, k.stalls, k.rung, video.duration});
  }
  return out;
}

struct Corpus {
  std::vector<GroundTruthUser> users;
  std::vector<Video> catalog;
  std::vector<RawEvent> events;
  std::vector<SessionTruth> truth;
};

inline Corpus generate_corpus(const SynthConfig& c) {
  Corpus corpus;
  corpus.users = generate_population(c);
  corpus.catalog = make_catalog(c);
  std::vector<UserSessions> per_user(corpus.users.size());
  parallel_for(corpus.users.size(),
               [&](std::size_t i) { per_user[i] = generate_sessions(corpus.users[i], c, corpus.catalog); });
  for (auto& u : per_user) {
    corpus.events.insert(corpus.events.end(), std::make_move_iterator(u.events.begin()),
                         std::make_move_iterator(u.events.end()));
    corpus.truth.insert(corpus.truth.end(), u.truth.begin(), u.truth.end());
  }
  return corpus;
}

inline void write_ground_truth(std::ostream& os, const std::vector<GroundTruthUser>& users) {
  write_csv_row(os, {"user_id", "archetype", "w_stall", "w_bitrate", "w_duration", "w_popularity", "noise_sd"});
  for (const auto& u : users) {
    std::vector<std::string> row{u.user_id, std::string(to_string(u.archetype))};
    for (double w : u.weights) row.push_back(format_double(w));
    row.push_back(format_double(u.noise_sd));
    write_csv_row(os, row);
  }
}

inline std::vector<GroundTruthUser> read_ground_truth(std::istream& is) {
  CsvReader reader(is);
  std::vector<std::string> f;
  bool bad = false;
  if (!reader.next(f, bad) || f.size() != 7 || f[0] != "user_id") throw SchemaError("ground truth: bad header");
  std::vector<GroundTruthUser> out;
  while (reader.next(f, bad)) {
    if (f.size() == 1 && f[0].empty()) continue;
    if (bad || f.size() != 7) throw SchemaError("ground truth: malformed row");
    GroundTruthUser u;
    u.user_id = f[0];
    u.archetype = parse_archetype(f[1]);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto w = parse_double(f[2 + i]);
      if (!w) throw SchemaError("ground truth: bad weight");
      u.weights[i] = *w;
    }
    const auto sd = parse_double(f[6]);
    if (!sd) throw SchemaError("ground truth: bad noise_sd");
    u.noise_sd = *sd;
    out.push_back(u);
  }
  return out;
}

inline void write_session_truth(std::ostream& os, const std::vector<SessionTruth>& truth) {
  write_csv_row(os, {"user_id", "video_id", "session_id", "engagement", "stall_count", "rung", "video_duration"});
  for (const auto& t : truth)
    write_csv_row(os, {t.user_id, t.video_id, t.session_id, format_double(t.engagement), std::to_string(t.stalls),
                       std::to_string(t.rung), format_double(t.video_duration)});
}

/// events.csv, ground_truth.csv, session_truth.csv and config.json.
inline void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const SynthConfig& c) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot write '" + (dir / name).string() + "'");
    return out;
  };
  auto ev = open("events.csv");
  write_event_log(ev, corpus.events, EventFormat::csv);
  auto gt = open("ground_truth.csv");
  write_ground_truth(gt, corpus.users);
  auto st = open("session_truth.csv");
  write_session_truth(st, corpus.truth);
  auto cfg = open("config.json");
  cfg << to_json(c).dump(2) << '\n';
  if (!ev || !gt || !st || !cfg) throw IoError("write failure in '" + dir.string() + "'");
}

}  // namespace digitwise::synth
