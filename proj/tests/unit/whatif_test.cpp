#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "digitwise/core/rng.hpp"
#include "digitwise/learner/gbdt.hpp"
#include "digitwise/pipeline/run.hpp"
#include "digitwise/whatif/engine.hpp"
#include "digitwise/whatif/service.hpp"
#include "digitwise/whatif/simulator.hpp"
#include "digitwise/whatif/traces.hpp"

using namespace digitwise;
using namespace digitwise::whatif;

namespace {

BandwidthTrace random_trace(Rng& rng) {
  BandwidthTrace t;
  t.name = "random";
  const auto n = 1 + rng.below(12);
  for (std::uint64_t i = 0; i < n; ++i) t.steps.push_back({rng.uniform(0.5, 20.0), rng.uniform(150.0, 12000.0)});
  return t;
}

PlayerConfig random_player(Rng& rng) {
  PlayerConfig p;
  p.segment_s = rng.bernoulli(0.5) ? 1.0 : 2.0;
  p.abr = static_cast<AbrPolicy>(rng.below(3));
  p.video_duration_s = rng.uniform(20.0, 240.0);
  return p;
}

std::set<double> ladder_rates(const PlayerConfig& p) {
  std::set<double> out;
  for (const auto& r : p.ladder) out.insert(r.bitrate_kbps);
  return out;
}

/// Unified model over {stall_count, bitrate_mean} plus weight columns, fit
/// on records where engagement falls with stalls (weighted by the user's
/// stall weight) and with low bitrate.
struct EngineFixture {
  std::vector<std::string> features{"stall_count", "bitrate_mean"};
  twins::SensitivityDb db;
  learner::TreeEnsemble model;

  EngineFixture() {
    db.features = features;
    db.users["stally"] = {"stally", {{"stall_count", 0.9}, {"bitrate_mean", 0.1}}, false};
    db.users["picky"] = {"picky", {{"stall_count", 0.1}, {"bitrate_mean", 0.9}}, false};
    db.users["flat"] = {"flat", {{"stall_count", 0.5}, {"bitrate_mean", 0.5}}, true};
    Rng rng(3);
    std::vector<pipeline::SessionRecord> rows;
    for (int i = 0; i < 900; ++i) {
      pipeline::SessionRecord r;
      r.user_id = i % 3 == 0 ? "stally" : i % 3 == 1 ? "picky" : "flat";
      r.session_id = "s" + std::to_string(i);
      r.stall_count = static_cast<double>(rng.below(12));
      r.bitrate_mean = rng.uniform(400, 6400);
      const auto& w = db.users.at(r.user_id).weights;
      r.engagement = 1.0 - w.at("stall_count") * std::min(1.0, r.stall_count / 8.0) -
                     w.at("bitrate_mean") * (1.0 - r.bitrate_mean / 6400.0);
      rows.push_back(r);
    }
    model = learner::fit_gbdt(engagement::concatenate(rows, features, db), {60, 3, 0.2, 5, 1.0, 1.0}, 1);
  }

  WhatIfEngine engine() const { return WhatIfEngine(model, db, TraceLibrary::presets()); }
};

const EngineFixture& fixture() {
  static const EngineFixture f;
  return f;
}

WhatIfScenario scenario(const std::string& label, const std::string& trace, std::vector<std::string> users) {
  WhatIfScenario s;
  s.label = label;
  s.trace = trace;
  s.video_duration_s = 120.0;
  s.n_sessions = 4;
  s.cohort.users = std::move(users);
  s.cohort.random_k = 0;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Traces

TEST(Traces, CsvRoundTrip) {
  const auto t = preset_trace("lte-like");
  std::stringstream ss;
  write_trace_csv(ss, t);
  const auto back = read_trace_csv(ss, "lte-like");
  ASSERT_EQ(back.steps.size(), t.steps.size());
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].duration_s, t.steps[i].duration_s);
    EXPECT_EQ(back.steps[i].bandwidth_kbps, t.steps[i].bandwidth_kbps);
  }
}

TEST(Traces, RejectsBadFiles) {
  std::istringstream no_header("1,2\n");
  EXPECT_THROW(read_trace_csv(no_header, "x"), SchemaError);
  std::istringstream zero("duration_s,bandwidth_kbps\n1,0\n");
  EXPECT_THROW(read_trace_csv(zero, "x"), ConfigError);
  std::istringstream junk("duration_s,bandwidth_kbps\n1,fast\n");
  EXPECT_THROW(read_trace_csv(junk, "x"), SchemaError);
  std::istringstream empty("duration_s,bandwidth_kbps\n");
  EXPECT_THROW(read_trace_csv(empty, "x"), ConfigError);
}

TEST(Traces, PresetsAndCascadeShape) {
  const auto lib = TraceLibrary::presets();
  EXPECT_EQ(lib.names().size(), 6u);
  EXPECT_EQ(lib.at("constant-16").steps.front().bandwidth_kbps, 16000.0);
  EXPECT_EQ(lib.at("constant-4").steps.front().bandwidth_kbps, 4000.0);
  for (const char* name : {"cascade-5", "cascade-20"}) {
    const auto& t = lib.at(name);
    const double plateau = std::string(name) == "cascade-5" ? 5.0 : 20.0;
    for (const auto& s : t.steps) EXPECT_EQ(s.duration_s, plateau);
    for (std::size_t i = 1; i < t.steps.size(); ++i) EXPECT_NE(t.steps[i].bandwidth_kbps, t.steps[i - 1].bandwidth_kbps);
  }
  try {
    lib.at("cascade-99");
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    EXPECT_NE(std::string(e.what()).find("cascade-99"), std::string::npos);
  }
}

TEST(Traces, BundledFilesMatchTheGenerators) {
  const auto lib = TraceLibrary::from_directory(std::filesystem::path(DIGITWISE_DATA_DIR) / "traces");
  for (const auto& name : preset_trace_names()) {
    const auto want = preset_trace(name);
    const auto& got = lib.at(name);
    ASSERT_EQ(got.steps.size(), want.steps.size()) << name;
    for (std::size_t i = 0; i < want.steps.size(); ++i) {
      EXPECT_EQ(got.steps[i].duration_s, want.steps[i].duration_s) << name;
      EXPECT_EQ(got.steps[i].bandwidth_kbps, want.steps[i].bandwidth_kbps) << name;
    }
  }
}

// ---------------------------------------------------------------------------
// Simulator

TEST(Simulator, AmpleBandwidthNeverStallsAndReachesTopRung) {
  for (auto abr : {AbrPolicy::throughput, AbrPolicy::buffer, AbrPolicy::hybrid}) {
    PlayerConfig p;
    p.abr = abr;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = simulate_session(p, preset_trace("constant-16"), seed);
      EXPECT_EQ(r.stall_count, 0u);
      EXPECT_EQ(r.stall_time, 0.0);
      EXPECT_EQ(r.segments.back().rung, p.ladder.size() - 1);
    }
  }
  PlayerConfig p;
  const auto r = simulate_session(p, preset_trace("constant-16"), 1);
  for (std::size_t k = 1; k < r.segments.size(); ++k) EXPECT_EQ(r.segments[k].rung, 4u) << k;
}

TEST(Simulator, BandwidthBelowHalfTheLowestRungStallsLongerThanItPlays) {
  for (auto abr : {AbrPolicy::throughput, AbrPolicy::buffer, AbrPolicy::hybrid}) {
    PlayerConfig p;
    p.abr = abr;
    p.video_duration_s = 120.0;
    // 180 kbps with +-10% jitter stays below 200 = 400 / 2.
    const auto r = simulate_session(p, constant_trace("slow", 180.0), 4);
    EXPECT_GE(r.stall_time, r.play_time);
    EXPECT_GT(r.stall_count, 0u);
  }
}

TEST(Simulator, SameSeedSameEvents) {
  PlayerConfig p;
  p.abr = AbrPolicy::hybrid;
  auto text = [&](std::uint64_t seed) {
    std::ostringstream os;
    write_event_log(os, simulate_session(p, preset_trace("lte-like"), seed).events, EventFormat::csv);
    return os.str();
  };
  EXPECT_EQ(text(7), text(7));
  EXPECT_NE(text(7), text(8));
}

TEST(Simulator, WallTimeIsStartupPlusPlaybackPlusStalls) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = random_player(rng);
    const auto r = simulate_session(p, random_trace(rng), rng.below(1000));
    EXPECT_NEAR(r.wall_time, r.startup_delay + r.play_time + r.stall_time, 1e-6 * r.wall_time);
    EXPECT_EQ(r.play_time, p.video_duration_s);
  }
}

TEST(Simulator, BitrateStaysOnTheLadderAndBufferUnderCap) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_player(rng);
    const auto rates = ladder_rates(p);
    const auto r = simulate_session(p, random_trace(rng), rng.below(1000));
    for (const auto& e : r.events)
      if (!std::isnan(e.bitrate)) EXPECT_TRUE(rates.count(e.bitrate)) << e.bitrate;
    double prev_end = 0.0;
    for (std::size_t k = 0; k < r.segments.size(); ++k) {
      const auto& s = r.segments[k];
      EXPECT_GE(s.download_start, prev_end - 1e-9);
      prev_end = s.download_end;
      if (k < static_cast<std::size_t>(p.startup_segments)) continue;
      // Content already downloaded minus content played at download start.
      double played = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const auto& q = r.segments[j];
        played += std::clamp(s.download_start - q.play_start, 0.0, q.length);
      }
      EXPECT_LE(s.content_start - played + s.length, p.max_buffer_s + 1e-6);
    }
    if (p.abr == AbrPolicy::hybrid)
      for (std::size_t k = 1; k < r.segments.size(); ++k)
        EXPECT_LE(r.segments[k].rung, r.segments[k - 1].rung + 1);
  }
}

TEST(Simulator, EventsFeedThePipelineUnchanged) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_player(rng);
    const auto r = simulate_session(p, random_trace(rng), rng.below(1000));
    const auto sessions = group_sessions(r.events);
    ASSERT_EQ(sessions.size(), 1u);
    const auto& [key, events] = *sessions.begin();
    ASSERT_EQ(events.size(), r.events.size());
    const auto rec = pipeline::compress(pipeline::engineer(key, events, {}));
    EXPECT_NEAR(rec.play_time, p.video_duration_s, 1e-9);
    EXPECT_DOUBLE_EQ(rec.engagement, 1.0);
    EXPECT_EQ(rec.stall_count, static_cast<double>(r.stall_count));
    EXPECT_EQ(rec.switch_count, static_cast<double>(r.switch_count));
    EXPECT_EQ(rec.startup_delay, r.startup_delay);
  }
}

TEST(Simulator, HalvingConstantBandwidthNeverReducesStallTime) {
  Rng rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    auto p = random_player(rng);
    p.jitter = 0.0;
    const auto t = constant_trace("c", rng.uniform(150.0, 12000.0), rng.uniform(1.0, 30.0));
    const auto seed = rng.below(1000);
    const auto full = simulate_session(p, t, seed);
    const auto half = simulate_session(p, t.scaled(0.5), seed);
    EXPECT_GE(half.stall_time, full.stall_time - 1e-9) << "trial " << trial << " abr " << to_string(p.abr);
  }
}

TEST(Simulator, HalvingBandwidthNeverReducesInterruptionAtFixedBitrate) {
  Rng rng(15);
  for (int trial = 0; trial < 1000; ++trial) {
    auto p = random_player(rng);
    p.ladder = {{rng.uniform(300.0, 5000.0), "only"}};
    const auto t = random_trace(rng);
    const auto seed = rng.below(1000);
    const auto full = simulate_session(p, t, seed);
    const auto half = simulate_session(p, t.scaled(0.5), seed);
    EXPECT_GE(half.stall_time + half.startup_delay, full.stall_time + full.startup_delay - 1e-9) << "trial " << trial;
    EXPECT_GE(half.wall_time, full.wall_time - 1e-9) << "trial " << trial;
  }
}

// On time-varying traces the rung choices and the schedule both move with
// the bandwidth, so the per-session property has counterexamples.
TEST(Simulator, HalvingVaryingBandwidthCanReduceStallsUnderAdaptation) {
  Rng rng(14);
  std::size_t counterexamples = 0;
  double stall_full = 0.0, stall_half = 0.0;
  for (int trial = 0; trial < 400; ++trial) {
    const auto p = random_player(rng);
    const auto t = random_trace(rng);
    const auto seed = rng.below(1000);
    const auto full = simulate_session(p, t, seed);
    const auto half = simulate_session(p, t.scaled(0.5), seed);
    counterexamples += half.stall_time < full.stall_time - 1e-9;
    stall_full += full.stall_time;
    stall_half += half.stall_time;
  }
  EXPECT_GT(counterexamples, 0u);
  EXPECT_GT(stall_half, stall_full);
}

TEST(Simulator, RejectsInvalidConfig) {
  PlayerConfig p;
  p.ladder = {{800, "a"}, {400, "b"}};
  EXPECT_THROW(simulate_session(p, preset_trace("constant-4"), 1), ConfigError);
  p = {};
  p.max_buffer_s = 5.0;
  EXPECT_THROW(simulate_session(p, preset_trace("constant-4"), 1), ConfigError);
  EXPECT_THROW(parse_abr_policy("bola"), ConfigError);
  EXPECT_EQ(parse_abr_policy("hybrid-low-latency"), AbrPolicy::hybrid);
}

// ---------------------------------------------------------------------------
// Engine

TEST(WhatIfEngine, IdenticalScenariosHaveZeroDeltas) {
  const auto engine = fixture().engine();
  auto a = scenario("a", "cascade-5", {"stally", "picky"});
  auto b = a;
  b.label = "b";
  const auto r = engine.run({a, b});
  ASSERT_EQ(r.deltas.size(), 2u);
  for (const auto& d : r.deltas) EXPECT_EQ(d.delta, 0.0);
  EXPECT_TRUE(r.varied.empty());
}

TEST(WhatIfEngine, AggregatesMatchRecomputationFromPredictions) {
  const auto engine = fixture().engine();
  auto s = scenario("x", "lte-like", {"stally", "picky", "flat"});
  s.n_sessions = 7;
  const auto o = engine.run({s}).outcomes.front();
  ASSERT_EQ(o.predictions.size(), 21u);
  std::vector<double> v;
  for (const auto& p : o.predictions) v.push_back(p.engagement);
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / 21.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(o.aggregates.mean, mean, 1e-12);
  EXPECT_NEAR(o.aggregates.std, std::sqrt(ss / 21.0), 1e-12);
  EXPECT_EQ(o.aggregates.min, v.front());
  EXPECT_EQ(o.aggregates.max, v.back());
  EXPECT_EQ(o.aggregates.median, v[10]);
  EXPECT_LE(o.aggregates.min, o.aggregates.median);
  EXPECT_LE(o.aggregates.median, o.aggregates.max);
  for (double x : v) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(WhatIfEngine, DeltasCoverEveryOrderedPairAndAreAntisymmetric) {
  const auto engine = fixture().engine();
  const auto r = engine.run({scenario("smooth", "constant-16", {"stally"}),
                             scenario("slow", "constant-4", {"stally"}), scenario("lte", "lte-like", {"stally"})});
  ASSERT_EQ(r.deltas.size(), 6u);
  std::map<std::pair<std::string, std::string>, double> d;
  for (const auto& x : r.deltas) d[{x.from, x.to}] = x.delta;
  for (const auto& [k, v] : d) EXPECT_EQ(v, -d.at({k.second, k.first}));
  std::map<std::string, double> mean;
  for (const auto& o : r.outcomes) mean[o.scenario.label] = o.aggregates.mean;
  EXPECT_EQ(d.at({"smooth", "lte"}), mean["smooth"] - mean["lte"]);
  EXPECT_EQ(r.varied, std::vector<std::string>{"trace"});
}

TEST(WhatIfEngine, StallSensitiveUserPrefersTheSmoothTrace) {
  const auto engine = fixture().engine();
  auto smooth = scenario("smooth", "constant-16", {"stally"});
  auto rough = scenario("rough", "constant-16", {"stally"});
  rough.trace = "lte-like";
  smooth.n_sessions = rough.n_sessions = 10;
  const auto r = engine.run({smooth, rough});
  EXPECT_GT(r.outcomes[1].mean_stall_time, 0.0);
  EXPECT_GT(r.deltas.front().delta, 0.0);
}

TEST(WhatIfEngine, UnknownTraceAndUserAreNamed) {
  const auto engine = fixture().engine();
  try {
    engine.run({scenario("a", "cascade-99", {"stally"})});
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    EXPECT_NE(std::string(e.what()).find("cascade-99"), std::string::npos);
  }
  try {
    engine.run({scenario("a", "constant-4", {"stally", "ghost"})});
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(WhatIfEngine, RandomCohortIsSeededAndBounded) {
  const auto engine = fixture().engine();
  WhatIfScenario s;
  s.cohort = {{}, 2};
  const auto a = engine.resolve_cohort(s);
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(engine.resolve_cohort(s), a);
  s.cohort.random_k = 4;
  EXPECT_THROW(engine.resolve_cohort(s), CapacityError);
}

TEST(WhatIfEngine, ModelAndDatabaseMustAgree) {
  auto db = fixture().db;
  db.features = {"stall_count"};
  EXPECT_THROW(WhatIfEngine(fixture().model, db, TraceLibrary::presets()), ConfigError);
}

TEST(WhatIfEngine, TableHasOneRowPerScenario) {
  const auto engine = fixture().engine();
  const auto r = engine.run({scenario("a", "constant-16", {"flat"}), scenario("b", "cascade-20", {"flat"})});
  std::ostringstream os;
  write_table(os, r);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(text.substr(0, text.find('\n')), "label,segment_size,abr,trace,mean,std,min,median,max");
}

TEST(WhatIfRequest, FieldLevelErrors) {
  auto field_of = [](const std::string& body) {
    try {
      parse_request(nlohmann::json::parse(body));
    } catch (const FieldError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of(R"({"scenarios":[{"segment_size":3}]})"), "scenarios[0].segment_size");
  EXPECT_EQ(field_of(R"({"scenarios":[{},{"abr":"bola"}]})"), "scenarios[1].abr");
  EXPECT_EQ(field_of(R"({"scenarios":[{"colour":"red"}]})"), "scenarios[0].colour");
  EXPECT_EQ(field_of(R"({"scenarios":[{"cohort":"random:0"}]})"), "scenarios[0].cohort");
  EXPECT_EQ(field_of(R"({"scenarios":[{"n_sessions":0}]})"), "scenarios[0].n_sessions");
  EXPECT_EQ(field_of(R"({"scenarios":[{"ladder":[{"bitrate_kbps":800},{"bitrate_kbps":400}]}]})"),
            "scenarios[0].ladder");
  EXPECT_EQ(field_of(R"({"scenarios":[]})"), "scenarios");
  EXPECT_EQ(field_of(R"({"defaults":{"trace":7},"scenarios":[{}]})"), "defaults.trace");
  EXPECT_EQ(field_of(R"([{"label":"a"},{"label":"a"}])"), "scenarios[1].label");
}

TEST(WhatIfRequest, DefaultsApplyAndLabelsFallBackToPosition) {
  const auto s = parse_request(nlohmann::json::parse(
      R"({"defaults":{"trace":"cascade-5","n_sessions":3,"cohort":["a"]},"scenarios":[{"abr":"buffer"},{"label":"x","trace":"lte-like"}]})"));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].label, "scenario-1");
  EXPECT_EQ(s[0].trace, "cascade-5");
  EXPECT_EQ(s[0].abr, AbrPolicy::buffer);
  EXPECT_EQ(s[1].trace, "lte-like");
  EXPECT_EQ(s[1].n_sessions, 3u);
  EXPECT_EQ(s[1].cohort.users, std::vector<std::string>{"a"});
}

TEST(WhatIfRequest, BundledTableScenarioFileParses) {
  std::ifstream in(std::filesystem::path(DIGITWISE_DATA_DIR) / "scenarios" / "scenario_grid.json");
  ASSERT_TRUE(in.good());
  const auto s = parse_request(nlohmann::json::parse(in));
  EXPECT_EQ(s.size(), 17u);
  const auto lib = TraceLibrary::presets();
  for (const auto& x : s) EXPECT_TRUE(lib.contains(x.trace)) << x.trace;
}

// ---------------------------------------------------------------------------
// Service

namespace {

ServiceContext service_context(std::size_t cap = 50'000) {
  return ServiceContext{fixture().engine(), std::nullopt, ServiceOptions{cap}};
}

}  // namespace

TEST(Service, HealthUsersFeaturesTraces) {
  const auto ctx = service_context();
  const auto h = handle(ctx, "GET", "/health");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body.at("status"), "ok");
  const auto u = handle(ctx, "GET", "/users");
  EXPECT_EQ(u.body.at("users").size(), 3u);
  EXPECT_EQ(handle(ctx, "GET", "/features").body.at("selected"), nlohmann::json(fixture().features));
  EXPECT_EQ(handle(ctx, "GET", "/traces").body.at("traces").size(), 6u);
  const auto s = handle(ctx, "GET", "/users/stally/sensitivities");
  EXPECT_EQ(s.status, 200);
  EXPECT_EQ(s.body.at("weights").at("stall_count"), 0.9);
  for (const auto& r : {h, u, s}) EXPECT_TRUE(r.body.contains("schema"));
}

TEST(Service, ErrorStatuses) {
  const auto ctx = service_context(10);
  EXPECT_EQ(handle(ctx, "GET", "/users/ghost/sensitivities").status, 404);
  EXPECT_EQ(handle(ctx, "GET", "/nowhere").status, 404);
  const auto bad = handle(ctx, "POST", "/whatif", "{not json");
  EXPECT_EQ(bad.status, 400);
  EXPECT_EQ(bad.body.at("field"), "body");
  const auto field = handle(ctx, "POST", "/whatif", R"({"scenarios":[{"segment_size":5}]})");
  EXPECT_EQ(field.status, 400);
  EXPECT_EQ(field.body.at("field"), "scenarios[0].segment_size");
  const auto trace =
      handle(ctx, "POST", "/whatif", R"({"scenarios":[{"trace":"cascade-99","cohort":["flat"],"n_sessions":1}]})");
  EXPECT_EQ(trace.status, 404);
  EXPECT_NE(trace.body.at("error").get<std::string>().find("cascade-99"), std::string::npos);
  const auto big = handle(ctx, "POST", "/whatif", R"({"scenarios":[{"cohort":["flat","picky"],"n_sessions":6}]})");
  EXPECT_EQ(big.status, 422);
  for (const auto& r : {bad, field, trace, big}) EXPECT_EQ(r.body.at("schema"), "digitwise.error/v1");
}

TEST(Service, HttpRoundTrip) {
  const auto ctx = service_context();
  httplib::Server server;
  mount(server, ctx);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(nlohmann::json::parse(health->body).at("status"), "ok");

  const std::string body =
      R"({"defaults":{"cohort":["stally","picky"],"n_sessions":2,"video_duration":60},)"
      R"("scenarios":[{"label":"a"},{"label":"b"}]})";
  const auto res = client.Post("/whatif", body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j.at("schema"), "digitwise.whatif_result/v1");
  for (const auto& d : j.at("deltas")) EXPECT_EQ(d.at("delta"), 0.0);
  EXPECT_EQ(j.at("scenarios")[0].at("predictions").size(), 4u);

  const auto missing = client.Get("/users/ghost/sensitivities");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  const auto nowhere = client.Get("/nowhere");
  ASSERT_TRUE(nowhere);
  EXPECT_EQ(nowhere->status, 404);
  EXPECT_EQ(nlohmann::json::parse(nowhere->body).at("schema"), "digitwise.error/v1");
  server.stop();
  worker.join();
}
