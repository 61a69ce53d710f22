#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "digitwise/core/rng.hpp"
#include "digitwise/learner/stats.hpp"
#include "digitwise/pipeline/clean.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/engineer.hpp"
#include "digitwise/pipeline/feature_select.hpp"
#include "digitwise/pipeline/records_io.hpp"
#include "digitwise/pipeline/run.hpp"
#include "digitwise/pipeline/split.hpp"
#include "support/fixtures.hpp"

namespace dp = digitwise::pipeline;
namespace dl = digitwise::learner;
using digitwise::EventType;
using digitwise::kMissing;
using digitwise::RawEvent;
using digitwise::Rng;
using digitwise::Sessions;
using digitwise::testing::add_user;
using digitwise::testing::make_session;
using digitwise::testing::SessionSpec;

namespace {

dp::EnrichedSession enrich(const std::vector<RawEvent>& ev) {
  return dp::engineer(digitwise::key_of(ev.front()), ev, {});
}

// A session whose stalls sit at the given positions with the given durations.
std::vector<RawEvent> stalled_session(const std::vector<double>& positions, const std::vector<double>& durations,
                                      double watched = 600.0) {
  SessionSpec s;
  s.video_duration = 600.0;
  s.watched = watched;
  auto ev = make_session(s);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    RawEvent st = ev[1];
    st.event_type = EventType::stall;
    st.videotime_start = positions[i];
    st.videotime_end = positions[i];
    st.event_duration = durations[i];
    st.bitrate = kMissing;
    ev.push_back(st);
  }
  return ev;
}

}  // namespace

// --- skewness ----------------------------------------------------------------

TEST(Skewness, BiasedFisherPearsonByHand) {
  // {1,1,1,9}: mean 3, m2 = (3*4 + 36)/4 = 12, m3 = (3*(-8) + 216)/4 = 48.
  const std::vector<double> v{1, 1, 1, 9};
  EXPECT_NEAR(*dl::skewness(v), 48.0 / std::pow(12.0, 1.5), 1e-15);
  EXPECT_NEAR(*dl::skewness(v), 1.1547005, 1e-7);
  const std::vector<double> r{-9, -1, -1, -1};
  EXPECT_NEAR(*dl::skewness(r), -*dl::skewness(v), 1e-15);
  const std::vector<double> sym{1, 2, 3};
  EXPECT_NEAR(*dl::skewness(sym), 0.0, 1e-15);
}

TEST(Skewness, NullForShortOrConstantInput) {
  EXPECT_FALSE(dl::skewness(std::vector<double>{1, 2}).has_value());
  EXPECT_FALSE(dl::skewness(std::vector<double>{4, 4, 4}).has_value());
}

TEST(PositionalSkewness, ClosedFormMatchesNumericalMixture) {
  // Midpoint-rule integration of the uniform component as an independent check.
  const std::vector<double> pos{10, 40, 75, 300}, w{2, 1, 5, 0.5};
  const double span = 480.0;
  const int grid = 400000;
  double wsum = 0, mean = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    wsum += w[i];
    mean += 0.5 * w[i] * pos[i];
  }
  mean = mean / wsum + 0.5 * span / 2.0;
  double m2 = 0, m3 = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double d = pos[i] - mean;
    m2 += 0.5 * w[i] / wsum * d * d;
    m3 += 0.5 * w[i] / wsum * d * d * d;
  }
  for (int k = 0; k < grid; ++k) {
    const double d = (k + 0.5) * span / grid - mean;
    m2 += 0.5 * d * d / grid;
    m3 += 0.5 * d * d * d / grid;
  }
  EXPECT_NEAR(*dp::positional_skewness(pos, w, span), m3 / std::pow(m2, 1.5), 1e-8);
}

TEST(PositionalSkewness, EarlyPositiveLateNegativeSymmetricZero) {
  const auto early = dp::compress(enrich(stalled_session({5, 20, 40}, {4, 2, 3})));
  const auto late = dp::compress(enrich(stalled_session({560, 580, 595}, {4, 2, 3})));
  const auto sym = dp::compress(enrich(stalled_session({100, 300, 500}, {2, 5, 2})));
  EXPECT_GT(early.stall_duration_skew, 0.0);
  EXPECT_LT(late.stall_duration_skew, 0.0);
  EXPECT_NEAR(sym.stall_duration_skew, 0.0, 1e-12);
}

TEST(PositionalSkewness, SignFollowsThirdOfPlaybackProperty) {
  Rng rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const double span = rng.uniform(30, 3000);
    const std::size_t n = 3 + rng.below(10);
    std::vector<double> early, late, w;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = rng.uniform(0, span / 3.0);
      early.push_back(p);
      late.push_back(span - p);
      w.push_back(rng.bernoulli(0.1) ? 0.0 : rng.uniform(0.1, 30));
    }
    EXPECT_GT(*dp::positional_skewness(early, w, span), 0.0);
    EXPECT_LT(*dp::positional_skewness(late, w, span), 0.0);
  }
}

TEST(PositionalSkewness, NullBelowThreeEvents) {
  const auto r = dp::compress(enrich(stalled_session({5, 20}, {4, 2})));
  EXPECT_TRUE(std::isnan(r.stall_duration_skew));
  EXPECT_EQ(r.stall_count, 2.0);
}

// --- engineering ---------------------------------------------------------------

TEST(Engineer, HourOfDayUtc) {
  // 2023-11-14 13:45:00 UTC
  EXPECT_EQ(dp::hour_of_day(1'699'969'500'000), 13);
  EXPECT_EQ(dp::hour_of_day(0), 0);
  EXPECT_EQ(dp::hour_of_day(-1), 23);
}

TEST(Engineer, PopularityAndScreenSize) {
  dp::PopularityIndex idx{{"a", 1}};
  EXPECT_NEAR(dp::popularity_score(idx, "a"), 0.693147, 1e-6);
  EXPECT_EQ(dp::popularity_score(idx, "missing"), 0.0);
  EXPECT_EQ(dp::screen_size(digitwise::DeviceClass::phone), 1);
  EXPECT_EQ(dp::screen_size(digitwise::DeviceClass::console), 5);
  EXPECT_TRUE(std::isnan(dp::screen_size(digitwise::DeviceClass::unknown)));
}

TEST(Engineer, BitrateDeltasOnSwitches) {
  SessionSpec s;
  s.bitrate = 800;
  auto ev = make_session(s);
  ev.resize(3);
  RawEvent a = ev[2], b = ev[2];
  a.event_type = b.event_type = EventType::bitrate_switch;
  a.bitrate = 1600;
  b.bitrate = 400;
  ev.push_back(a);
  ev.push_back(b);
  const auto en = enrich(ev);
  EXPECT_EQ(en.events[3].bitrate_delta, 800.0);
  EXPECT_EQ(en.events[4].bitrate_delta, -1200.0);
  EXPECT_EQ(en.events[3].latency_ms, 40.0);
}

TEST(Engineer, SwitchWithoutPriorBitrateHasNullDelta) {
  auto ev = make_session({});
  RawEvent sw = ev[0];
  sw.event_type = EventType::bitrate_switch;
  sw.bitrate = 800;
  ev.insert(ev.begin(), sw);
  EXPECT_TRUE(std::isnan(enrich(ev).events[0].bitrate_delta));
}

TEST(Engagement, Examples) {
  std::vector<RawEvent> ev(3);
  ev[0].videotime_end = 120;
  ev[1].videotime_end = 300;
  ev[2].videotime_end = 270;
  EXPECT_DOUBLE_EQ(*dp::compute_engagement(ev, 600), 0.5);
  ev[1].videotime_end = 450;
  EXPECT_DOUBLE_EQ(*dp::compute_engagement(ev, 900), 0.5);
  ev[1].videotime_end = 900;
  EXPECT_DOUBLE_EQ(*dp::compute_engagement(ev, 900), 1.0);
  EXPECT_FALSE(dp::compute_engagement(ev, kMissing).has_value());
  EXPECT_FALSE(dp::compute_engagement(std::vector<RawEvent>(2), 600).has_value());
}

// --- compression ---------------------------------------------------------------

TEST(Compress, AggregatesOfPlainSession) {
  SessionSpec s;
  s.watched = 95;
  s.startup = 2.5;
  const auto r = dp::compress(enrich(make_session(s)));
  EXPECT_EQ(r.stall_count, 0.0);
  EXPECT_TRUE(std::isnan(r.stall_duration_mean));
  EXPECT_EQ(r.startup_delay, 2.5);
  EXPECT_DOUBLE_EQ(r.play_time, 95.0);
  EXPECT_DOUBLE_EQ(r.engagement, 95.0 / 600.0);
  EXPECT_EQ(r.bitrate_mean, 1600.0);
  EXPECT_EQ(r.bitrate_std, 0.0);
  EXPECT_EQ(r.screen_size, 1.0);
  EXPECT_EQ(r.hour_of_day, 22.0);
  EXPECT_EQ(r.latency_mean, 40.0);
  EXPECT_EQ(r.switch_count, 0.0);
}

TEST(Compress, StallStatistics) {
  const auto r = dp::compress(enrich(stalled_session({50, 100, 150}, {1, 2, 6})));
  EXPECT_EQ(r.stall_count, 3.0);
  EXPECT_DOUBLE_EQ(r.stall_duration_mean, 3.0);
  EXPECT_NEAR(r.stall_duration_std, std::sqrt(14.0 / 3.0), 1e-12);
}

TEST(Horizon, UnboundedIsIdentityAndLabelIsKept) {
  const auto en = enrich(make_session({}));
  const auto full = dp::compress(en);
  const auto inf = dp::compress(dp::truncate_horizon(en, std::numeric_limits<double>::infinity()));
  EXPECT_EQ(full.play_time, inf.play_time);
  const auto t10 = dp::truncate_horizon(en, 10.0);
  // startup at 0, play at 1 s; first heartbeat lands at 11 s.
  ASSERT_EQ(t10.events.size(), 2u);
  EXPECT_EQ(dp::compress(t10).engagement, full.engagement);
}

// --- cleaning ----------------------------------------------------------------------

TEST(Clean, SessionRuleExamples) {
  Sessions in;
  add_user(in, "u", 60, 6);
  SessionSpec s;
  s.user = "u";
  s.video = "v0";
  s.session = "short";
  s.watched = 9;
  in[{"u", "v0", "short"}] = make_session(s);
  s.session = "long";
  s.watched = 300;
  auto ev = make_session(s);
  ev.back().client_time = *ev.front().client_time + 25LL * 3600 * 1000;
  in[{"u", "v0", "long"}] = ev;
  const auto r = dp::clean(in);
  EXPECT_EQ(r.report.sessions_removed_by_rule.at("R8"), 1u);
  EXPECT_EQ(r.report.sessions_removed_by_rule.at("R9"), 1u);
  EXPECT_EQ(r.sessions.size(), 60u);
}

TEST(Clean, UserWith49SessionsRemoved) {
  Sessions in;
  add_user(in, "few", 49, 6);
  add_user(in, "ok", 50, 5);
  const auto r = dp::clean(in);
  EXPECT_EQ(r.report.sessions_removed_by_rule.at("R3"), 49u);
  EXPECT_EQ(r.report.users_removed_by_rule.at("R3"), 1u);
  EXPECT_EQ(r.report.users_out, 1u);
}

TEST(Clean, DurationStandardizedToVideoMax) {
  Sessions in;
  add_user(in, "u", 60, 6);
  auto& first = in.begin()->second;
  const std::string video = in.begin()->first.video_id;
  for (auto& e : first) e.video_duration = 900;
  const auto r = dp::clean(in);
  for (const auto& [k, ev] : r.sessions)
    if (k.video_id == video)
      for (const auto& e : ev) EXPECT_EQ(e.video_duration, 900.0);
}

TEST(Clean, UserRulesReachFixpointAfterSessionRemovals) {
  Sessions in;
  add_user(in, "edge", 50, 5);
  // One session of the 50 fails R6, which drops the user below 50.
  auto& ev = in.begin()->second;
  ev[2].event_type = EventType::error;
  ev[2].error_code = "E42";
  const auto r = dp::clean(in);
  EXPECT_EQ(r.report.sessions_removed_by_rule.at("R6"), 1u);
  EXPECT_EQ(r.report.sessions_removed_by_rule.at("R3"), 49u);
  EXPECT_TRUE(r.sessions.empty());
  EXPECT_EQ(r.report.rows_out, 0u);
}

TEST(Clean, IdempotentOnMixedCorpus) {
  Sessions in;
  add_user(in, "a", 70, 7);
  add_user(in, "b", 55, 5);
  add_user(in, "c", 52, 6);
  Rng rng(5);
  for (auto& [k, ev] : in) {
    if (rng.bernoulli(0.05)) ev.back().videotime_end = 700;
    if (rng.bernoulli(0.05)) ev[1].event_duration = -1;
    if (rng.bernoulli(0.05)) ev[1].bitrate = 0;
    if (rng.bernoulli(0.1))
      for (auto& e : ev) e.video_duration = 650;
  }
  const auto once = dp::clean(in);
  const auto twice = dp::clean(once.sessions);
  std::ostringstream a, b;
  digitwise::write_event_log(a, digitwise::flatten(once.sessions), digitwise::EventFormat::csv);
  digitwise::write_event_log(b, digitwise::flatten(twice.sessions), digitwise::EventFormat::csv);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_LE(once.report.rows_out, once.report.rows_in);
}

TEST(Clean, EmptyInputGivesEmptyReport) {
  const auto r = dp::clean({});
  EXPECT_TRUE(r.sessions.empty());
  EXPECT_EQ(r.report.rows_in, 0u);
  EXPECT_EQ(r.report.sessions_removed_by_rule.size(), dp::clean_rule_ids().size());
}

// --- balancing and split ----------------------------------------------------------

namespace {

std::vector<dp::SessionRecord> records_with_bins(const std::vector<std::pair<std::string, std::vector<int>>>& users) {
  // users: (id, per-bin counts)
  std::vector<dp::SessionRecord> out;
  for (const auto& [user, counts] : users)
    for (int b = 0; b < 10; ++b)
      for (int k = 0; k < counts[static_cast<std::size_t>(b)]; ++k) {
        dp::SessionRecord r;
        r.user_id = user;
        r.video_id = "v";
        r.session_id = user + "-" + std::to_string(b) + "-" + std::to_string(k);
        r.engagement = b / 10.0 + 0.05;
        out.push_back(r);
      }
  return out;
}

}  // namespace

TEST(Balance, BinEdges) {
  EXPECT_EQ(dp::engagement_bin(0.0), 0);
  EXPECT_EQ(dp::engagement_bin(0.0999), 0);
  EXPECT_EQ(dp::engagement_bin(0.1), 1);
  EXPECT_EQ(dp::engagement_bin(0.95), 9);
  EXPECT_EQ(dp::engagement_bin(1.0), 9);
}

TEST(Balance, DownsamplesToSmallestBinAndSplits) {
  std::vector<int> counts(10, 10);
  counts[0] = 12;
  const auto recs = records_with_bins({{"a", counts}});
  const auto r = dp::balance_and_split(recs, 7);
  EXPECT_EQ(r.report.per_bin, 10u);
  ASSERT_EQ(r.splits.size(), 1u);
  EXPECT_EQ(r.splits[0].train.size(), 80u);
  EXPECT_EQ(r.splits[0].test.size(), 20u);
  std::array<int, 10> per_bin{};
  for (const auto& rec : r.splits[0].train) ++per_bin[static_cast<std::size_t>(dp::engagement_bin(rec.engagement))];
  for (const auto& rec : r.splits[0].test) ++per_bin[static_cast<std::size_t>(dp::engagement_bin(rec.engagement))];
  for (int c : per_bin) EXPECT_EQ(c, 10);
}

TEST(Balance, UserBelowHundredRemoved) {
  std::vector<int> a(10, 10), b(10, 10);
  b[3] = 9;  // 99 sessions
  std::vector<int> c(10, 1);
  c[3] = 2;
  const auto recs = records_with_bins({{"a", a}, {"b", b}, {"c", c}});
  const auto r = dp::balance_and_split(recs, 1);
  // Every bin holds 21 records, so nothing is downsampled; b keeps 99, c keeps 11.
  ASSERT_EQ(r.report.per_bin, 21u);
  std::set<std::string> kept;
  for (const auto& s : r.splits) kept.insert(s.user_id);
  EXPECT_TRUE(kept.count("a"));
  EXPECT_FALSE(kept.count("b"));
  EXPECT_FALSE(kept.count("c"));
}

TEST(Balance, TrainTestDisjointAndDeterministic) {
  std::vector<int> a(10, 13);
  const auto recs = records_with_bins({{"x", a}});
  const auto r1 = dp::balance_and_split(recs, 3), r2 = dp::balance_and_split(recs, 3);
  std::set<std::string> train, test;
  for (const auto& rec : r1.splits[0].train) train.insert(rec.session_id);
  for (const auto& rec : r1.splits[0].test) test.insert(rec.session_id);
  for (const auto& id : test) EXPECT_FALSE(train.count(id));
  EXPECT_EQ(r1.splits[0].test.size(), 26u);
  ASSERT_EQ(r1.splits[0].train.size(), r2.splits[0].train.size());
  for (std::size_t i = 0; i < r1.splits[0].train.size(); ++i)
    EXPECT_EQ(r1.splits[0].train[i].session_id, r2.splits[0].train[i].session_id);
}

TEST(Balance, EmptyBinIsConfigError) {
  std::vector<int> a(10, 10);
  a[4] = 0;
  EXPECT_THROW(dp::balance_and_split(records_with_bins({{"a", a}}), 1), digitwise::ConfigError);
}

// --- feature selection ---------------------------------------------------------------

namespace {

dl::Dataset selection_fixture(std::uint64_t seed, bool duplicate, bool constant = false) {
  Rng rng(seed);
  const std::size_t n = 400;
  dl::Dataset d;
  d.feature_names = {"a", "b", "noise"};
  if (duplicate) d.feature_names.push_back("a_copy");
  if (constant) d.feature_names.push_back("flat");
  d.x = dl::Matrix(n, d.feature_names.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    d.x(i, 0) = a;
    d.x(i, 1) = b;
    d.x(i, 2) = rng.uniform();
    std::size_t c = 3;
    if (duplicate) d.x(i, c++) = a;
    if (constant) d.x(i, c++) = 7.0;
    d.y.push_back(0.6 * a + 0.4 * b * b + rng.normal(0, 0.02));
  }
  return d;
}

}  // namespace

TEST(FeatureSelection, PenalizedImportanceSumsToOneAndThresholdRule) {
  const auto cat = dp::select_features(selection_fixture(1, false), 0.2, 1);
  double total = 0;
  for (const auto& f : cat.features) {
    total += f.penalized_importance;
    EXPECT_EQ(f.selected, f.penalized_importance >= 0.2);
    EXPECT_GE(f.correlation_penalty, 1.0);
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(FeatureSelection, DuplicatedFeatureStrictlyReducesPenalizedImportance) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto plain = dp::select_features(selection_fixture(seed, false), 0.0, seed);
    const auto dup = dp::select_features(selection_fixture(seed, true), 0.0, seed);
    EXPECT_GE(dup.at("a").correlation_penalty, 2.0);
    EXPECT_LT(dup.at("a").penalized_importance, plain.at("a").penalized_importance);
  }
}

TEST(FeatureSelection, ConstantFeatureHasUnitPenaltyAndZeroImportance) {
  const auto cat = dp::select_features(selection_fixture(4, false, true), 0.0, 4);
  EXPECT_EQ(cat.at("flat").correlation_penalty, 1.0);
  EXPECT_EQ(cat.at("flat").raw_importance, 0.0);
}

TEST(FeatureSelection, ThresholdBoundsAndMonotonicity) {
  const auto cat = dp::select_features(selection_fixture(5, true), 0.0, 5);
  EXPECT_EQ(cat.selected_names().size(), cat.features.size());
  double top = 0;
  for (const auto& f : cat.features) top = std::max(top, f.penalized_importance);
  EXPECT_TRUE(cat.with_threshold(std::nextafter(top, 2.0)).selected_names().empty());
  std::size_t prev = cat.features.size();
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    const auto n = cat.with_threshold(t).selected_names().size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(FeatureSelection, RejectsTooFewRowsOrFeatures) {
  auto d = selection_fixture(6, false);
  EXPECT_THROW(dp::select_features(d.subset(std::vector<std::size_t>{0, 1, 2}), 0.1, 1), digitwise::ConfigError);
  auto one = d;
  one.feature_names = {"a"};
  one.x = d.x.select_cols(std::vector<std::size_t>{0});
  EXPECT_THROW(dp::select_features(one, 0.1, 1), digitwise::ConfigError);
}

TEST(FeatureSelection, CatalogJsonRoundTrip) {
  const auto cat = dp::select_features(selection_fixture(7, false), 0.1, 7);
  const auto back = dp::catalog_from_json(nlohmann::json::parse(dp::to_json(cat).dump()));
  ASSERT_EQ(back.features.size(), cat.features.size());
  for (std::size_t i = 0; i < cat.features.size(); ++i) {
    EXPECT_EQ(back.features[i].name, cat.features[i].name);
    EXPECT_EQ(back.features[i].penalized_importance, cat.features[i].penalized_importance);
    EXPECT_EQ(back.features[i].selected, cat.features[i].selected);
  }
}

// --- persistence ------------------------------------------------------------------

TEST(Records, CsvRoundTripIsExact) {
  const auto r1 = dp::compress(enrich(stalled_session({5, 20, 40}, {4, 2, 3})));
  auto r2 = dp::compress(enrich(make_session({})));
  r2.session_id = "with,comma";
  std::stringstream ss;
  dp::write_records_csv(ss, {r1, r2});
  const auto back = dp::read_records_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& f : dp::kNumericFields) {
    const double a = r1.*f.member, b = back[0].*f.member;
    if (std::isnan(a)) EXPECT_TRUE(std::isnan(b)) << f.name;
    else EXPECT_EQ(a, b) << f.name;
  }
  EXPECT_EQ(back[1].session_id, "with,comma");
}

TEST(Records, MissingColumnIsSchemaError) {
  std::stringstream ss("user_id,video_id\nu,v\n");
  EXPECT_THROW(dp::read_records_csv(ss), digitwise::SchemaError);
}
