#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "digitwise/engagement_model.hpp"
#include "digitwise/synth.hpp"

using namespace digitwise;
using namespace digitwise::engagement;

namespace {

pipeline::SessionRecord rec(const std::string& user, double stalls, double y) {
  pipeline::SessionRecord r;
  r.user_id = user;
  r.video_id = "v";
  r.session_id = user + std::to_string(stalls);
  r.stall_count = stalls;
  r.engagement = y;
  return r;
}

twins::SensitivityDb two_user_db() {
  twins::SensitivityDb db;
  db.features = {"stall_count", "bitrate_mean"};
  db.users["a"] = {"a", {{"stall_count", 0.9}, {"bitrate_mean", 0.1}}, false};
  db.users["b"] = {"b", {{"stall_count", 0.2}, {"bitrate_mean", 0.8}}, false};
  return db;
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / a.size();
    mb += b[i] / b.size();
  }
  double c = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    c += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return c / std::sqrt(va * vb);
}

/// Six synthetic users, processed end to end, with twins on a small grid.
struct SmallWorld {
  pipeline::ProcessResult pr;
  std::vector<std::string> features;
  twins::SensitivityDb db;
  TrainOptions train;
  twins::TwinOptions twin;

  SmallWorld() {
    synth::SynthConfig c;
    c.n_users = 6;
    c.sessions_per_user = 100;
    c.seed = 5;
    pipeline::ProcessOptions po;
    po.seed = 5;
    po.forest.n_trees = 30;
    pr = pipeline::process(group_sessions(synth::generate_corpus(c).events), po);
    features = pr.catalog.selected_names();
    train.space.n_trees = {20};
    train.space.max_depth = {2, 3};
    train.space.colsample = {1.0};
    twin.space = train.space;
    db = twins::build_db(twins::train_all_twins(pr.balance.splits, features, twin, 5), features);
  }
};

const SmallWorld& world() {
  static const SmallWorld w;
  return w;
}

}  // namespace

TEST(Concatenate, AppendsPrefixedWeightColumns) {
  const std::vector<pipeline::SessionRecord> rows{rec("a", 1, 0.5), rec("b", 2, 0.7), rec("a", 3, 0.9)};
  const auto d = concatenate(rows, {"stall_count"}, two_user_db());
  const std::vector<std::string> cols{"stall_count", "sens_stall_count", "sens_bitrate_mean"};
  EXPECT_EQ(d.feature_names, cols);
  ASSERT_EQ(d.x.rows(), 3u);
  EXPECT_EQ(d.x(0, 0), 1.0);
  EXPECT_EQ(d.x(0, 1), 0.9);
  EXPECT_EQ(d.x(1, 2), 0.8);
  EXPECT_EQ(d.x(2, 1), 0.9);
  EXPECT_EQ(d.y, (std::vector<double>{0.5, 0.7, 0.9}));
  EXPECT_TRUE(is_weight_column("sens_stall_count"));
  EXPECT_FALSE(is_weight_column("stall_count"));
}

TEST(Concatenate, UnknownUsersAreListed) {
  const std::vector<pipeline::SessionRecord> rows{rec("a", 1, 0.5), rec("zed", 2, 0.7), rec("yan", 3, 0.9)};
  try {
    concatenate(rows, {"stall_count"}, two_user_db());
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("zed"), std::string::npos);
    EXPECT_NE(msg.find("yan"), std::string::npos);
    EXPECT_EQ(msg.find("a,"), std::string::npos);
  }
}

TEST(Concatenate, RecordPredictionMatchesMatrixPrediction) {
  const auto& w = world();
  const auto test = pipeline::gather(w.pr.balance.splits, true);
  const auto model = train_unified(pipeline::gather(w.pr.balance.splits, false), w.features, w.db, w.train, 1);
  const auto p = model.predict(concatenate(test, w.features, w.db).x);
  for (std::size_t i = 0; i < test.size(); i += 17)
    EXPECT_EQ(model.predict(augmented_record(test[i], w.features, w.db.at(test[i].user_id))), p[i]);
}

TEST(TrainUnified, NeedsTwoHundredRows) {
  std::vector<pipeline::SessionRecord> rows;
  for (int i = 0; i < 199; ++i) rows.push_back(rec(i % 2 ? "a" : "b", i % 9, (i % 9) / 9.0));
  EXPECT_THROW(train_unified(rows, {"stall_count"}, two_user_db(), {}, 1), ConfigError);
  rows.push_back(rec("a", 4, 0.4));
  TrainOptions small;
  small.space.n_trees = {10};
  small.space.max_depth = {2};
  small.space.colsample = {1.0};
  EXPECT_NO_THROW(train_unified(rows, {"stall_count"}, two_user_db(), small, 1));
  EXPECT_NO_THROW(train_benchmark(rows, {"stall_count"}, small, 1));
}

TEST(TrainUnified, NoFeaturesGivesTheTrainingMean) {
  std::vector<pipeline::SessionRecord> rows;
  for (int i = 0; i < 200; ++i) rows.push_back(rec("a", 0, i < 100 ? 0.2 : 0.6));
  twins::SensitivityDb db;
  db.users["a"] = {"a", {}, true};
  const auto m = train_unified(rows, {}, db, {}, 1);
  EXPECT_FALSE(learner::has_splits(m));
  EXPECT_NEAR(m.base_score, 0.4, 1e-12);
}

TEST(Adapters, Bin10Edges) {
  EXPECT_EQ(bin10(0.0), 0);
  EXPECT_EQ(bin10(0.0999), 0);
  EXPECT_EQ(bin10(0.1), 1);
  EXPECT_EQ(bin10(0.95), 9);
  EXPECT_EQ(bin10(1.0), 9);
  EXPECT_EQ(bin10(1.7), 9);
  EXPECT_EQ(bin10(-0.3), 0);
}

TEST(Adapters, Bin10AccuracyFixture) {
  const std::vector<double> t{0.05, 0.15, 0.55, 1.0, 0.31};
  const std::vector<double> p{0.09, 0.21, 0.59, 0.93, 0.29};
  EXPECT_DOUBLE_EQ(bin10_accuracy(t, p), 3.0 / 5.0);
  EXPECT_THROW(bin10_accuracy(t, std::vector<double>{0.1}), ConfigError);
}

TEST(Adapters, BinaryAtThresholdIncludesTheBoundary) {
  const std::vector<double> t{0.7, 0.69, 0.9, 0.1};
  const std::vector<double> p{0.71, 0.7, 0.5, 0.2};
  EXPECT_DOUBLE_EQ(binary_at_threshold(t, p, 0.7), 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(binary_at_threshold(t, t, 0.7), 1.0);
}

TEST(Adapters, Quit50PccOverQualifyingVideos) {
  std::vector<double> t, p;
  std::vector<std::string> v;
  // Fractions below 0.5: true {0.1, 0.5, 0.9}, predicted {0.2, 0.4, 0.9}.
  const int quit_true[3] = {1, 5, 9};
  const int quit_pred[3] = {2, 4, 9};
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 10; ++i) {
      t.push_back(i < quit_true[k] ? 0.3 : 0.8);
      p.push_back(i < quit_pred[k] ? 0.49 : 0.5);
      v.push_back("v" + std::to_string(k));
    }
  // A fourth video with 9 sessions does not qualify.
  for (int i = 0; i < 9; ++i) {
    t.push_back(0.0);
    p.push_back(1.0);
    v.push_back("short");
  }
  const auto r = quit50_pcc(t, p, v);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, pearson_oracle({0.1, 0.5, 0.9}, {0.2, 0.4, 0.9}), 1e-12);

  const std::vector<double> t2(t.begin() + 10, t.end()), p2(p.begin() + 10, p.end());
  const std::vector<std::string> v2(v.begin() + 10, v.end());
  EXPECT_FALSE(quit50_pcc(t2, p2, v2).has_value());
}

TEST(Adapters, PredictionsAreClampedBeforeScoring) {
  EXPECT_EQ(clamp_predictions({-0.2, 0.4, 1.3}), (std::vector<double>{0.0, 0.4, 1.0}));
}

TEST(Horizons, Parsing) {
  EXPECT_EQ(parse_horizon("10s").seconds, 10.0);
  EXPECT_EQ(parse_horizon("2m").seconds, 120.0);
  EXPECT_EQ(parse_horizon("90").seconds, 90.0);
  EXPECT_TRUE(std::isinf(parse_horizon("full").seconds));
  EXPECT_THROW(parse_horizon("soon"), ConfigError);
  EXPECT_THROW(parse_horizon("-5s"), ConfigError);
  EXPECT_THROW(parse_horizon(""), ConfigError);
  const auto all = parse_horizons(kDefaultHorizons);
  ASSERT_EQ(all.size(), 9u);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1].seconds, all[i].seconds);
}

TEST(Horizons, EvaluationAccountsForEverySplitRow) {
  const auto& w = world();
  const EvalInputs in{&w.pr.enriched, &w.pr.balance.splits, w.features, &w.db};
  EvalOptions opt;
  opt.train = w.train;
  const auto full = evaluate_horizon(in, parse_horizon("full"), opt, 2);
  const auto early = evaluate_horizon(in, parse_horizon("10s"), opt, 2);
  std::size_t n_train = 0, n_test = 0;
  for (const auto& s : w.pr.balance.splits) {
    n_train += s.train.size();
    n_test += s.test.size();
  }
  EXPECT_EQ(full.dropped, 0u);
  EXPECT_EQ(full.n_train, n_train);
  EXPECT_EQ(full.n_test, n_test);
  EXPECT_EQ(early.n_train + early.n_test + early.dropped, n_train + n_test);
  EXPECT_LT(full.augmented.metrics.mae, early.augmented.metrics.mae);
}

TEST(Horizons, ReportIsDeterministicAndCarriesNoTimings) {
  const auto& w = world();
  const EvalInputs in{&w.pr.enriched, &w.pr.balance.splits, w.features, &w.db};
  EvalOptions opt;
  opt.train = w.train;
  const auto hs = parse_horizons("30s,full");
  const auto a = to_json(evaluate(in, hs, opt, 4)).dump();
  const auto b = to_json(evaluate(in, hs, opt, 4)).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.find("seconds\":0."), std::string::npos);
  const auto j = nlohmann::json::parse(a);
  EXPECT_EQ(j.at("schema"), "digitwise.eval_report/v1");
  EXPECT_EQ(j.at("horizons").size(), 2u);
  EXPECT_TRUE(j.at("horizons")[1].at("seconds").is_null());
  for (const char* k : {"mae", "rmse", "pearson", "spearman", "bin10_accuracy", "binary70_accuracy", "quit50_pcc"})
    EXPECT_TRUE(j.at("horizons")[0].at("augmented").contains(k)) << k;

  std::ostringstream plot;
  write_horizon_plot(plot, evaluate(in, parse_horizons("full"), opt, 4));
  EXPECT_EQ(plot.str().substr(0, plot.str().find('\n')), "horizon,seconds,augmented_mae,benchmark_mae");
}

TEST(ThresholdSweep, FeatureCountShrinksAndEmptySelectionFallsBackToMean) {
  const auto& w = world();
  const SweepInputs in{&w.pr.catalog, &w.pr.balance.splits};
  const std::vector<double> thresholds{0.0, 0.05, 0.2, 1.01};
  const auto sweep = threshold_sweep(in, thresholds, w.twin, w.train, 3);
  ASSERT_EQ(sweep.size(), thresholds.size());
  for (std::size_t i = 1; i < sweep.size(); ++i) EXPECT_LE(sweep[i].n_features, sweep[i - 1].n_features);
  EXPECT_EQ(sweep.front().n_features, w.pr.catalog.features.size());
  EXPECT_EQ(sweep.back().n_features, 0u);

  const auto train = pipeline::gather(w.pr.balance.splits, false);
  const auto test = pipeline::gather(w.pr.balance.splits, true);
  double mean = 0.0;
  for (const auto& r : train) mean += r.engagement;
  mean /= static_cast<double>(train.size());
  double mae = 0.0;
  for (const auto& r : test) mae += std::fabs(r.engagement - mean);
  mae /= static_cast<double>(test.size());
  EXPECT_NEAR(sweep.back().mae, mae, 1e-12);
  EXPECT_LT(sweep.front().mae, sweep.back().mae);

  std::ostringstream plot;
  write_threshold_plot(plot, sweep);
  EXPECT_EQ(plot.str().substr(0, plot.str().find('\n')), "threshold,n_features,augmented_mae,train_seconds");
}
