// digitwise command-line front end.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "digitwise/engagement_model.hpp"
#include "digitwise/event_store.hpp"
#include "digitwise/learner/model_io.hpp"
#include "digitwise/pipeline/feature_select.hpp"
#include "digitwise/pipeline/records_io.hpp"
#include "digitwise/pipeline/run.hpp"
#include "digitwise/synth.hpp"
#include "digitwise/twin_registry.hpp"
#include "digitwise/whatif/engine.hpp"
#include "digitwise/whatif/service.hpp"
#include "digitwise/whatif/traces.hpp"

namespace fs = std::filesystem;
using namespace digitwise;

namespace {

void log(const std::string& msg) { std::cerr << "[digitwise] " << msg << '\n'; }

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("'" + path.string() + "': " + e.what());
  }
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto v = parse_double(part);
    if (!v) throw ConfigError("not a number: '" + part + "'");
    out.push_back(*v);
  }
  return out;
}

Sessions load_input(const std::string& sessions_dir, const std::string& events, const std::string& format) {
  if (!sessions_dir.empty()) return load_sessions(sessions_dir);
  if (events.empty()) throw ConfigError("give --sessions or --events");
  auto log_ = load_event_log(events, parse_event_format(format));
  log("parsed " + std::to_string(log_.report.rows) + " rows, skipped " + std::to_string(log_.report.skipped) +
      ", nulled " + std::to_string(log_.report.nulled_fields) + " fields");
  return group_sessions(std::move(log_.events));
}

whatif::TraceLibrary load_traces(const std::string& dir) {
  if (dir.empty()) {
    const fs::path bundled = fs::path(DIGITWISE_DATA_DIR) / "traces";
    if (fs::is_directory(bundled)) return whatif::TraceLibrary::from_directory(bundled);
    return whatif::TraceLibrary::presets();
  }
  return whatif::TraceLibrary::from_directory(dir);
}

whatif::WhatIfEngine load_engine(const std::string& model, const std::string& sensitivities,
                                 const std::string& traces) {
  auto m = learner::load_model(model);
  auto db = twins::load_sensitivities(sensitivities);
  return whatif::WhatIfEngine(std::move(m), std::move(db), load_traces(traces));
}

struct TrainingFlags {
  std::vector<int> n_trees;
  std::vector<int> max_depth;
  std::vector<double> learning_rate;

  void add(CLI::App* app) {
    app->add_option("--grid-trees", n_trees, "search grid: number of trees");
    app->add_option("--grid-depth", max_depth, "search grid: tree depth");
    app->add_option("--grid-lr", learning_rate, "search grid: learning rate");
  }

  learner::SearchSpace apply(learner::SearchSpace s) const {
    if (!n_trees.empty()) s.n_trees = n_trees;
    if (!max_depth.empty()) s.max_depth = max_depth;
    if (!learning_rate.empty()) s.learning_rate = learning_rate;
    return s;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"digitwise: engagement twins and what-if analysis for streaming sessions"};
  app.require_subcommand(1);

  // ingest ------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "parse a raw event log into a sessions directory");
  std::string in_events, in_format = "csv", in_out;
  ingest->add_option("--input", in_events, "event log file")->required();
  ingest->add_option("--format", in_format, "csv or jsonl");
  ingest->add_option("--out", in_out, "output directory")->required();
  ingest->callback([&] {
    auto parsed = load_event_log(in_events, parse_event_format(in_format));
    const auto sessions = group_sessions(std::move(parsed.events));
    save_sessions(in_out, sessions, parsed.report);
    log("wrote " + std::to_string(sessions.size()) + " sessions (" + std::to_string(parsed.report.skipped) +
        " rows skipped) to " + in_out);
  });

  // process -----------------------------------------------------------------
  auto* process = app.add_subcommand("process", "clean, engineer, compress, balance, split and select features");
  std::string pr_sessions, pr_events, pr_format = "csv", pr_out;
  pipeline::ProcessOptions pr_opt;
  process->add_option("--sessions", pr_sessions, "sessions directory from ingest");
  process->add_option("--events", pr_events, "raw event log (instead of --sessions)");
  process->add_option("--format", pr_format, "csv or jsonl for --events");
  process->add_option("--out", pr_out, "output directory")->required();
  process->add_option("--seed", pr_opt.seed, "seed");
  process->add_option("--threshold", pr_opt.threshold, "feature selection threshold");
  process->add_option("--forest-trees", pr_opt.forest.n_trees, "random forest size for feature selection");
  process->callback([&] {
    const auto r = pipeline::process(load_input(pr_sessions, pr_events, pr_format), pr_opt);
    pipeline::write_process_outputs(pr_out, r, pr_opt.seed);
    log("kept " + std::to_string(r.clean_report.sessions_out) + "/" + std::to_string(r.clean_report.sessions_in) +
        " sessions, " + std::to_string(r.balance.splits.size()) + " users, " +
        std::to_string(r.catalog.selected_names().size()) + " selected features -> " + pr_out);
  });

  // train-twins -------------------------------------------------------------
  auto* train = app.add_subcommand("train-twins", "train one twin per user and write the sensitivity database");
  std::string tw_processed, tw_out;
  std::uint64_t tw_seed = 42;
  TrainingFlags tw_flags;
  train->add_option("--processed", tw_processed, "output directory of process")->required();
  train->add_option("--out", tw_out, "output directory")->required();
  train->add_option("--seed", tw_seed, "seed");
  tw_flags.add(train);
  train->callback([&] {
    const fs::path dir = tw_processed;
    const auto catalog = pipeline::load_catalog(dir / "catalog.json");
    const auto splits = pipeline::load_splits(dir / "splits.json");
    const auto features = catalog.selected_names();
    twins::TwinOptions opt;
    opt.space = tw_flags.apply(opt.space);
    const auto t0 = std::chrono::steady_clock::now();
    const auto tw = twins::train_all_twins(splits, features, opt, tw_seed);
    const auto db = twins::build_db(tw, features);
    fs::create_directories(tw_out);
    twins::save_twins(fs::path(tw_out) / "twins", tw);
    twins::save_sensitivities(fs::path(tw_out) / "sensitivities.csv", db);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("trained " + std::to_string(tw.size()) + " twins on " + std::to_string(features.size()) + " features in " +
        format_significant(secs, 3) + " s -> " + tw_out);
  });

  // evaluate ----------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "train and score the augmented and benchmark engagement models");
  std::string ev_processed, ev_sens, ev_out = "report.json", ev_plot, ev_model, ev_horizons = engagement::kDefaultHorizons,
                                     ev_thresholds;
  std::uint64_t ev_seed = 42;
  bool ev_no_bench = false;
  TrainingFlags ev_flags;
  evaluate->add_option("--processed", ev_processed, "output directory of process")->required();
  evaluate->add_option("--sensitivities", ev_sens, "sensitivities.csv from train-twins")->required();
  evaluate->add_option("--out", ev_out, "report file");
  evaluate->add_option("--horizons", ev_horizons, "comma separated horizons, e.g. 10s,2m,full");
  evaluate->add_option("--thresholds", ev_thresholds, "comma separated feature-selection thresholds to sweep");
  evaluate->add_option("--plot-data", ev_plot, "directory for mae_vs_horizon.csv / mae_vs_threshold.csv");
  evaluate->add_option("--model-out", ev_model, "save the full-horizon augmented model here");
  evaluate->add_option("--seed", ev_seed, "seed");
  evaluate->add_flag("--no-benchmark", ev_no_bench, "skip the benchmark model");
  ev_flags.add(evaluate);
  evaluate->callback([&] {
    const fs::path dir = ev_processed;
    const auto catalog = pipeline::load_catalog(dir / "catalog.json");
    const auto splits = pipeline::load_splits(dir / "splits.json");
    const auto features = catalog.selected_names();
    const auto db = twins::load_sensitivities(ev_sens, features);
    auto cleaned = load_event_log(dir / "cleaned_events.csv", EventFormat::csv);
    const auto enriched = pipeline::enrich_all(group_sessions(std::move(cleaned.events)));

    engagement::EvalOptions opt;
    opt.benchmark = !ev_no_bench;
    opt.train.space = ev_flags.apply(opt.train.space);
    const engagement::EvalInputs in{&enriched, &splits, features, &db};
    const auto horizons = engagement::parse_horizons(ev_horizons);
    const auto report = engagement::evaluate(in, horizons, opt, ev_seed);
    auto j = engagement::to_json(report);

    std::vector<engagement::SweepPoint> sweep;
    if (!ev_thresholds.empty()) {
      twins::TwinOptions topt;
      topt.space = opt.train.space;
      sweep = engagement::threshold_sweep({&catalog, &splits}, parse_double_list(ev_thresholds), topt, opt.train,
                                          ev_seed);
      auto points = nlohmann::ordered_json::array();
      for (const auto& p : sweep)
        points.push_back({{"threshold", p.threshold}, {"n_features", p.n_features}, {"mae", p.mae}});
      j["threshold_sweep"] = points;
    }
    write_json(ev_out, j);
    for (const auto& h : report.horizons)
      std::cout << h.horizon.label << "\taugmented_mae=" << format_significant(h.augmented.metrics.mae, 6)
                << (opt.benchmark ? "\tbenchmark_mae=" + format_significant(h.benchmark.metrics.mae, 6) : "") << '\n';

    if (!ev_plot.empty()) {
      fs::create_directories(ev_plot);
      std::ofstream hp(fs::path(ev_plot) / "mae_vs_horizon.csv");
      engagement::write_horizon_plot(hp, report);
      if (!sweep.empty()) {
        std::ofstream tp(fs::path(ev_plot) / "mae_vs_threshold.csv");
        engagement::write_threshold_plot(tp, sweep);
      }
    }
    if (!ev_model.empty()) {
      const auto model = engagement::train_unified(pipeline::gather(splits, false), features, db, opt.train, ev_seed);
      learner::save_model(ev_model, model);
      log("saved unified model -> " + ev_model);
    }
  });

  // whatif ------------------------------------------------------------------
  auto* wi = app.add_subcommand("whatif", "run what-if scenarios in batch");
  std::string wi_model, wi_sens, wi_scenario, wi_traces, wi_out, wi_table;
  wi->add_option("--model", wi_model, "unified model JSON")->required();
  wi->add_option("--sensitivities", wi_sens, "sensitivities.csv")->required();
  wi->add_option("--scenario", wi_scenario, "scenario request JSON")->required();
  wi->add_option("--traces", wi_traces, "trace directory (default: bundled traces)");
  wi->add_option("--out", wi_out, "write the full result JSON here");
  wi->add_option("--table", wi_table, "write the aggregate table CSV here");
  wi->callback([&] {
    const auto engine = load_engine(wi_model, wi_sens, wi_traces);
    const auto scenarios = whatif::parse_request(read_json(wi_scenario));
    const auto result = engine.run(scenarios);
    whatif::write_table(std::cout, result);
    if (!wi_out.empty()) write_json(wi_out, whatif::to_json(result));
    if (!wi_table.empty()) {
      std::ofstream t(wi_table);
      whatif::write_table(t, result);
    }
  });

  // serve -------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "serve the what-if HTTP API");
  std::string sv_model, sv_sens, sv_catalog, sv_traces, sv_bind = "127.0.0.1:8080";
  std::size_t sv_cap = 50'000;
  serve->add_option("--model", sv_model, "unified model JSON")->required();
  serve->add_option("--sensitivities", sv_sens, "sensitivities.csv")->required();
  serve->add_option("--catalog", sv_catalog, "feature catalog JSON for GET /features");
  serve->add_option("--traces", sv_traces, "trace directory (default: bundled traces)");
  serve->add_option("--bind", sv_bind, "address:port");
  serve->add_option("--max-simulations", sv_cap, "per-request cap on simulated sessions");
  serve->callback([&] {
    const auto colon = sv_bind.rfind(':');
    const auto port = colon == std::string::npos ? std::nullopt : parse_int64(sv_bind.substr(colon + 1));
    if (!port || *port < 0 || *port > 65535) throw ConfigError("--bind must look like host:port");
    const auto host = sv_bind.substr(0, colon);
    std::optional<pipeline::FeatureCatalog> catalog;
    if (!sv_catalog.empty()) catalog = pipeline::load_catalog(sv_catalog);
    const whatif::ServiceContext ctx{load_engine(sv_model, sv_sens, sv_traces), catalog, {sv_cap}};
    httplib::Server server;
    whatif::mount(server, ctx);
    log("listening on " + host + ":" + std::to_string(*port));
    if (!server.listen(host, static_cast<int>(*port))) throw IoError("cannot bind " + sv_bind);
  });

  // synth -------------------------------------------------------------------
  auto* sy = app.add_subcommand("synth", "generate a synthetic population and its event logs");
  std::string sy_config, sy_out;
  std::optional<std::uint64_t> sy_seed;
  std::optional<std::size_t> sy_users, sy_sessions;
  sy->add_option("--config", sy_config, "synth config JSON");
  sy->add_option("--out", sy_out, "output directory")->required();
  sy->add_option("--seed", sy_seed, "override the seed");
  sy->add_option("--users", sy_users, "override the number of users");
  sy->add_option("--sessions", sy_sessions, "override sessions per user");
  sy->callback([&] {
    auto c = sy_config.empty() ? synth::SynthConfig{} : synth::synth_config_from_json(read_json(sy_config));
    if (sy_seed) c.seed = *sy_seed;
    if (sy_users) c.n_users = *sy_users;
    if (sy_sessions) c.sessions_per_user = *sy_sessions;
    c.validate();
    const auto corpus = synth::generate_corpus(c);
    synth::write_corpus(sy_out, corpus, c);
    log("wrote " + std::to_string(corpus.events.size()) + " events for " + std::to_string(corpus.users.size()) +
        " users -> " + sy_out);
  });

  // traces ------------------------------------------------------------------
  auto* tr = app.add_subcommand("traces", "write the preset bandwidth traces as CSV files");
  std::string tr_out;
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->callback([&] {
    fs::create_directories(tr_out);
    for (const auto& name : whatif::preset_trace_names())
      whatif::save_trace(fs::path(tr_out) / (name + ".csv"), whatif::preset_trace(name));
    log("wrote " + std::to_string(whatif::preset_trace_names().size()) + " traces -> " + tr_out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const digitwise::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
