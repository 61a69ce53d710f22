#pragma once

// JSON-over-HTTP front end for the what-if engine. `handle` is the whole
// API as a pure function; `mount` wires it into an httplib server.

#include <optional>
#include <regex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/pipeline/feature_select.hpp"
#include "digitwise/whatif/engine.hpp"

namespace digitwise::whatif {

struct ServiceOptions {
  std::size_t max_simulations = 50'000;  // per request, summed over scenarios
};

struct ServiceContext {
  WhatIfEngine engine;
  std::optional<pipeline::FeatureCatalog> catalog;
  ServiceOptions options;
};

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

inline ApiResponse api_error(int status, const std::string& message, const std::string& field = {}) {
  nlohmann::ordered_json j{{"schema", "digitwise.error/v1"}, {"status", status}, {"error", message}};
  j["field"] = field.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(field);
  return {status, std::move(j)};
}

namespace detail {

inline ApiResponse get_users(const ServiceContext& ctx) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [id, v] : ctx.engine.db().users) arr.push_back({{"user_id", id}, {"degenerate", v.degenerate}});
  return {200, {{"schema", "digitwise.users/v1"}, {"users", arr}}};
}

inline ApiResponse get_sensitivities(const ServiceContext& ctx, const std::string& user) {
  const auto& db = ctx.engine.db();
  const auto it = db.users.find(user);
  if (it == db.users.end()) return api_error(404, "unknown user '" + user + "'", "user_id");
  nlohmann::ordered_json w = nlohmann::ordered_json::object();
  for (const auto& f : db.features) w[f] = it->second.weights.count(f) ? it->second.weights.at(f) : 0.0;
  return {200,
          {{"schema", "digitwise.sensitivities/v1"},
           {"user_id", user},
           {"degenerate", it->second.degenerate},
           {"weights", w}}};
}

inline ApiResponse get_traces(const ServiceContext& ctx) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [name, t] : ctx.engine.traces().all())
    arr.push_back({{"name", name},
                   {"steps", t.steps.size()},
                   {"period_s", t.period()},
                   {"mean_bandwidth_kbps", t.mean_bandwidth()}});
  return {200, {{"schema", "digitwise.traces/v1"}, {"traces", arr}}};
}

inline ApiResponse get_features(const ServiceContext& ctx) {
  nlohmann::ordered_json j{{"schema", "digitwise.features/v1"}, {"selected", ctx.engine.features()}};
  j["catalog"] = ctx.catalog ? nlohmann::ordered_json(pipeline::to_json(*ctx.catalog)) : nlohmann::ordered_json(nullptr);
  return {200, std::move(j)};
}

inline ApiResponse post_whatif(const ServiceContext& ctx, const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return api_error(400, std::string("malformed JSON: ") + e.what(), "body");
  }
  try {
    const auto scenarios = parse_request(j);
    const auto n = ctx.engine.simulation_count(scenarios);
    if (n > ctx.options.max_simulations)
      return api_error(422,
                       "request needs " + std::to_string(n) + " simulated sessions, cap is " +
                           std::to_string(ctx.options.max_simulations),
                       "n_sessions");
    return {200, to_json(ctx.engine.run(scenarios))};
  } catch (const FieldError& e) {
    return api_error(400, e.what(), e.field());
  } catch (const NotFoundError& e) {
    return api_error(404, e.what());
  } catch (const CapacityError& e) {
    return api_error(422, e.what(), "cohort");
  } catch (const ConfigError& e) {
    return api_error(400, e.what());
  }
}

}  // namespace detail

inline ApiResponse handle(const ServiceContext& ctx, const std::string& method, const std::string& path,
                          const std::string& body = {}) {
  static const std::regex sens_path("^/users/([^/]+)/sensitivities$");
  try {
    std::smatch m;
    if (method == "GET") {
      if (path == "/health") return {200, {{"schema", "digitwise.health/v1"}, {"status", "ok"}}};
      if (path == "/users") return detail::get_users(ctx);
      if (std::regex_match(path, m, sens_path)) return detail::get_sensitivities(ctx, m[1].str());
      if (path == "/traces") return detail::get_traces(ctx);
      if (path == "/features") return detail::get_features(ctx);
    } else if (method == "POST" && path == "/whatif") {
      return detail::post_whatif(ctx, body);
    }
    return api_error(404, "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return api_error(500, e.what());
  }
}

inline void mount(httplib::Server& server, const ServiceContext& ctx) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto get = [&ctx, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle(ctx, "GET", req.path));
  };
  server.Get("/health", get);
  server.Get("/users", get);
  server.Get(R"(/users/[^/]+/sensitivities)", get);
  server.Get("/traces", get);
  server.Get("/features", get);
  server.Post("/whatif", [&ctx, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle(ctx, "POST", req.path, req.body));
  });
  server.set_error_handler([reply](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) reply(res, api_error(res.status, "no route for " + req.method + " " + req.path));
  });
}

}  // namespace digitwise::whatif
