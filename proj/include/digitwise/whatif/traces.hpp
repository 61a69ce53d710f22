#pragma once

// Bandwidth traces: CSV `duration_s,bandwidth_kbps`, built-in presets and a
// name-keyed library.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "digitwise/core/error.hpp"
#include "digitwise/core/rng.hpp"
#include "digitwise/core/text.hpp"

namespace digitwise::whatif {

struct TraceStep {
  double duration_s = 0.0;
  double bandwidth_kbps = 0.0;
};

/// Repeats from the start once exhausted.
struct BandwidthTrace {
  std::string name;
  std::vector<TraceStep> steps;

  void validate() const {
    if (name.empty()) throw ConfigError("trace: empty name");
    if (steps.empty()) throw ConfigError("trace '" + name + "': no steps");
    for (const auto& s : steps)
      if (!(s.duration_s > 0.0) || !(s.bandwidth_kbps > 0.0) || !std::isfinite(s.duration_s) ||
          !std::isfinite(s.bandwidth_kbps))
        throw ConfigError("trace '" + name + "': durations and bandwidths must be finite and > 0");
  }

  double period() const {
    double t = 0.0;
    for (const auto& s : steps) t += s.duration_s;
    return t;
  }

  double mean_bandwidth() const {
    double acc = 0.0;
    for (const auto& s : steps) acc += s.duration_s * s.bandwidth_kbps;
    return acc / period();
  }

  BandwidthTrace scaled(double factor) const {
    auto out = *this;
    for (auto& s : out.steps) s.bandwidth_kbps *= factor;
    return out;
  }
};

inline void write_trace_csv(std::ostream& os, const BandwidthTrace& t) {
  write_csv_row(os, {"duration_s", "bandwidth_kbps"});
  for (const auto& s : t.steps) write_csv_row(os, {format_double(s.duration_s), format_double(s.bandwidth_kbps)});
}

inline BandwidthTrace read_trace_csv(std::istream& is, const std::string& name) {
  if (!is) throw IoError("trace '" + name + "': stream is not readable");
  CsvReader reader(is);
  std::vector<std::string> f;
  bool bad = false;
  if (!reader.next(f, bad) || f.size() != 2 || trim(f[0]) != "duration_s" || trim(f[1]) != "bandwidth_kbps")
    throw SchemaError("trace '" + name + "': header must be duration_s,bandwidth_kbps");
  BandwidthTrace t;
  t.name = name;
  std::size_t line = 1;
  while (reader.next(f, bad)) {
    ++line;
    if (f.size() == 1 && trim(f[0]).empty()) continue;
    const auto d = f.size() == 2 ? parse_double(f[0]) : std::nullopt;
    const auto b = f.size() == 2 ? parse_double(f[1]) : std::nullopt;
    if (bad || !d || !b) throw SchemaError("trace '" + name + "': malformed row at line " + std::to_string(line));
    t.steps.push_back({*d, *b});
  }
  t.validate();
  return t;
}

/// The trace is named after the file stem.
inline BandwidthTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace '" + path.string() + "'");
  return read_trace_csv(in, path.stem().string());
}

inline void save_trace(const std::filesystem::path& path, const BandwidthTrace& t) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace '" + path.string() + "'");
  write_trace_csv(out, t);
}

// ---------------------------------------------------------------------------
// Presets

inline BandwidthTrace constant_trace(std::string name, double kbps, double duration_s = 60.0) {
  BandwidthTrace t{std::move(name), {{duration_s, kbps}}};
  t.validate();
  return t;
}

inline const std::vector<double>& cascade_levels_kbps() {
  static const std::vector<double> levels{6000, 4000, 2500, 1200, 600, 1200, 2500, 4000};
  return levels;
}

/// Down-then-up staircase with `plateau_s`-second plateaus.
inline BandwidthTrace cascade_trace(double plateau_s) {
  BandwidthTrace t;
  t.name = "cascade-" + format_double(plateau_s);
  for (double b : cascade_levels_kbps()) t.steps.push_back({plateau_s, b});
  t.validate();
  return t;
}

/// Log-AR(1) bandwidth with clamping and optional outage episodes.
struct SampledTraceSpec {
  std::string name;
  std::uint64_t seed = 0;
  double step_s = 1.0;
  double length_s = 600.0;
  double median_kbps = 3000.0;
  double phi = 0.9;
  double sigma = 0.4;
  double min_kbps = 100.0;
  double max_kbps = 30000.0;
  double outage_rate = 0.0;  // per step
  double outage_min_s = 0.0;
  double outage_max_s = 0.0;
  double outage_kbps = 200.0;
};

inline BandwidthTrace sampled_trace(const SampledTraceSpec& s) {
  Rng rng(s.seed);
  BandwidthTrace t;
  t.name = s.name;
  const double mu = std::log(s.median_kbps);
  double x = mu;
  double outage_left = 0.0;
  const auto n = static_cast<std::size_t>(std::llround(s.length_s / s.step_s));
  for (std::size_t i = 0; i < n; ++i) {
    x = mu + s.phi * (x - mu) + s.sigma * rng.normal(0.0, 1.0);
    double b = std::clamp(std::exp(x), s.min_kbps, s.max_kbps);
    if (outage_left <= 0.0 && rng.bernoulli(s.outage_rate)) outage_left = rng.uniform(s.outage_min_s, s.outage_max_s);
    if (outage_left > 0.0) {
      b = s.outage_kbps;
      outage_left -= s.step_s;
    }
    t.steps.push_back({s.step_s, std::round(b)});
  }
  t.validate();
  return t;
}

inline SampledTraceSpec lte_like_spec() {
  SampledTraceSpec s;
  s.name = "lte-like";
  s.seed = 4001;
  s.step_s = 1.0;
  s.median_kbps = 3000.0;
  s.phi = 0.9;
  s.sigma = 0.45;
  s.outage_rate = 0.02;
  s.outage_min_s = 3.0;
  s.outage_max_s = 8.0;
  s.outage_kbps = 200.0;
  return s;
}

inline SampledTraceSpec fcc_like_spec() {
  SampledTraceSpec s;
  s.name = "fcc-like";
  s.seed = 4002;
  s.step_s = 5.0;
  s.median_kbps = 5000.0;
  s.phi = 0.8;
  s.sigma = 0.3;
  s.min_kbps = 500.0;
  s.max_kbps = 20000.0;
  return s;
}

inline std::vector<std::string> preset_trace_names() {
  return {"constant-4", "constant-16", "cascade-5", "cascade-20", "lte-like", "fcc-like"};
}

inline BandwidthTrace preset_trace(const std::string& name) {
  if (name == "constant-4") return constant_trace(name, 4000.0);
  if (name == "constant-16") return constant_trace(name, 16000.0);
  if (name == "cascade-5") return cascade_trace(5.0);
  if (name == "cascade-20") return cascade_trace(20.0);
  if (name == "lte-like") return sampled_trace(lte_like_spec());
  if (name == "fcc-like") return sampled_trace(fcc_like_spec());
  throw NotFoundError("unknown trace '" + name + "'");
}

// ---------------------------------------------------------------------------

class TraceLibrary {
 public:
  TraceLibrary() = default;

  static TraceLibrary presets() {
    TraceLibrary lib;
    for (const auto& n : preset_trace_names()) lib.add(preset_trace(n));
    return lib;
  }

  /// Every *.csv in `dir`, named by stem.
  static TraceLibrary from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("trace directory '" + dir.string() + "' not found");
    TraceLibrary lib;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) lib.add(load_trace(f));
    return lib;
  }

  void add(BandwidthTrace t) {
    t.validate();
    const auto name = t.name;
    traces_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return traces_.count(name) > 0; }

  const BandwidthTrace& at(const std::string& name) const {
    const auto it = traces_.find(name);
    if (it == traces_.end()) throw NotFoundError("unknown trace '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, t] : traces_) out.push_back(n);
    return out;
  }

  const std::map<std::string, BandwidthTrace>& all() const { return traces_; }

 private:
  std::map<std::string, BandwidthTrace> traces_;
};

}  // namespace digitwise::whatif
