#pragma once

// records.csv (one row per session) and splits.json.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "digitwise/core/error.hpp"
#include "digitwise/core/text.hpp"
#include "digitwise/pipeline/compress.hpp"
#include "digitwise/pipeline/split.hpp"

namespace digitwise::pipeline {

inline std::vector<std::string> record_columns() {
  std::vector<std::string> cols{"user_id", "video_id", "session_id"};
  for (const auto& f : kNumericFields) cols.emplace_back(f.name);
  return cols;
}

inline void write_records_csv(std::ostream& os, const std::vector<SessionRecord>& records) {
  write_csv_row(os, record_columns());
  std::vector<std::string> row;
  for (const auto& r : records) {
    row = {r.user_id, r.video_id, r.session_id};
    for (const auto& f : kNumericFields) row.push_back(format_double(r.*f.member));
    write_csv_row(os, row);
  }
  if (!os) throw IoError("write failure while serializing records");
}

inline std::vector<SessionRecord> read_records_csv(std::istream& is) {
  if (!is) throw IoError("records stream is not readable");
  CsvReader reader(is);
  std::vector<std::string> header, fields;
  bool malformed = false;
  if (!reader.next(header, malformed)) throw SchemaError("records: missing header");
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < header.size(); ++i) pos[std::string(trim(header[i]))] = i;
  for (const auto& c : record_columns())
    if (!pos.count(c)) throw SchemaError("records: missing column '" + c + "'");

  std::vector<SessionRecord> out;
  std::size_t line = 1;
  while (reader.next(fields, malformed)) {
    ++line;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    if (malformed || fields.size() != header.size())
      throw SchemaError("records: malformed row at line " + std::to_string(line));
    SessionRecord r;
    r.user_id = fields[pos["user_id"]];
    r.video_id = fields[pos["video_id"]];
    r.session_id = fields[pos["session_id"]];
    for (const auto& f : kNumericFields) {
      const auto& text = fields[pos[std::string(f.name)]];
      if (trim(text).empty()) {
        r.*f.member = kMissing;
        continue;
      }
      const auto v = parse_double(text);
      if (!v) throw SchemaError("records: bad value for '" + std::string(f.name) + "' at line " + std::to_string(line));
      r.*f.member = *v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void save_records(const std::filesystem::path& path, const std::vector<SessionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write records '" + path.string() + "'");
  write_records_csv(out, records);
}

inline std::vector<SessionRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open records '" + path.string() + "'");
  return read_records_csv(in);
}

/// Splits reference sessions by (video_id, session_id); the records file is
/// named relative to the splits file.
inline nlohmann::ordered_json splits_to_json(const std::vector<UserSplit>& splits, std::uint64_t seed,
                                             const std::string& records_file) {
  nlohmann::ordered_json j;
  j["schema"] = "digitwise.splits/v1";
  j["seed"] = seed;
  j["records"] = records_file;
  auto users = nlohmann::ordered_json::array();
  auto keys = [](const std::vector<SessionRecord>& part) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& r : part) a.push_back({r.video_id, r.session_id});
    return a;
  };
  for (const auto& s : splits) users.push_back({{"user_id", s.user_id}, {"train", keys(s.train)}, {"test", keys(s.test)}});
  j["users"] = std::move(users);
  return j;
}

inline std::vector<UserSplit> splits_from_json(const nlohmann::json& j, const std::vector<SessionRecord>& records) {
  if (j.value("schema", std::string{}) != "digitwise.splits/v1") throw SchemaError("splits: unsupported schema");
  std::map<SessionKey, const SessionRecord*> index;
  for (const auto& r : records) index[r.key()] = &r;
  std::vector<UserSplit> out;
  try {
    for (const auto& u : j.at("users")) {
      UserSplit s;
      s.user_id = u.at("user_id").get<std::string>();
      auto fill = [&](const nlohmann::json& arr, std::vector<SessionRecord>& part) {
        for (const auto& k : arr) {
          SessionKey key{s.user_id, k.at(0).get<std::string>(), k.at(1).get<std::string>()};
          const auto it = index.find(key);
          if (it == index.end())
            throw SchemaError("splits: session '" + key.session_id + "' of user '" + s.user_id + "' not in records");
          part.push_back(*it->second);
        }
      };
      fill(u.at("train"), s.train);
      fill(u.at("test"), s.test);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("splits: ") + e.what());
  }
  return out;
}

inline void save_splits(const std::filesystem::path& path, const std::vector<UserSplit>& splits, std::uint64_t seed,
                        const std::string& records_file = "records.csv") {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write splits '" + path.string() + "'");
  out << splits_to_json(splits, seed, records_file).dump() << '\n';
}

inline std::vector<UserSplit> load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open splits '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("splits '" + path.string() + "': " + e.what());
  }
  const auto records_path = path.parent_path() / j.value("records", std::string{"records.csv"});
  return splits_from_json(j, load_records(records_path));
}

}  // namespace digitwise::pipeline
