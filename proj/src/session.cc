#include "abrsim/session.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abrsim/error.h"

namespace abrsim {

using nlohmann::json;

double SessionRecord::total_stall_s() const {
  double total = 0.0;
  for (const auto& s : stalls) total += s.duration_s;
  return total;
}

double SessionRecord::quality_before(double position_s) const {
  if (qualities.empty()) return 0.0;
  const double slots = std::ceil(position_s / segment_duration_s - 1e-9);
  const auto idx = static_cast<long>(slots) - 1;
  return qualities[std::clamp<long>(idx, 0, static_cast<long>(size()) - 1)];
}

void ValidateRecord(const SessionRecord& record) {
  if (record.qualities.empty()) throw Error("session record has no segments");
  if (record.qualities.size() != record.bitrates_kbps.size()) {
    throw Error("session record arrays differ in length");
  }
  if (!(record.segment_duration_s > 0.0)) {
    throw Error("session record segment duration must be positive");
  }
  for (double q : record.qualities) {
    if (!(q >= 0.0 && q <= 100.0)) throw Error("quality outside [0,100]");
  }
  for (double r : record.bitrates_kbps) {
    if (!(r > 0.0)) throw Error("bitrate must be positive");
  }
  for (const auto& s : record.stalls) {
    if (!(s.duration_s > 0.0) || !(s.position_s >= 0.0)) {
      throw Error("stall must have positive duration and position >= 0");
    }
  }
  if (!(record.startup_delay_s >= 0.0)) {
    throw Error("startup delay must be non-negative");
  }
}

namespace {

json StallsToJson(const std::vector<Stall>& stalls) {
  json out = json::array();
  for (const auto& s : stalls) out.push_back({s.position_s, s.duration_s});
  return out;
}

std::vector<Stall> StallsFromJson(const json& j) {
  std::vector<Stall> out;
  for (const auto& s : j) out.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
  return out;
}

}  // namespace

std::string SessionLogToJson(const SessionLog& log) {
  json doc;
  doc["choices"] = log.choices;
  json spans = json::array();
  for (const auto& s : log.download_spans) spans.push_back({s.request_s, s.finish_s});
  doc["download_spans"] = std::move(spans);
  doc["startup_delay_s"] = log.startup_delay_s;
  doc["stalls"] = StallsToJson(log.stalls);
  doc["total_wall_time_s"] = log.total_wall_time_s;
  doc["buffer_levels_s"] = log.buffer_levels_s;
  return doc.dump(2) + "\n";
}

SessionLog SessionLogFromJson(std::string_view text) {
  try {
    const json doc = json::parse(text);
    SessionLog log;
    log.choices = doc.at("choices").get<std::vector<int>>();
    for (const auto& s : doc.at("download_spans")) {
      log.download_spans.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    }
    log.startup_delay_s = doc.at("startup_delay_s").get<double>();
    log.stalls = StallsFromJson(doc.at("stalls"));
    log.total_wall_time_s = doc.at("total_wall_time_s").get<double>();
    if (doc.contains("buffer_levels_s")) {
      log.buffer_levels_s = doc["buffer_levels_s"].get<std::vector<double>>();
    }
    return log;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid session log: ") + e.what());
  }
}

std::string SessionLogToCsv(const SessionLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "chunk,rep,request_s,finish_s,buffer_s\n";
  for (size_t k = 0; k < log.choices.size(); ++k) {
    out << k << ',' << log.choices[k] << ',' << log.download_spans[k].request_s
        << ',' << log.download_spans[k].finish_s << ','
        << (k < log.buffer_levels_s.size() ? log.buffer_levels_s[k] : 0.0)
        << '\n';
  }
  return out.str();
}

std::string SessionRecordToJson(const SessionRecord& record) {
  json doc;
  doc["segment_duration_s"] = record.segment_duration_s;
  doc["qualities"] = record.qualities;
  doc["bitrates_kbps"] = record.bitrates_kbps;
  doc["stalls"] = StallsToJson(record.stalls);
  doc["startup_delay_s"] = record.startup_delay_s;
  doc["min_bitrate_kbps"] = record.min_bitrate_kbps;
  return doc.dump(2) + "\n";
}

SessionRecord SessionRecordFromJson(std::string_view text) {
  try {
    const json doc = json::parse(text);
    SessionRecord r;
    r.segment_duration_s = doc.value("segment_duration_s", 4.0);
    r.qualities = doc.at("qualities").get<std::vector<double>>();
    r.bitrates_kbps = doc.at("bitrates_kbps").get<std::vector<double>>();
    r.stalls = StallsFromJson(doc.value("stalls", json::array()));
    r.startup_delay_s = doc.value("startup_delay_s", 0.0);
    r.min_bitrate_kbps = doc.value("min_bitrate_kbps", 0.0);
    ValidateRecord(r);
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("invalid session record: ") + e.what());
  }
}

}  // namespace abrsim
