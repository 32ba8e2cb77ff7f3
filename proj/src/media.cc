#include "abrsim/media.h"

#include <cmath>
#include <utility>

#include <nlohmann/json.hpp>

#include "abrsim/error.h"

namespace abrsim {

using nlohmann::json;

std::vector<Representation> DefaultLadder() {
  return {
      {1, 320, 180, 235.0},      {2, 384, 216, 375.0},
      {3, 512, 288, 560.0},      {4, 512, 288, 750.0},
      {5, 640, 360, 1050.0},     {6, 960, 540, 1750.0},
      {7, 1280, 720, 2350.0},    {8, 1280, 720, 3000.0},
      {9, 1920, 1080, 4300.0},   {10, 1920, 1080, 5800.0},
      {11, 2560, 1440, 8100.0},  {12, 3840, 2160, 11600.0},
      {13, 3840, 2160, 16800.0},
  };
}

void ValidateLadder(std::span<const Representation> ladder) {
  if (ladder.empty()) throw Error("ladder is empty");
  for (size_t i = 0; i < ladder.size(); ++i) {
    const auto& rep = ladder[i];
    if (rep.index != static_cast<int>(i) + 1) {
      throw Error("ladder indices must be contiguous from 1; got " +
                  std::to_string(rep.index) + " at position " +
                  std::to_string(i + 1));
    }
    if (!(rep.bitrate_kbps > 0.0) || !std::isfinite(rep.bitrate_kbps)) {
      throw Error("representation " + std::to_string(rep.index) +
                  " has non-positive bitrate");
    }
    if (rep.width <= 0 || rep.height <= 0) {
      throw Error("representation " + std::to_string(rep.index) +
                  " has non-positive resolution");
    }
    if (i > 0 && !(rep.bitrate_kbps > ladder[i - 1].bitrate_kbps)) {
      throw Error("ladder bitrates must be strictly increasing (index " +
                  std::to_string(rep.index) + ")");
    }
  }
}

Manifest::Manifest(double segment_duration_s,
                   std::vector<Representation> ladder,
                   std::vector<std::vector<SegmentInfo>> segments)
    : segment_duration_s_(segment_duration_s),
      ladder_(std::move(ladder)),
      segments_(std::move(segments)) {
  if (!(segment_duration_s_ > 0.0) || !std::isfinite(segment_duration_s_)) {
    throw Error("segment_duration_s must be positive");
  }
  ValidateLadder(ladder_);
  if (segments_.empty()) throw Error("manifest has no segments");
  for (size_t k = 0; k < segments_.size(); ++k) {
    const auto& row = segments_[k];
    if (row.size() != ladder_.size()) {
      throw Error("segment row " + std::to_string(k) + " has " +
                  std::to_string(row.size()) + " entries, expected " +
                  std::to_string(ladder_.size()));
    }
    for (size_t r = 0; r < row.size(); ++r) {
      if (!(row[r].size_bits > 0.0) || !std::isfinite(row[r].size_bits)) {
        throw Error("segment " + std::to_string(k) + " rep " +
                    std::to_string(r + 1) + ": size_bits must be positive");
      }
      if (!(row[r].quality >= 0.0 && row[r].quality <= 100.0)) {
        throw Error("segment " + std::to_string(k) + " rep " +
                    std::to_string(r + 1) + ": quality outside [0,100]");
      }
    }
  }
}

const SegmentInfo& Manifest::segment(int chunk, int rep) const {
  if (chunk < 0 || chunk >= segment_count()) {
    throw Error("segment index out of range: " + std::to_string(chunk));
  }
  if (!valid_rep(rep)) {
    throw Error("ladder index out of range: " + std::to_string(rep));
  }
  return segments_[chunk][rep - 1];
}

double Manifest::nominal_kbps(int rep) const {
  if (!valid_rep(rep)) {
    throw Error("ladder index out of range: " + std::to_string(rep));
  }
  return ladder_[rep - 1].bitrate_kbps;
}

double Manifest::actual_kbps(int chunk, int rep) const {
  return segment(chunk, rep).size_bits / segment_duration_s_ / 1000.0;
}

Manifest ParseManifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw Error("manifest must be a JSON object");
    const double duration = doc.value("segment_duration_s", 4.0);
    std::vector<Representation> ladder;
    if (doc.at("ladder").is_string()) {
      if (doc["ladder"].get<std::string>() != "default") {
        throw Error("unknown named ladder '" + doc["ladder"].get<std::string>() + "'");
      }
      ladder = DefaultLadder();
    }
    for (const auto& entry : doc.at("ladder").is_string() ? json::array() : doc.at("ladder")) {
      ladder.push_back({entry.at("index").get<int>(),
                        entry.at("width").get<int>(),
                        entry.at("height").get<int>(),
                        entry.at("bitrate_kbps").get<double>()});
    }
    std::vector<std::vector<SegmentInfo>> segments;
    for (const auto& row : doc.at("segments")) {
      auto& out = segments.emplace_back();
      for (const auto& cell : row) {
        out.push_back({cell.at("size_bits").get<double>(),
                       cell.at("quality").get<double>()});
      }
    }
    return Manifest(duration, std::move(ladder), std::move(segments));
  } catch (const json::exception& e) {
    throw Error(std::string("manifest schema violation: ") + e.what());
  }
}

std::string SerializeManifest(const Manifest& manifest) {
  json doc;
  doc["segment_duration_s"] = manifest.segment_duration_s();
  json ladder = json::array();
  for (const auto& rep : manifest.ladder()) {
    ladder.push_back({{"index", rep.index},
                      {"width", rep.width},
                      {"height", rep.height},
                      {"bitrate_kbps", rep.bitrate_kbps}});
  }
  doc["ladder"] = std::move(ladder);
  json segments = json::array();
  for (const auto& row : manifest.segments()) {
    json out = json::array();
    for (const auto& cell : row) {
      out.push_back({{"size_bits", cell.size_bits}, {"quality", cell.quality}});
    }
    segments.push_back(std::move(out));
  }
  doc["segments"] = std::move(segments);
  return doc.dump(2) + "\n";
}

Manifest SyntheticManifest(int segment_count,
                           std::vector<Representation> ladder,
                           double segment_duration_s) {
  if (segment_count <= 0) throw Error("segment_count must be positive");
  std::vector<std::vector<SegmentInfo>> segments(segment_count);
  for (auto& row : segments) {
    for (const auto& rep : ladder) {
      row.push_back({rep.bitrate_kbps * 1000.0 * segment_duration_s,
                     100.0 * (1.0 - std::exp(-rep.bitrate_kbps / 2500.0))});
    }
  }
  return Manifest(segment_duration_s, std::move(ladder), std::move(segments));
}

double AverageBitrateKbps(const Manifest& manifest,
                          std::span<const int> choices) {
  if (choices.empty()) throw Error("average bitrate of an empty choice list");
  if (static_cast<int>(choices.size()) > manifest.segment_count()) {
    throw Error("more choices than segments");
  }
  double sum = 0.0;
  for (size_t k = 0; k < choices.size(); ++k) {
    sum += manifest.actual_kbps(static_cast<int>(k), choices[k]);
  }
  return sum / static_cast<double>(choices.size());
}

}  // namespace abrsim
