#include "abrsim/abr.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "abrsim/error.h"

namespace abrsim {

void ValidateState(const AbrState& state) {
  if (state.manifest == nullptr) throw Error("state has no manifest");
  if (state.next_chunk < 0 ||
      state.next_chunk >= state.manifest->segment_count()) {
    throw Error("state chunk index out of range");
  }
  if (!(state.buffer_s >= 0.0)) throw Error("state buffer must be >= 0");
  if (!state.manifest->valid_rep(state.last_rep)) {
    throw Error("state last_rep is not a ladder index");
  }
  for (double x : state.throughput_history_kbps) {
    if (!(x > 0.0)) throw Error("throughput samples must be positive");
  }
}

double ArithmeticMeanPredict(std::span<const double> history, int window) {
  if (history.empty()) throw Error("throughput history is empty");
  if (window < 1) throw Error("prediction window must be >= 1");
  const size_t n = std::min<size_t>(history.size(), window);
  double sum = 0.0;
  for (double x : history.last(n)) sum += x;
  return sum / static_cast<double>(n);
}

double HarmonicMeanPredict(std::span<const double> history, int window) {
  if (history.empty()) throw Error("throughput history is empty");
  if (window < 1) throw Error("prediction window must be >= 1");
  const size_t n = std::min<size_t>(history.size(), window);
  const auto window_samples = history.last(n);
  // A constant history predicts itself exactly (n / (n / x) may round).
  if (std::all_of(window_samples.begin(), window_samples.end(),
                  [&](double x) { return x == window_samples.front(); }) &&
      window_samples.front() > 0.0) {
    return window_samples.front();
  }
  double inv = 0.0;
  for (double x : window_samples) {
    if (!(x > 0.0)) throw Error("harmonic mean needs positive samples");
    inv += 1.0 / x;
  }
  return static_cast<double>(n) / inv;
}

int RateBasedSelect(std::span<const Representation> ladder,
                    double predicted_kbps, bool strict) {
  int chosen = 1;
  for (const auto& rep : ladder) {
    const bool fits = strict ? rep.bitrate_kbps < predicted_kbps
                             : rep.bitrate_kbps <= predicted_kbps;
    if (fits) chosen = rep.index;
  }
  return chosen;
}

int RateBasedSelect(const AbrState& state, bool strict) {
  ValidateState(state);
  return RateBasedSelect(state.manifest->ladder(),
                         ArithmeticMeanPredict(state.throughput_history_kbps),
                         strict);
}

int BufferBasedSelect(double buffer_s, std::span<const Representation> ladder,
                      double reservoir_s, double cushion_s) {
  if (ladder.empty()) throw Error("ladder is empty");
  if (!(buffer_s >= 0.0)) throw Error("buffer must be non-negative");
  if (buffer_s <= reservoir_s) return ladder.front().index;
  if (buffer_s >= reservoir_s + cushion_s) return ladder.back().index;
  const double r_min = ladder.front().bitrate_kbps;
  const double r_max = ladder.back().bitrate_kbps;
  const double target =
      r_min + (buffer_s - reservoir_s) / cushion_s * (r_max - r_min);
  int chosen = ladder.front().index;
  for (const auto& rep : ladder) {
    if (rep.bitrate_kbps <= target) chosen = rep.index;
  }
  return chosen;
}

BufferBasedPolicy::BufferBasedPolicy(double reservoir_s, double cushion_s)
    : reservoir_s_(reservoir_s), cushion_s_(cushion_s) {
  if (!(reservoir_s_ >= 0.0) || !(cushion_s_ > 0.0)) {
    throw Error("buffer-based policy needs reservoir >= 0 and cushion > 0");
  }
}

int BufferBasedPolicy::Select(const AbrState& state) const {
  ValidateState(state);
  return BufferBasedSelect(state.buffer_s, state.manifest->ladder(),
                           reservoir_s_, cushion_s_);
}

std::string AbrStateToJson(const AbrState& state) {
  using nlohmann::json;
  json doc;
  doc["next_chunk"] = state.next_chunk;
  doc["buffer_s"] = state.buffer_s;
  doc["last_rep"] = state.last_rep;
  doc["throughput_history_kbps"] = std::vector<double>(
      state.throughput_history_kbps.begin(), state.throughput_history_kbps.end());
  doc["wall_time_s"] = state.wall_time_s;
  doc["rtt_s"] = state.rtt_s;
  doc["max_buffer_s"] = state.max_buffer_s;
  if (state.manifest != nullptr) {
    const auto& m = *state.manifest;
    doc["segment_duration_s"] = m.segment_duration_s();
    std::vector<double> ladder;
    for (const auto& rep : m.ladder()) ladder.push_back(rep.bitrate_kbps);
    doc["ladder_kbps"] = ladder;
    json sizes = json::array();
    json qualities = json::array();
    for (int k = state.next_chunk; k < m.segment_count(); ++k) {
      std::vector<double> s, q;
      for (int r = 1; r <= m.ladder_size(); ++r) {
        s.push_back(m.segment(k, r).size_bits);
        q.push_back(m.segment(k, r).quality);
      }
      sizes.push_back(s);
      qualities.push_back(q);
    }
    doc["future_size_bits"] = std::move(sizes);
    doc["future_quality"] = std::move(qualities);
  }
  return doc.dump();
}

std::string RunCommand(const std::string& command) {
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(command.c_str(), "r"),
                                             pclose);
  if (!pipe) throw Error("cannot start command: " + command);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe.get())) > 0) out.append(buf, n);
  const int status = pclose(pipe.release());
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error("command failed: " + command);
  }
  return out;
}

int ExternalPolicy::Select(const AbrState& state) const {
  ValidateState(state);
  static std::atomic<unsigned long> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("abrsim_state_" + std::to_string(getpid()) + "_" +
                     std::to_string(counter++) + ".json");
  {
    std::ofstream out(path);
    if (!out) throw Error("cannot write policy state file " + path.string());
    out << AbrStateToJson(state);
  }
  std::string reply;
  try {
    reply = RunCommand(command_ + " '" + path.string() + "'");
  } catch (...) {
    std::filesystem::remove(path);
    throw;
  }
  std::filesystem::remove(path);
  int rep = 0;
  try {
    rep = std::stoi(reply);
  } catch (const std::exception&) {
    throw Error("external policy returned a non-integer: '" + reply + "'");
  }
  if (!state.manifest->valid_rep(rep)) {
    throw Error("external policy returned an invalid ladder index " +
                std::to_string(rep));
  }
  return rep;
}

}  // namespace abrsim
