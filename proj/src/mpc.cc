#include "abrsim/mpc.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "abrsim/error.h"
#include "abrsim/simulator.h"

namespace abrsim {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Depth-first search over choice sequences in lexicographic order. Partial
// sums are accumulated exactly as MpcObjective does so leaf scores are
// bit-identical to a direct evaluation.
class MpcSearch {
 public:
  MpcSearch(const MpcProblem& problem, const MpcObjectiveParams& params)
      : pr_(problem),
        lambda_(params.lambda_switch),
        mu_(params.mu_rebuf),
        h_(problem.horizon()),
        n_(problem.ladder_size()) {
    rate_mbps_.resize(n_);
    for (int r = 0; r < n_; ++r) rate_mbps_[r] = pr_.bitrates_kbps[r] / 1000.0;
    dl_.assign(h_, std::vector<double>(n_));
    for (int k = 0; k < h_; ++k) {
      for (int r = 0; r < n_; ++r) {
        dl_[k][r] = pr_.stage_sizes_bits[k][r] / (pr_.predicted_kbps * 1000.0) +
                    pr_.rtt_s;
      }
    }
    path_.resize(h_);
  }

  MpcSolution Run(const MpcObjectiveParams& params) {
    // Constant sequences give a cheap lower bound on the optimum.
    incumbent_ = kNegInf;
    std::vector<int> seq(h_);
    for (int r = 1; r <= n_; ++r) {
      std::fill(seq.begin(), seq.end(), r);
      incumbent_ = std::max(incumbent_, MpcObjective(seq, pr_, params));
    }
    Dfs(0, pr_.buffer_s, pr_.last_rep, 0.0, 0.0, 0.0);
    MpcSolution out;
    out.score = best_;
    out.choices.resize(h_);
    for (int k = 0; k < h_; ++k) out.choices[k] = best_path_[k] + 1;
    return out;
  }

 private:
  double Bound(int depth, double buffer) const {
    double total = 0.0;
    double cap_buffer = buffer;
    for (int s = depth; s < h_; ++s) {
      double g = kNegInf;
      for (int r = 0; r < n_; ++r) {
        const double stall = std::max(0.0, dl_[s][r] - cap_buffer);
        g = std::max(g, rate_mbps_[r] - mu_ * stall);
      }
      total += g;
      cap_buffer = std::min(pr_.max_buffer_s, cap_buffer + pr_.segment_duration_s);
    }
    return total;
  }

  void Dfs(int depth, double buffer, int prev, double bsum, double ssum,
           double stall) {
    if (depth == h_) {
      const double score = bsum - lambda_ * ssum - mu_ * stall;
      if (score > best_) {
        best_ = score;
        best_path_ = path_;
      }
      incumbent_ = std::max(incumbent_, score);
      return;
    }
    if (h_ - depth >= 2) {
      const double bound =
          bsum + Bound(depth, buffer) - lambda_ * ssum - mu_ * stall;
      const double slack = 1e-9 * std::max(1.0, std::abs(incumbent_));
      if (bound < incumbent_ - slack) return;
    }
    const double prev_rate = rate_mbps_[prev - 1];
    for (int r = 0; r < n_; ++r) {
      const auto step = BufferStep(buffer, dl_[depth][r], pr_.segment_duration_s,
                                   pr_.max_buffer_s);
      path_[depth] = r;
      Dfs(depth + 1, step.buffer_s, r + 1, bsum + rate_mbps_[r],
          ssum + std::abs(rate_mbps_[r] - prev_rate), stall + step.stall_s);
    }
  }

  const MpcProblem& pr_;
  double lambda_;
  double mu_;
  int h_;
  int n_;
  std::vector<double> rate_mbps_;
  std::vector<std::vector<double>> dl_;
  std::vector<int> path_;
  std::vector<int> best_path_;
  double best_ = kNegInf;
  double incumbent_ = kNegInf;
};

std::string Fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double ParseDouble(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("table: cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

void MpcObjectiveParams::Validate() const {
  if (!(lambda_switch >= 0.0) || !(mu_rebuf >= 0.0)) {
    throw Error("MPC weights must be non-negative");
  }
  if (horizon < 1) throw Error("MPC horizon must be >= 1");
}

MpcProblem MakeMpcProblem(const AbrState& state, const MpcObjectiveParams& params,
                          double predicted_kbps) {
  ValidateState(state);
  params.Validate();
  if (!(predicted_kbps > 0.0)) throw Error("predicted throughput must be positive");
  const Manifest& m = *state.manifest;
  MpcProblem pr;
  for (const auto& rep : m.ladder()) pr.bitrates_kbps.push_back(rep.bitrate_kbps);
  const int h = std::min(params.horizon, m.segment_count() - state.next_chunk);
  for (int k = 0; k < h; ++k) {
    auto& sizes = pr.stage_sizes_bits.emplace_back();
    for (int r = 1; r <= m.ladder_size(); ++r) {
      sizes.push_back(params.exact_future_sizes
                          ? m.segment(state.next_chunk + k, r).size_bits
                          : m.nominal_kbps(r) * 1000.0 * m.segment_duration_s());
    }
  }
  pr.segment_duration_s = m.segment_duration_s();
  pr.rtt_s = state.rtt_s;
  pr.max_buffer_s = state.max_buffer_s;
  pr.buffer_s = state.buffer_s;
  pr.last_rep = state.last_rep;
  pr.predicted_kbps = predicted_kbps;
  return pr;
}

double MpcObjective(std::span<const int> choices, const MpcProblem& pr,
                    const MpcObjectiveParams& params) {
  if (static_cast<int>(choices.size()) != pr.horizon()) {
    throw Error("choice sequence length must equal the horizon");
  }
  double buffer = pr.buffer_s;
  int prev = pr.last_rep;
  double bsum = 0.0, ssum = 0.0, stall = 0.0;
  for (int k = 0; k < pr.horizon(); ++k) {
    const int r = choices[k];
    if (r < 1 || r > pr.ladder_size()) throw Error("choice out of ladder range");
    const double dl =
        pr.stage_sizes_bits[k][r - 1] / (pr.predicted_kbps * 1000.0) + pr.rtt_s;
    const auto step = BufferStep(buffer, dl, pr.segment_duration_s, pr.max_buffer_s);
    stall += step.stall_s;
    buffer = step.buffer_s;
    const double rate = pr.bitrates_kbps[r - 1] / 1000.0;
    bsum += rate;
    ssum += std::abs(rate - pr.bitrates_kbps[prev - 1] / 1000.0);
    prev = r;
  }
  return bsum - params.lambda_switch * ssum - params.mu_rebuf * stall;
}

double MpcObjective(std::span<const int> choices, const AbrState& state,
                    double predicted_kbps, const MpcObjectiveParams& params) {
  return MpcObjective(choices, MakeMpcProblem(state, params, predicted_kbps), params);
}

MpcSolution SolveMpc(const MpcProblem& problem, const MpcObjectiveParams& params) {
  params.Validate();
  if (problem.horizon() < 1) throw Error("MPC problem has an empty horizon");
  if (!(problem.predicted_kbps > 0.0)) {
    throw Error("predicted throughput must be positive");
  }
  MpcSearch search(problem, params);
  return search.Run(params);
}

int MpcSelectExact(const AbrState& state, const MpcObjectiveParams& params) {
  const double prediction = HarmonicMeanPredict(state.throughput_history_kbps);
  return SolveMpc(MakeMpcProblem(state, params, prediction), params).choices.front();
}

void MpcBinning::Validate() const {
  if (tput_bins < 1 || buffer_bins < 1) throw Error("bin counts must be >= 1");
  if (!(tput_max_kbps > 0.0) || !(max_buffer_s > 0.0)) {
    throw Error("bin ranges must be positive");
  }
}

void MpcTableSpec::Validate() const {
  binning.Validate();
  params.Validate();
  if (bitrates_kbps.empty() || bitrates_kbps.size() > 255) {
    throw Error("table ladder must have 1..255 entries");
  }
  for (size_t i = 0; i < bitrates_kbps.size(); ++i) {
    if (!(bitrates_kbps[i] > 0.0) || (i > 0 && !(bitrates_kbps[i] > bitrates_kbps[i - 1]))) {
      throw Error("table ladder bitrates must be positive and increasing");
    }
  }
  if (!(segment_duration_s > 0.0) || !(rtt_s >= 0.0)) {
    throw Error("table timing parameters invalid");
  }
}

LookupTable::LookupTable(MpcTableSpec spec, std::vector<uint8_t> entries)
    : spec_(std::move(spec)), entries_(std::move(entries)) {
  spec_.Validate();
  const size_t expected = static_cast<size_t>(spec_.binning.tput_bins) *
                          spec_.binning.buffer_bins * spec_.bitrates_kbps.size();
  if (entries_.size() != expected) {
    throw Error("table has " + std::to_string(entries_.size()) + " entries, expected " +
                std::to_string(expected));
  }
  for (uint8_t e : entries_) {
    if (e < 1 || e > spec_.bitrates_kbps.size()) throw Error("table entry out of range");
  }
}

int LookupTable::TputBin(double kbps) const {
  const double width = spec_.binning.tput_max_kbps / spec_.binning.tput_bins;
  const double idx = std::floor(kbps / width);
  return static_cast<int>(std::clamp(idx, 0.0, spec_.binning.tput_bins - 1.0));
}

int LookupTable::BufferBin(double buffer_s) const {
  const double width = spec_.binning.max_buffer_s / spec_.binning.buffer_bins;
  const double idx = std::floor(buffer_s / width);
  return static_cast<int>(std::clamp(idx, 0.0, spec_.binning.buffer_bins - 1.0));
}

double LookupTable::TputCenter(int bin) const {
  return (bin + 0.5) * (spec_.binning.tput_max_kbps / spec_.binning.tput_bins);
}

double LookupTable::BufferCenter(int bin) const {
  return (bin + 0.5) * (spec_.binning.max_buffer_s / spec_.binning.buffer_bins);
}

int LookupTable::At(int tput_bin, int buffer_bin, int prev_rep) const {
  if (tput_bin < 0 || tput_bin >= spec_.binning.tput_bins || buffer_bin < 0 ||
      buffer_bin >= spec_.binning.buffer_bins || prev_rep < 1 || prev_rep > rep_bins()) {
    throw Error("table cell out of range");
  }
  const size_t idx =
      (static_cast<size_t>(tput_bin) * spec_.binning.buffer_bins + buffer_bin) * rep_bins() +
      (prev_rep - 1);
  return entries_[idx];
}

MpcProblem TableCellProblem(const MpcTableSpec& spec, int tput_bin, int buffer_bin,
                            int prev_rep) {
  const auto& b = spec.binning;
  MpcProblem pr;
  pr.bitrates_kbps = spec.bitrates_kbps;
  std::vector<double> sizes;
  for (double r : spec.bitrates_kbps) sizes.push_back(r * 1000.0 * spec.segment_duration_s);
  pr.stage_sizes_bits.assign(spec.params.horizon, sizes);
  pr.segment_duration_s = spec.segment_duration_s;
  pr.rtt_s = spec.rtt_s;
  pr.max_buffer_s = b.max_buffer_s;
  pr.buffer_s = (buffer_bin + 0.5) * (b.max_buffer_s / b.buffer_bins);
  pr.last_rep = prev_rep;
  pr.predicted_kbps = (tput_bin + 0.5) * (b.tput_max_kbps / b.tput_bins);
  return pr;
}

LookupTable BuildMpcTable(const MpcTableSpec& spec, int jobs) {
  spec.Validate();
  const int reps = static_cast<int>(spec.bitrates_kbps.size());
  const int rows = spec.binning.tput_bins;
  std::vector<uint8_t> entries(static_cast<size_t>(rows) * spec.binning.buffer_bins * reps);
  auto fill_rows = [&](int first, int stride) {
    for (int t = first; t < rows; t += stride) {
      for (int b = 0; b < spec.binning.buffer_bins; ++b) {
        for (int prev = 1; prev <= reps; ++prev) {
          const auto sol = SolveMpc(TableCellProblem(spec, t, b, prev), spec.params);
          const size_t idx =
              (static_cast<size_t>(t) * spec.binning.buffer_bins + b) * reps + (prev - 1);
          entries[idx] = static_cast<uint8_t>(sol.choices.front());
        }
      }
    }
  };
  jobs = std::max(1, std::min(jobs, rows));
  if (jobs == 1) {
    fill_rows(0, 1);
  } else {
    std::vector<std::jthread> workers;
    for (int j = 0; j < jobs; ++j) workers.emplace_back(fill_rows, j, jobs);
  }
  return LookupTable(spec, std::move(entries));
}

int MpcSelectTable(const AbrState& state, const LookupTable& table) {
  ValidateState(state);
  if (state.last_rep > table.rep_bins()) throw Error("last_rep outside table");
  const double prediction = HarmonicMeanPredict(state.throughput_history_kbps);
  return table.At(table.TputBin(prediction), table.BufferBin(state.buffer_s),
                  state.last_rep);
}

std::string SerializeTable(const LookupTable& table) {
  const auto& s = table.spec();
  std::ostringstream out;
  out << "abrsim-mpc-table 1\n";
  out << "tput_bins " << s.binning.tput_bins << ' ' << Fmt(s.binning.tput_max_kbps) << '\n';
  out << "buffer_bins " << s.binning.buffer_bins << ' ' << Fmt(s.binning.max_buffer_s) << '\n';
  out << "segment_duration_s " << Fmt(s.segment_duration_s) << '\n';
  out << "rtt_s " << Fmt(s.rtt_s) << '\n';
  out << "objective " << Fmt(s.params.lambda_switch) << ' ' << Fmt(s.params.mu_rebuf) << ' '
      << s.params.horizon << '\n';
  out << "ladder_kbps " << s.bitrates_kbps.size();
  for (double r : s.bitrates_kbps) out << ' ' << Fmt(r);
  out << '\n';
  out << "entries " << table.cell_count() << '\n';
  const int reps = table.rep_bins();
  const auto& e = table.entries();
  for (size_t i = 0; i < e.size(); i += reps) {
    for (int r = 0; r < reps; ++r) out << (r ? " " : "") << static_cast<int>(e[i + r]);
    out << '\n';
  }
  return out.str();
}

LookupTable ParseTable(std::string_view text) {
  std::istringstream in{std::string(text)};
  auto expect = [&](const char* key) {
    std::string word;
    if (!(in >> word) || word != key) {
      throw Error(std::string("table: expected '") + key + "'");
    }
  };
  auto number = [&]() {
    std::string word;
    if (!(in >> word)) throw Error("table: unexpected end of input");
    return ParseDouble(word);
  };
  auto integer = [&]() {
    const double v = number();
    if (v != std::floor(v)) throw Error("table: expected an integer");
    return static_cast<long>(v);
  };
  expect("abrsim-mpc-table");
  if (integer() != 1) throw Error("table: unsupported version");
  MpcTableSpec spec;
  expect("tput_bins");
  spec.binning.tput_bins = static_cast<int>(integer());
  spec.binning.tput_max_kbps = number();
  expect("buffer_bins");
  spec.binning.buffer_bins = static_cast<int>(integer());
  spec.binning.max_buffer_s = number();
  expect("segment_duration_s");
  spec.segment_duration_s = number();
  expect("rtt_s");
  spec.rtt_s = number();
  expect("objective");
  spec.params.lambda_switch = number();
  spec.params.mu_rebuf = number();
  spec.params.horizon = static_cast<int>(integer());
  expect("ladder_kbps");
  const long reps = integer();
  if (reps < 1 || reps > 255) throw Error("table: bad ladder size");
  for (long i = 0; i < reps; ++i) spec.bitrates_kbps.push_back(number());
  expect("entries");
  const long count = integer();
  spec.Validate();
  if (count != static_cast<long>(spec.binning.tput_bins) * spec.binning.buffer_bins * reps) {
    throw Error("table: entry count does not match the binning");
  }
  std::vector<uint8_t> entries;
  entries.reserve(count);
  for (long i = 0; i < count; ++i) {
    const long v = integer();
    if (v < 1 || v > reps) throw Error("table: entry out of range");
    entries.push_back(static_cast<uint8_t>(v));
  }
  std::string rest;
  if (in >> rest) throw Error("table: trailing data");
  return LookupTable(std::move(spec), std::move(entries));
}

MpcPolicy::MpcPolicy(MpcObjectiveParams params) : params_(params) { params_.Validate(); }

int MpcPolicy::Select(const AbrState& state) const { return MpcSelectExact(state, params_); }

int FastMpcPolicy::Select(const AbrState& state) const {
  return MpcSelectTable(state, table_);
}

ClairvoyantMpcPolicy::ClairvoyantMpcPolicy(const Trace& trace, ChannelConfig channel,
                                           MpcObjectiveParams params)
    : trace_(trace), channel_(channel), params_(params) {
  params_.Validate();
}

int ClairvoyantMpcPolicy::Select(const AbrState& state) const {
  ValidateState(state);
  const Manifest& m = *state.manifest;
  const int h = std::min(params_.horizon, m.segment_count() - state.next_chunk);
  const int n = m.ladder_size();
  const double seg = m.segment_duration_s();
  const double lambda = params_.lambda_switch, mu = params_.mu_rebuf;
  std::vector<double> rate(n);
  for (int r = 0; r < n; ++r) rate[r] = m.nominal_kbps(r + 1) / 1000.0;

  double peak_kbps = 0.0;
  for (const auto& s : trace_.samples()) peak_kbps = std::max(peak_kbps, s.bandwidth_kbps);
  // Fastest conceivable download of each horizon chunk.
  std::vector<std::vector<double>> dl_min(h, std::vector<double>(n));
  for (int k = 0; k < h; ++k) {
    for (int r = 0; r < n; ++r) {
      dl_min[k][r] = m.segment(state.next_chunk + k, r + 1).size_bits / (peak_kbps * 1000.0) +
                     channel_.rtt_s;
    }
  }
  auto bound = [&](int depth, double buffer) {
    double total = 0.0;
    for (int s = depth; s < h; ++s) {
      double g = kNegInf;
      for (int r = 0; r < n; ++r) g = std::max(g, rate[r] - mu * std::max(0.0, dl_min[s][r] - buffer));
      total += g;
      buffer = std::min(state.max_buffer_s, buffer + seg);
    }
    return total;
  };
  auto simulate = [&](const std::vector<int>& seq) {
    double now = state.wall_time_s, buffer = state.buffer_s, bsum = 0.0, ssum = 0.0, stall = 0.0;
    int prev = state.last_rep;
    for (int k = 0; k < h; ++k) {
      const double dl =
          DownloadTime(trace_, channel_, now, m.segment(state.next_chunk + k, seq[k]).size_bits);
      const auto step = BufferStep(buffer, dl, seg, state.max_buffer_s);
      bsum += rate[seq[k] - 1];
      ssum += std::abs(rate[seq[k] - 1] - rate[prev - 1]);
      stall += step.stall_s;
      now += dl + step.idle_s;
      buffer = step.buffer_s;
      prev = seq[k];
    }
    return bsum - lambda * ssum - mu * stall;
  };

  double incumbent = kNegInf;
  for (int r = 1; r <= n; ++r) incumbent = std::max(incumbent, simulate(std::vector<int>(h, r)));
  std::vector<int> path(h), best_path(h, 1);
  double best = kNegInf;

  auto dfs = [&](auto&& self, int depth, double now, double buffer, int prev,
                 double bsum, double ssum, double stall) -> void {
    if (depth == h) {
      const double score = bsum - lambda * ssum - mu * stall;
      if (score > best) {
        best = score;
        best_path = path;
      }
      incumbent = std::max(incumbent, score);
      return;
    }
    const double optimistic = bsum + bound(depth, buffer) - lambda * ssum - mu * stall;
    if (optimistic < incumbent - 1e-9 * std::max(1.0, std::abs(incumbent))) return;
    const double prev_rate = rate[prev - 1];
    for (int r = 1; r <= n; ++r) {
      const double dl = DownloadTime(trace_, channel_, now,
                                     m.segment(state.next_chunk + depth, r).size_bits);
      const auto step = BufferStep(buffer, dl, seg, state.max_buffer_s);
      path[depth] = r;
      self(self, depth + 1, now + dl + step.idle_s, step.buffer_s, r, bsum + rate[r - 1],
           ssum + std::abs(rate[r - 1] - prev_rate), stall + step.stall_s);
    }
  };
  dfs(dfs, 0, state.wall_time_s, state.buffer_s, state.last_rep, 0.0, 0.0, 0.0);
  return best_path.front();
}

}  // namespace abrsim
