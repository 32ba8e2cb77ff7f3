#include "abrsim/rdos.h"

#include <algorithm>
#include <limits>
#include <vector>

#include "abrsim/error.h"
#include "abrsim/simulator.h"

namespace abrsim {
namespace {

struct Horizon {
  int offset = 0;  // 1 when the previous chunk is part of the scored record
  int length = 0;
  double seg = 4.0;
  std::vector<std::vector<double>> dl;       // [stage][rep-1]
  std::vector<std::vector<double>> quality;  // [stage][rep-1]
  std::vector<double> rate_mbps;             // [rep-1]
  double prev_quality = 0.0;
};

Horizon MakeHorizon(const AbrState& state, double predicted_kbps,
                    const RdosParams& params) {
  ValidateState(state);
  params.Validate();
  if (!(predicted_kbps > 0.0)) throw Error("predicted throughput must be positive");
  const Manifest& m = *state.manifest;
  Horizon h;
  h.offset = state.next_chunk > 0 ? 1 : 0;
  h.length = std::min(params.horizon, m.segment_count() - state.next_chunk);
  h.seg = m.segment_duration_s();
  if (h.offset) h.prev_quality = m.segment(state.next_chunk - 1, state.last_rep).quality;
  for (int r = 1; r <= m.ladder_size(); ++r) h.rate_mbps.push_back(m.nominal_kbps(r) / 1000.0);
  for (int k = 0; k < h.length; ++k) {
    auto& dl = h.dl.emplace_back();
    auto& q = h.quality.emplace_back();
    for (int r = 1; r <= m.ladder_size(); ++r) {
      const auto& info = m.segment(state.next_chunk + k, r);
      const double size = params.exact_future_sizes
                              ? info.size_bits
                              : m.nominal_kbps(r) * 1000.0 * h.seg;
      dl.push_back(size / (predicted_kbps * 1000.0) + state.rtt_s);
      q.push_back(info.quality);
    }
  }
  return h;
}

}  // namespace

void RdosParams::Validate() const {
  ksqi.Validate();
  if (!(gamma_rate >= 0.0)) throw Error("rdos gamma_rate must be non-negative");
  if (horizon < 1) throw Error("rdos horizon must be >= 1");
}

SessionRecord RdosHorizonRecord(std::span<const int> choices, const AbrState& state,
                                double predicted_kbps, const RdosParams& params) {
  const Horizon h = MakeHorizon(state, predicted_kbps, params);
  if (static_cast<int>(choices.size()) != h.length) {
    throw Error("choice sequence length must equal the horizon");
  }
  const Manifest& m = *state.manifest;
  SessionRecord record;
  record.segment_duration_s = h.seg;
  record.min_bitrate_kbps = m.ladder().front().bitrate_kbps;
  if (h.offset) {
    record.qualities.push_back(h.prev_quality);
    record.bitrates_kbps.push_back(m.actual_kbps(state.next_chunk - 1, state.last_rep));
  }
  double buffer = state.buffer_s;
  for (int k = 0; k < h.length; ++k) {
    const int r = choices[k];
    if (!m.valid_rep(r)) throw Error("choice out of ladder range");
    const auto step = BufferStep(buffer, h.dl[k][r - 1], h.seg, state.max_buffer_s);
    if (step.stall_s > 0.0) {
      record.stalls.push_back({(h.offset + k) * h.seg, step.stall_s});
    }
    buffer = step.buffer_s;
    record.qualities.push_back(h.quality[k][r - 1]);
    record.bitrates_kbps.push_back(m.actual_kbps(state.next_chunk + k, r));
  }
  return record;
}

double RdosObjective(std::span<const int> choices, const AbrState& state,
                     double predicted_kbps, const RdosParams& params) {
  const SessionRecord record = RdosHorizonRecord(choices, state, predicted_kbps, params);
  double rsum = 0.0;
  for (int r : choices) rsum += state.manifest->nominal_kbps(r) / 1000.0;
  return QoeKsqi(record, params.ksqi) - params.gamma_rate * rsum;
}

int RdosSelect(const AbrState& state, const RdosParams& params) {
  const double prediction = HarmonicMeanPredict(state.throughput_history_kbps);
  const Horizon h = MakeHorizon(state, prediction, params);
  const int reps = static_cast<int>(h.rate_mbps.size());
  const double n = static_cast<double>(h.offset + h.length);
  const auto& kp = params.ksqi;

  // Partial sums mirror QoeKsqi's accumulation order term by term.
  std::vector<int> path(h.length), best_path(h.length, 1);
  std::vector<double> qualities(h.offset + h.length);
  if (h.offset) qualities[0] = h.prev_quality;
  double best = -std::numeric_limits<double>::infinity();

  auto dfs = [&](auto&& self, int depth, double buffer, double q_sum, double stall_pen,
                 double switch_pen, double rsum) -> void {
    if (depth == h.length) {
      const double score =
          (q_sum / n - (stall_pen + switch_pen) / n) - params.gamma_rate * rsum;
      if (score > best) {
        best = score;
        best_path = path;
      }
      return;
    }
    const int slot = h.offset + depth;
    for (int r = 0; r < reps; ++r) {
      const double q = h.quality[depth][r];
      qualities[slot] = q;
      const auto step = BufferStep(buffer, h.dl[depth][r], h.seg, state.max_buffer_s);
      double sp = stall_pen;
      if (step.stall_s > 0.0) {
        sp += KsqiStallTerm(step.stall_s, qualities[std::max(slot - 1, 0)], kp);
      }
      const double sw =
          slot > 0 ? switch_pen + KsqiSwitchTerm(qualities[slot - 1], q, kp) : switch_pen;
      const double qs = (slot == 0 ? 0.0 : q_sum) + q;
      path[depth] = r + 1;
      self(self, depth + 1, step.buffer_s, qs, sp, sw, rsum + h.rate_mbps[r]);
    }
  };
  dfs(dfs, 0, state.buffer_s, h.offset ? h.prev_quality : 0.0, 0.0, 0.0, 0.0);
  return best_path.front();
}

RdosPolicy::RdosPolicy(RdosParams params) : params_(std::move(params)) {
  params_.Validate();
}

int RdosPolicy::Select(const AbrState& state) const { return RdosSelect(state, params_); }

}  // namespace abrsim
