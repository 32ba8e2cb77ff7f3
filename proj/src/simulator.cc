#include "abrsim/simulator.h"

#include <algorithm>
#include <string>

#include "abrsim/error.h"

namespace abrsim {

void ValidatePlayerConfig(const PlayerConfig& config,
                          const Manifest& manifest) {
  if (!(config.max_buffer_s >= 2.0 * manifest.segment_duration_s())) {
    throw Error("max_buffer_s must hold at least two segments");
  }
  if (!manifest.valid_rep(config.initial_rep)) {
    throw Error("initial_rep " + std::to_string(config.initial_rep) +
                " is not a ladder index");
  }
  if (!(config.channel.rtt_s >= 0.0)) throw Error("rtt must be >= 0");
}

SessionLog RunSession(const Manifest& manifest, const Trace& trace,
                      const AbrPolicy& policy, const PlayerConfig& config) {
  ValidatePlayerConfig(config, manifest);
  const int n = manifest.segment_count();
  const double seg = manifest.segment_duration_s();

  SessionLog log;
  log.choices.reserve(n);
  log.download_spans.reserve(n);
  log.buffer_levels_s.reserve(n);
  std::vector<double> history;
  history.reserve(n);

  auto fetch = [&](double now, int chunk, int rep) {
    const double bits = manifest.segment(chunk, rep).size_bits;
    const double dl = DownloadTime(trace, config.channel, now, bits);
    // Transfer time excludes the request latency so that predictors see
    // the bottleneck rate.
    const double transfer = std::max(dl - config.channel.rtt_s, 1e-12);
    history.push_back(bits / transfer / 1000.0);
    log.choices.push_back(rep);
    log.download_spans.push_back({now, now + dl});
    return dl;
  };

  double now = fetch(0.0, 0, config.initial_rep);
  log.startup_delay_s = now;
  double buffer = seg;
  log.buffer_levels_s.push_back(buffer);

  for (int k = 1; k < n; ++k) {
    AbrState state;
    state.next_chunk = k;
    state.buffer_s = buffer;
    state.last_rep = log.choices.back();
    state.throughput_history_kbps = history;
    state.manifest = &manifest;
    state.wall_time_s = now;
    state.rtt_s = config.channel.rtt_s;
    state.max_buffer_s = config.max_buffer_s;
    const int rep = policy.Select(state);
    if (!manifest.valid_rep(rep)) {
      throw Error("policy " + policy.name() + " returned invalid index " +
                  std::to_string(rep));
    }
    const double dl = fetch(now, k, rep);
    const auto step = BufferStep(buffer, dl, seg, config.max_buffer_s);
    if (step.stall_s > 0.0) {
      // Everything fetched so far has been played when the buffer runs dry.
      log.stalls.push_back({k * seg, step.stall_s});
    }
    buffer = step.buffer_s;
    log.buffer_levels_s.push_back(buffer);
    now += dl + step.idle_s;
  }
  log.total_wall_time_s = now + buffer;
  return log;
}

SessionRecord ToRecord(const SessionLog& log, const Manifest& manifest,
                       const PlayerConfig& config) {
  if (static_cast<int>(log.choices.size()) != manifest.segment_count()) {
    throw Error("session log does not cover the manifest");
  }
  const double seg = manifest.segment_duration_s();
  const int first = config.drop_first_chunk ? 1 : 0;
  if (first >= manifest.segment_count()) {
    throw Error("nothing left after dropping the first chunk");
  }
  SessionRecord record;
  record.segment_duration_s = seg;
  record.min_bitrate_kbps = manifest.ladder().front().bitrate_kbps;
  record.startup_delay_s = config.drop_first_chunk ? 0.0 : log.startup_delay_s;
  for (int k = first; k < manifest.segment_count(); ++k) {
    const int rep = log.choices[k];
    record.qualities.push_back(manifest.segment(k, rep).quality);
    record.bitrates_kbps.push_back(manifest.actual_kbps(k, rep));
  }
  const double offset = first * seg;
  for (const auto& s : log.stalls) {
    record.stalls.push_back({std::max(0.0, s.position_s - offset), s.duration_s});
  }
  return record;
}

}  // namespace abrsim
