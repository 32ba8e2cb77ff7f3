#ifndef ABRSIM_SIMULATOR_H_
#define ABRSIM_SIMULATOR_H_

#include "abrsim/abr.h"
#include "abrsim/media.h"
#include "abrsim/nettrace.h"
#include "abrsim/session.h"

namespace abrsim {

struct PlayerConfig {
  double max_buffer_s = 60.0;
  int initial_rep = 1;
  bool drop_first_chunk = true;
  ChannelConfig channel;
};

struct BufferStepResult {
  double buffer_s = 0.0;
  double stall_s = 0.0;
  double idle_s = 0.0;  // time spent waiting for room in a full buffer

  bool operator==(const BufferStepResult&) const = default;
};

// One chunk of the playback recursion: the buffer drains while the chunk
// downloads (stalling once empty), then gains one segment, and the player
// idles if that overshoots the capacity.
inline BufferStepResult BufferStep(double buffer_s, double download_time_s,
                                   double segment_duration_s,
                                   double max_buffer_s) {
  BufferStepResult out;
  out.stall_s = download_time_s > buffer_s ? download_time_s - buffer_s : 0.0;
  const double drained = buffer_s < download_time_s ? buffer_s : download_time_s;
  const double tentative = buffer_s - drained + segment_duration_s;
  if (tentative > max_buffer_s) {
    out.idle_s = tentative - max_buffer_s;
    out.buffer_s = max_buffer_s;
  } else {
    out.buffer_s = tentative;
  }
  return out;
}

// Throws abrsim::Error if the config is unusable with this manifest.
void ValidatePlayerConfig(const PlayerConfig& config, const Manifest& manifest);

// Sequential download loop. Chunk 0 is fetched at config.initial_rep and
// playback starts when it lands; every later chunk is chosen by `policy`.
SessionLog RunSession(const Manifest& manifest, const Trace& trace,
                      const AbrPolicy& policy, const PlayerConfig& config);

// Maps a log to the QoE-facing record, optionally trimming the first chunk
// and the startup delay.
SessionRecord ToRecord(const SessionLog& log, const Manifest& manifest,
                       const PlayerConfig& config);

}  // namespace abrsim

#endif  // ABRSIM_SIMULATOR_H_
