#ifndef ABRSIM_SESSION_H_
#define ABRSIM_SESSION_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace abrsim {

struct Stall {
  double position_s = 0.0;  // playhead (content seconds) where playback froze
  double duration_s = 0.0;

  bool operator==(const Stall&) const = default;
};

struct DownloadSpan {
  double request_s = 0.0;
  double finish_s = 0.0;

  bool operator==(const DownloadSpan&) const = default;
};

// What happened during one simulated playback.
struct SessionLog {
  std::vector<int> choices;  // 1-based ladder index per chunk
  std::vector<DownloadSpan> download_spans;
  double startup_delay_s = 0.0;
  std::vector<Stall> stalls;
  double total_wall_time_s = 0.0;
  // Buffer occupancy right after each chunk is appended (seconds).
  std::vector<double> buffer_levels_s;

  bool operator==(const SessionLog&) const = default;
};

// QoE-facing summary of a session; the input of every QoE model.
struct SessionRecord {
  double segment_duration_s = 4.0;
  std::vector<double> qualities;
  std::vector<double> bitrates_kbps;  // actual: size_bits / duration
  std::vector<Stall> stalls;
  double startup_delay_s = 0.0;
  // Lowest nominal ladder bitrate; reference for log-utility models.
  double min_bitrate_kbps = 0.0;

  size_t size() const { return qualities.size(); }
  double content_s() const { return segment_duration_s * size(); }
  double total_stall_s() const;
  // Quality of the segment that was playing (or last finished) when the
  // stall at `position_s` began.
  double quality_before(double position_s) const;

  bool operator==(const SessionRecord&) const = default;
};

// Throws abrsim::Error when the record violates its invariants.
void ValidateRecord(const SessionRecord& record);

std::string SessionLogToJson(const SessionLog& log);
SessionLog SessionLogFromJson(std::string_view text);
std::string SessionLogToCsv(const SessionLog& log);

std::string SessionRecordToJson(const SessionRecord& record);
SessionRecord SessionRecordFromJson(std::string_view text);

}  // namespace abrsim

#endif  // ABRSIM_SESSION_H_
