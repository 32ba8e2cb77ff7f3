#ifndef ABRSIM_NETTRACE_H_
#define ABRSIM_NETTRACE_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace abrsim {

struct TraceSample {
  double start_s = 0.0;
  double bandwidth_kbps = 0.0;

  bool operator==(const TraceSample&) const = default;
};

// Piecewise-constant bandwidth timeline. Sample i holds from its start time
// until the next sample's start (or duration_s for the last one).
class Trace {
 public:
  Trace(std::vector<TraceSample> samples, double duration_s);

  const std::vector<TraceSample>& samples() const { return samples_; }
  double duration_s() const { return duration_s_; }

  // End time of sample i.
  double sample_end(size_t i) const {
    return i + 1 < samples_.size() ? samples_[i + 1].start_s : duration_s_;
  }
  // Bandwidth in effect at `t` (0 <= t < duration_s).
  double bandwidth_at(double t) const;
  // Index of the sample covering `t`, clamped to [0, size).
  size_t sample_index(double t) const;
  // Time-weighted mean bandwidth over [0, duration_s).
  double mean_kbps() const;
  // Bits deliverable over the whole trace.
  double total_bits() const;

  bool operator==(const Trace&) const = default;

 private:
  std::vector<TraceSample> samples_;
  double duration_s_;
};

enum class TraceFormat {
  kGranular5s,  // one kb/s value per line, 5 s apart (FCC-style)
  kGranular1s,  // one kb/s value per line, 1 s apart (HSDPA/Belgium-style)
  kPairs,       // "time_s,bandwidth_kbps" per line
};

TraceFormat ParseTraceFormat(std::string_view name);
std::string_view TraceFormatName(TraceFormat format);

Trace ParseTrace(std::string_view text, TraceFormat format);
// Writes the pairs format, including the trailing end-of-trace line.
std::string SerializeTrace(const Trace& trace);

// Sliding windows [k*stride, k*stride + window), each re-origined to 0.
std::vector<Trace> WindowTraces(const Trace& trace, double window_s,
                                double stride_s);

// Keeps traces whose time-weighted mean is strictly above min_avg_kbps.
std::vector<Trace> FilterTraces(std::span<const Trace> traces,
                                double min_avg_kbps = 200.0);

// Seeded log-normal AR(1) bandwidth process sampled every sample_s seconds.
// cv is the stationary coefficient of variation, rho the lag-1 correlation.
struct SyntheticTraceSpec {
  double mean_kbps = 3000.0;
  double cv = 0.3;
  double rho = 0.8;
  double duration_s = 600.0;
  double sample_s = 1.0;
  double floor_kbps = 50.0;
};

Trace SyntheticTrace(const SyntheticTraceSpec& spec, uint64_t seed);

struct ChannelConfig {
  double rtt_s = 0.08;
  bool loop_trace = true;
};

// Fluid-channel fetch time: rtt_s elapses, then bits flow at the trace rate
// starting from start_time_s + rtt_s. Throws abrsim::Error when the trace
// cannot deliver the payload.
double DownloadTime(const Trace& trace, const ChannelConfig& channel,
                    double start_time_s, double size_bits);

}  // namespace abrsim

#endif  // ABRSIM_NETTRACE_H_
