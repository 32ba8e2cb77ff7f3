#include "abrsim/nettrace.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <utility>

#include "abrsim/error.h"

namespace abrsim {
namespace {

constexpr double kTimeEps = 1e-9;

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '(')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == ')')) {
    s.remove_suffix(1);
  }
  return s;
}

double ParseNumber(std::string_view field, int line_no) {
  field = Trim(field);
  double value = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error("trace line " + std::to_string(line_no) +
                ": cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

template <typename Fn>
void ForEachLine(std::string_view text, Fn&& fn) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view()
                                        : text.substr(nl + 1);
    ++line_no;
    line = Trim(line);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

}  // namespace

Trace::Trace(std::vector<TraceSample> samples, double duration_s)
    : samples_(std::move(samples)), duration_s_(duration_s) {
  if (samples_.empty()) throw Error("trace has no samples");
  if (samples_.front().start_s != 0.0) {
    throw Error("trace must start at time 0");
  }
  for (size_t i = 0; i < samples_.size(); ++i) {
    if (!(samples_[i].bandwidth_kbps >= 0.0) ||
        !std::isfinite(samples_[i].bandwidth_kbps)) {
      throw Error("trace sample " + std::to_string(i) +
                  " has negative bandwidth");
    }
    if (i > 0 && !(samples_[i].start_s > samples_[i - 1].start_s)) {
      throw Error("trace timestamps must be strictly increasing (sample " +
                  std::to_string(i) + ")");
    }
  }
  if (!(duration_s_ > samples_.back().start_s) || !std::isfinite(duration_s_)) {
    throw Error("trace duration must exceed the last sample start time");
  }
}

size_t Trace::sample_index(double t) const {
  auto it = std::upper_bound(
      samples_.begin(), samples_.end(), t,
      [](double value, const TraceSample& s) { return value < s.start_s; });
  if (it == samples_.begin()) return 0;
  return static_cast<size_t>(it - samples_.begin()) - 1;
}

double Trace::bandwidth_at(double t) const {
  return samples_[sample_index(t)].bandwidth_kbps;
}

double Trace::total_bits() const {
  double bits = 0.0;
  for (size_t i = 0; i < samples_.size(); ++i) {
    bits += samples_[i].bandwidth_kbps * 1000.0 *
            (sample_end(i) - samples_[i].start_s);
  }
  return bits;
}

double Trace::mean_kbps() const { return total_bits() / 1000.0 / duration_s_; }

TraceFormat ParseTraceFormat(std::string_view name) {
  if (name == "granular_5s") return TraceFormat::kGranular5s;
  if (name == "granular_1s") return TraceFormat::kGranular1s;
  if (name == "pairs") return TraceFormat::kPairs;
  throw Error("unknown trace format '" + std::string(name) + "'");
}

std::string_view TraceFormatName(TraceFormat format) {
  switch (format) {
    case TraceFormat::kGranular5s:
      return "granular_5s";
    case TraceFormat::kGranular1s:
      return "granular_1s";
    case TraceFormat::kPairs:
      return "pairs";
  }
  return "pairs";
}

Trace ParseTrace(std::string_view text, TraceFormat format) {
  std::vector<TraceSample> samples;
  if (format == TraceFormat::kPairs) {
    double explicit_end = -1.0;
    ForEachLine(text, [&](std::string_view line, int line_no) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos) {
        throw Error("trace line " + std::to_string(line_no) +
                    ": expected 'time_s,bandwidth_kbps'");
      }
      const auto first = Trim(line.substr(0, comma));
      if (first == "time_s") return;  // header
      if (explicit_end >= 0.0) {
        throw Error("trace line " + std::to_string(line_no) +
                    ": data after the 'end' line");
      }
      if (first == "end") {
        explicit_end = ParseNumber(line.substr(comma + 1), line_no);
        return;
      }
      const double t = ParseNumber(first, line_no);
      const double bw = ParseNumber(line.substr(comma + 1), line_no);
      if (bw < 0.0) {
        throw Error("trace line " + std::to_string(line_no) +
                    ": negative bandwidth");
      }
      if (!samples.empty() && !(t > samples.back().start_s)) {
        throw Error("trace line " + std::to_string(line_no) +
                    ": timestamps out of order");
      }
      samples.push_back({t, bw});
    });
    if (samples.empty()) throw Error("empty trace");
    double duration = explicit_end;
    if (duration < 0.0) {
      // Without an explicit end the last sample lasts as long as the one
      // before it (1 s for a single-sample trace).
      const double last = samples.back().start_s;
      const double gap =
          samples.size() > 1 ? last - samples[samples.size() - 2].start_s : 1.0;
      duration = last + gap;
    }
    return Trace(std::move(samples), duration);
  }

  const double step = format == TraceFormat::kGranular5s ? 5.0 : 1.0;
  ForEachLine(text, [&](std::string_view line, int line_no) {
    const double bw = ParseNumber(line, line_no);
    if (bw < 0.0) {
      throw Error("trace line " + std::to_string(line_no) +
                  ": negative bandwidth");
    }
    samples.push_back({static_cast<double>(samples.size()) * step, bw});
  });
  if (samples.empty()) throw Error("empty trace");
  const double duration = static_cast<double>(samples.size()) * step;
  return Trace(std::move(samples), duration);
}

std::string SerializeTrace(const Trace& trace) {
  auto fmt = [](double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  };
  std::string out = "time_s,bandwidth_kbps\n";
  for (const auto& s : trace.samples()) {
    out += fmt(s.start_s) + "," + fmt(s.bandwidth_kbps) + "\n";
  }
  out += "end," + fmt(trace.duration_s()) + "\n";
  return out;
}

std::vector<Trace> WindowTraces(const Trace& trace, double window_s,
                                double stride_s) {
  if (!(stride_s > 0.0)) throw Error("window stride must be positive");
  if (!(window_s > 0.0)) throw Error("window length must be positive");
  if (window_s > trace.duration_s() + kTimeEps) {
    throw Error("window longer than trace");
  }
  std::vector<Trace> windows;
  for (int k = 0;; ++k) {
    const double begin = k * stride_s;
    if (begin + window_s > trace.duration_s() + kTimeEps) break;
    const double end = begin + window_s;
    std::vector<TraceSample> samples;
    for (size_t i = trace.sample_index(begin); i < trace.samples().size();
         ++i) {
      const auto& s = trace.samples()[i];
      if (s.start_s >= end - kTimeEps) break;
      const double local = std::max(s.start_s, begin) - begin;
      // Drop slivers produced by rounding at the window start.
      if (!samples.empty() && local <= samples.back().start_s) continue;
      samples.push_back({samples.empty() ? 0.0 : local, s.bandwidth_kbps});
    }
    windows.emplace_back(std::move(samples), window_s);
  }
  return windows;
}

std::vector<Trace> FilterTraces(std::span<const Trace> traces,
                                double min_avg_kbps) {
  std::vector<Trace> kept;
  for (const auto& t : traces) {
    if (t.mean_kbps() > min_avg_kbps) kept.push_back(t);
  }
  return kept;
}

double DownloadTime(const Trace& trace, const ChannelConfig& channel,
                    double start_time_s, double size_bits) {
  if (!(size_bits >= 0.0)) throw Error("size_bits must be non-negative");
  if (!(start_time_s >= 0.0)) throw Error("start time must be non-negative");
  if (!(channel.rtt_s >= 0.0)) throw Error("rtt must be non-negative");
  if (size_bits == 0.0) return channel.rtt_s;

  const double duration = trace.duration_s();
  const double flow_start = start_time_s + channel.rtt_s;
  double local = flow_start;
  if (channel.loop_trace) {
    const double per_loop = trace.total_bits();
    if (!(per_loop > 0.0)) {
      throw Error("trace delivers no bits; download can never complete");
    }
    local = flow_start - std::floor(flow_start / duration) * duration;
    if (local >= duration) local = 0.0;
  } else if (flow_start >= duration) {
    throw Error("trace exhausted before the request was issued");
  }

  double remaining = size_bits;
  double elapsed = 0.0;
  if (channel.loop_trace) {
    // Any full period of the trace delivers exactly total_bits().
    const double per_loop = trace.total_bits();
    const double whole = std::floor(remaining / per_loop) - 1.0;
    if (whole > 0.0) {
      remaining -= whole * per_loop;
      elapsed += whole * duration;
    }
  }

  const auto& samples = trace.samples();
  size_t i = trace.sample_index(local);
  for (;;) {
    const double end = trace.sample_end(i);
    const double rate = samples[i].bandwidth_kbps * 1000.0;
    const double span = end - local;
    if (rate > 0.0 && rate * span >= remaining) {
      return channel.rtt_s + elapsed + remaining / rate;
    }
    remaining -= rate * span;
    elapsed += span;
    local = end;
    if (++i == samples.size()) {
      if (!channel.loop_trace) {
        throw Error("trace exhausted with bits remaining");
      }
      i = 0;
      local = 0.0;
    }
  }
}

Trace SyntheticTrace(const SyntheticTraceSpec& spec, uint64_t seed) {
  if (!(spec.mean_kbps > 0.0) || !(spec.cv >= 0.0) || !(spec.rho >= 0.0 && spec.rho < 1.0) ||
      !(spec.duration_s > 0.0) || !(spec.sample_s > 0.0) || !(spec.floor_kbps > 0.0)) {
    throw Error("invalid synthetic trace parameters");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = std::sqrt(std::log1p(spec.cv * spec.cv));
  const double mu = std::log(spec.mean_kbps) - 0.5 * sigma * sigma;
  const double innovation = std::sqrt(1.0 - spec.rho * spec.rho);
  const auto count = static_cast<size_t>(std::ceil(spec.duration_s / spec.sample_s - 1e-9));
  std::vector<TraceSample> samples;
  double z = noise(rng);
  for (size_t i = 0; i < count; ++i) {
    if (i > 0) z = spec.rho * z + innovation * noise(rng);
    samples.push_back({static_cast<double>(i) * spec.sample_s,
                       std::max(spec.floor_kbps, std::exp(mu + sigma * z))});
  }
  return Trace(std::move(samples), spec.duration_s);
}

}  // namespace abrsim
