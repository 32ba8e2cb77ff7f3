#include "abrsim/subjective.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "abrsim/csv.h"
#include "abrsim/error.h"

namespace abrsim {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Map>
void AssignConsistent(Map& map, const std::string& key, const std::string& value,
                      std::string_view what) {
  auto [it, inserted] = map.emplace(key, value);
  if (!inserted && it->second != value) {
    throw Error(std::string(what) + " of '" + key + "' is both '" + it->second + "' and '" +
                value + "'");
  }
}

std::map<std::pair<std::string, std::string>, std::vector<double>> GroupKeys(
    std::span<const Keystroke> keys) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> out;
  for (const auto& k : keys) out[{k.subject, k.video}].push_back(k.time_s);
  for (auto& [_, v] : out) std::sort(v.begin(), v.end());
  return out;
}

// Number of onsets matched by distinct keystrokes within the tolerance.
int MatchOnsets(std::vector<double> onsets, const std::vector<double>& keys, double tol) {
  std::sort(onsets.begin(), onsets.end());
  int matched = 0;
  size_t k = 0;
  for (double onset : onsets) {
    while (k < keys.size() && keys[k] < onset - tol) ++k;
    if (k < keys.size() && keys[k] <= onset + tol) {
      ++matched;
      ++k;
    }
  }
  return matched;
}

const VideoMeta& MetaOf(const RatingsMatrix& m, const std::string& video) {
  const auto it = m.video_meta.find(video);
  if (it == m.video_meta.end()) throw Error("no video metadata for '" + video + "'");
  return it->second;
}

}  // namespace

std::optional<size_t> ScoreMatrix::subject_index(std::string_view id) const {
  const auto it = std::find(subjects.begin(), subjects.end(), id);
  if (it == subjects.end()) return std::nullopt;
  return static_cast<size_t>(it - subjects.begin());
}

std::optional<size_t> ScoreMatrix::video_index(std::string_view id) const {
  const auto it = std::find(videos.begin(), videos.end(), id);
  if (it == videos.end()) return std::nullopt;
  return static_cast<size_t>(it - videos.begin());
}

ScoreMatrix ScoreMatrix::Subset(std::span<const std::string> kept) const {
  ScoreMatrix out;
  out.videos = videos;
  for (const auto& id : kept) {
    const auto s = subject_index(id);
    if (!s) throw Error("unknown subject '" + id + "'");
    out.subjects.push_back(id);
    for (size_t v = 0; v < videos.size(); ++v) out.values.push_back(at(*s, v));
  }
  return out;
}

VideoMeta VideoMetaFromRecord(const SessionRecord& record) {
  ValidateRecord(record);
  VideoMeta meta;
  const auto& q = record.qualities;
  if (q.empty()) return meta;
  const double n = static_cast<double>(q.size());
  meta.mean_quality = std::accumulate(q.begin(), q.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : q) ss += (x - meta.mean_quality) * (x - meta.mean_quality);
  meta.quality_std = std::sqrt(ss / n);
  meta.total_stall_s = record.total_stall_s();
  meta.first_quality = q.front();
  meta.last_quality = q.back();
  double waited = record.startup_delay_s;
  for (const auto& st : record.stalls) {
    meta.stall_onsets_s.push_back(waited + st.position_s);
    waited += st.duration_s;
  }
  return meta;
}

void RatingsMatrix::Validate() const {
  const auto& m = raw;
  if (m.values.size() != m.subjects.size() * m.videos.size()) {
    throw Error("ratings matrix has inconsistent shape");
  }
  for (double x : m.values) {
    if (ScoreMatrix::present(x) && !(x >= 0.0 && x <= 100.0)) {
      throw Error("ratings must lie in [0, 100]");
    }
  }
  for (const auto& [subject, acc] : keystroke_accuracy) {
    if (!(acc >= 0.0 && acc <= 1.0)) {
      throw Error("keystroke accuracy of '" + subject + "' outside [0, 1]");
    }
  }
  for (const auto& v : m.videos) {
    const auto it = session_of.find(v);
    if (it == session_of.end()) throw Error("video '" + v + "' has no session");
    if (!day_of.contains(it->second)) throw Error("session '" + it->second + "' has no day");
  }
}

RatingsMatrix ParseRatingsCsv(std::string_view text, std::string_view source) {
  const auto table = CsvTable::Parse(text, source);
  const size_t c_subject = table.column("subject_id"), c_video = table.column("video_id"),
               c_session = table.column("session_id"), c_day = table.column("day"),
               c_device = table.column("device"), c_score = table.column("score");
  RatingsMatrix m;
  std::map<std::string, size_t> subject_pos, video_pos;
  for (size_t r = 0; r < table.rows(); ++r) {
    const auto& s = table.at(r, c_subject);
    const auto& v = table.at(r, c_video);
    if (subject_pos.emplace(s, subject_pos.size()).second) m.raw.subjects.push_back(s);
    if (video_pos.emplace(v, video_pos.size()).second) m.raw.videos.push_back(v);
    AssignConsistent(m.session_of, v, table.at(r, c_session), "session");
    AssignConsistent(m.day_of, table.at(r, c_session), table.at(r, c_day), "day");
    AssignConsistent(m.device_of, s, table.at(r, c_device), "device");
  }
  m.raw.values.assign(m.raw.subjects.size() * m.raw.videos.size(), kNaN);
  for (size_t r = 0; r < table.rows(); ++r) {
    double& cell = m.raw.at(subject_pos[table.at(r, c_subject)], video_pos[table.at(r, c_video)]);
    if (ScoreMatrix::present(cell)) {
      throw Error(std::string(source) + ": duplicate rating for subject '" +
                  table.at(r, c_subject) + "' video '" + table.at(r, c_video) + "'");
    }
    cell = table.number(r, c_score);
  }
  m.Validate();
  return m;
}

std::vector<Keystroke> ParseKeystrokesCsv(std::string_view text, std::string_view source) {
  const auto table = CsvTable::Parse(text, source);
  const size_t c_subject = table.column("subject_id"), c_video = table.column("video_id"),
               c_time = table.column("event_time_s");
  std::vector<Keystroke> out;
  for (size_t r = 0; r < table.rows(); ++r) {
    out.push_back({table.at(r, c_subject), table.at(r, c_video), table.number(r, c_time)});
  }
  return out;
}

std::map<std::string, VideoMeta> ParseVideoMetaCsv(std::string_view text,
                                                   std::string_view source) {
  const auto table = CsvTable::Parse(text, source);
  const size_t c_video = table.column("video_id"), c_mean = table.column("mean_quality"),
               c_std = table.column("quality_std"), c_stall = table.column("total_stall_s"),
               c_first = table.column("first_quality"), c_last = table.column("last_quality");
  const bool has_onsets = table.has_column("stall_onsets_s");
  std::map<std::string, VideoMeta> out;
  for (size_t r = 0; r < table.rows(); ++r) {
    VideoMeta meta;
    meta.mean_quality = table.number(r, c_mean);
    meta.quality_std = table.number(r, c_std);
    meta.total_stall_s = table.number(r, c_stall);
    meta.first_quality = table.number(r, c_first);
    meta.last_quality = table.number(r, c_last);
    if (has_onsets) {
      std::string_view field = table.at(r, table.column("stall_onsets_s"));
      while (!field.empty()) {
        const auto semi = field.find(';');
        const auto item = field.substr(0, semi);
        if (!item.empty()) {
          meta.stall_onsets_s.push_back(ParseNumber(item, std::string(source) + " stall onset"));
        }
        field = semi == std::string_view::npos ? std::string_view{} : field.substr(semi + 1);
      }
    }
    if (!out.emplace(table.at(r, c_video), std::move(meta)).second) {
      throw Error(std::string(source) + ": duplicate video '" + table.at(r, c_video) + "'");
    }
  }
  return out;
}

std::string VideoMetaToCsv(const std::map<std::string, VideoMeta>& meta) {
  std::ostringstream out;
  out << "video_id,mean_quality,quality_std,total_stall_s,first_quality,last_quality,"
         "stall_onsets_s\n";
  for (const auto& [video, m] : meta) {
    out << video << ',' << FormatNumber(m.mean_quality) << ',' << FormatNumber(m.quality_std)
        << ',' << FormatNumber(m.total_stall_s) << ',' << FormatNumber(m.first_quality) << ','
        << FormatNumber(m.last_quality) << ',';
    for (size_t i = 0; i < m.stall_onsets_s.size(); ++i) {
      out << (i ? ";" : "") << FormatNumber(m.stall_onsets_s[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::map<std::string, double> KeystrokeAccuracy(const RatingsMatrix& matrix,
                                                std::span<const Keystroke> keys,
                                                double tolerance_s) {
  const auto grouped = GroupKeys(keys);
  const std::vector<double> none;
  std::map<std::string, double> out;
  const auto& m = matrix.raw;
  for (size_t s = 0; s < m.subjects.size(); ++s) {
    long stalls = 0, matched = 0;
    for (size_t v = 0; v < m.videos.size(); ++v) {
      if (!ScoreMatrix::present(m.at(s, v))) continue;
      const auto& onsets = MetaOf(matrix, m.videos[v]).stall_onsets_s;
      if (onsets.empty()) continue;
      const auto it = grouped.find({m.subjects[s], m.videos[v]});
      stalls += static_cast<long>(onsets.size());
      matched += MatchOnsets(onsets, it == grouped.end() ? none : it->second, tolerance_s);
    }
    out[m.subjects[s]] = stalls == 0 ? 1.0 : static_cast<double>(matched) / stalls;
  }
  return out;
}

ScoreMatrix DropUnflaggedRatings(const RatingsMatrix& matrix, std::span<const Keystroke> keys,
                                 double tolerance_s) {
  const auto grouped = GroupKeys(keys);
  const std::vector<double> none;
  ScoreMatrix out = matrix.raw;
  for (size_t s = 0; s < out.subjects.size(); ++s) {
    for (size_t v = 0; v < out.videos.size(); ++v) {
      if (!ScoreMatrix::present(out.at(s, v))) continue;
      const auto& onsets = MetaOf(matrix, out.videos[v]).stall_onsets_s;
      if (onsets.empty()) continue;
      const auto it = grouped.find({out.subjects[s], out.videos[v]});
      const int matched =
          MatchOnsets(onsets, it == grouped.end() ? none : it->second, tolerance_s);
      if (matched < static_cast<int>(onsets.size())) out.at(s, v) = kNaN;
    }
  }
  return out;
}

ScoreMatrix ZNormalize(const ScoreMatrix& scores,
                       const std::map<std::string, std::string>& session_of) {
  std::map<std::string, std::vector<size_t>> by_session;
  for (size_t v = 0; v < scores.videos.size(); ++v) {
    const auto it = session_of.find(scores.videos[v]);
    if (it == session_of.end()) throw Error("video '" + scores.videos[v] + "' has no session");
    by_session[it->second].push_back(v);
  }
  ScoreMatrix out = scores;
  for (size_t s = 0; s < scores.subjects.size(); ++s) {
    for (const auto& [session, vids] : by_session) {
      std::vector<size_t> present;
      for (size_t v : vids) {
        if (ScoreMatrix::present(scores.at(s, v))) present.push_back(v);
      }
      if (present.empty()) continue;
      const std::string where = "subject '" + scores.subjects[s] + "' session '" + session + "'";
      if (present.size() < 2) throw Error(where + " has fewer than 2 ratings");
      double mean = 0.0;
      for (size_t v : present) mean += scores.at(s, v);
      mean /= static_cast<double>(present.size());
      double ss = 0.0;
      for (size_t v : present) ss += (scores.at(s, v) - mean) * (scores.at(s, v) - mean);
      const double sd = std::sqrt(ss / static_cast<double>(present.size() - 1));
      if (!(sd > 0.0)) throw Error(where + " has zero rating spread");
      for (size_t v : present) out.at(s, v) = (scores.at(s, v) - mean) / sd;
    }
  }
  return out;
}

std::vector<std::string> RejectAuxiliary(const RatingsMatrix& matrix, double threshold) {
  std::vector<std::string> kept;
  for (const auto& subject : matrix.raw.subjects) {
    const auto it = matrix.keystroke_accuracy.find(subject);
    if (it == matrix.keystroke_accuracy.end()) {
      throw Error("no keystroke accuracy for subject '" + subject + "'");
    }
    if (it->second >= 1.0 - threshold - 1e-12) kept.push_back(subject);
  }
  return kept;
}

std::vector<std::string> RejectBt500(const ScoreMatrix& z, const Bt500Params& params) {
  const size_t ns = z.subjects.size(), nv = z.videos.size();
  if (ns < 3) throw Error("BT.500 screening needs at least 3 subjects");
  std::vector<double> lo(nv, -std::numeric_limits<double>::infinity());
  std::vector<double> hi(nv, std::numeric_limits<double>::infinity());
  for (size_t v = 0; v < nv; ++v) {
    std::vector<double> x;
    for (size_t s = 0; s < ns; ++s) {
      if (ScoreMatrix::present(z.at(s, v))) x.push_back(z.at(s, v));
    }
    if (x.size() < 2) continue;
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double m2 = 0.0, m4 = 0.0;
    for (double xi : x) {
      const double d = (xi - mean) * (xi - mean);
      m2 += d;
      m4 += d * d;
    }
    const double sd = std::sqrt(m2 / (n - 1.0));
    m2 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) continue;
    const double kurtosis = m4 / (m2 * m2);
    const double k = kurtosis >= params.kurtosis_lo && kurtosis <= params.kurtosis_hi
                         ? params.normal_bound
                         : params.heavy_bound;
    lo[v] = mean - k * sd;
    hi[v] = mean + k * sd;
  }
  std::vector<std::string> kept;
  for (size_t s = 0; s < ns; ++s) {
    int p = 0, q = 0, j = 0;
    for (size_t v = 0; v < nv; ++v) {
      const double x = z.at(s, v);
      if (!ScoreMatrix::present(x)) continue;
      ++j;
      if (x >= hi[v]) ++p;
      if (x <= lo[v]) ++q;
    }
    const bool reject = j > 0 && p + q > 0 &&
                        static_cast<double>(p + q) / j > params.reject_fraction &&
                        std::abs(p - q) / static_cast<double>(p + q) < params.balance;
    if (!reject) kept.push_back(z.subjects[s]);
  }
  return kept;
}

std::vector<Anchor> ParseAnchorsCsv(std::string_view text, std::string_view source) {
  const auto table = CsvTable::Parse(text, source);
  const size_t c_day = table.column("day"), c_video = table.column("video_id"),
               c_mos = table.column("anchor_mos");
  std::vector<Anchor> out;
  for (size_t r = 0; r < table.rows(); ++r) {
    out.push_back({table.at(r, c_day), table.at(r, c_video), table.number(r, c_mos)});
  }
  return out;
}

RealignResult Realign(const ScoreMatrix& z, const std::map<std::string, std::string>& session_of,
                      const std::map<std::string, std::string>& day_of,
                      std::span<const Anchor> anchors) {
  RealignResult out;
  out.videos = z.videos;
  for (size_t v = 0; v < z.videos.size(); ++v) {
    double sum = 0.0;
    int n = 0;
    for (size_t s = 0; s < z.subjects.size(); ++s) {
      if (ScoreMatrix::present(z.at(s, v))) {
        sum += z.at(s, v);
        ++n;
      }
    }
    if (n == 0) throw Error("video '" + z.videos[v] + "' has no ratings");
    out.mean_z.push_back(sum / n);
    const auto sit = session_of.find(z.videos[v]);
    if (sit == session_of.end()) throw Error("video '" + z.videos[v] + "' has no session");
    const auto dit = day_of.find(sit->second);
    if (dit == day_of.end()) throw Error("session '" + sit->second + "' has no day");
    out.days.push_back(dit->second);
  }

  std::map<std::string, std::vector<std::pair<double, double>>> points;
  for (const auto& a : anchors) {
    const auto v = z.video_index(a.video);
    if (!v) throw Error("anchor video '" + a.video + "' has no ratings");
    points[a.day].emplace_back(out.mean_z[*v], a.mos);
  }
  for (const auto& [day, pts] : points) {
    if (pts.size() < 2) throw Error("day '" + day + "' has fewer than 2 anchors");
    const double n = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) throw Error("anchors of day '" + day + "' share one Z-score");
    LinearMap map;
    map.a = sxy / sxx;
    map.b = my - map.a * mx;
    map.anchors = static_cast<int>(pts.size());
    out.day_maps[day] = map;
  }
  for (size_t v = 0; v < out.videos.size(); ++v) {
    const auto it = out.day_maps.find(out.days[v]);
    if (it == out.day_maps.end()) {
      throw Error("day '" + out.days[v] + "' has fewer than 2 anchors");
    }
    out.mos.push_back(it->second.a * out.mean_z[v] + it->second.b);
  }
  return out;
}

std::string RealignToCsv(const RealignResult& r) {
  std::ostringstream out;
  out << "video_id,day,mean_z,mos\n";
  for (size_t v = 0; v < r.videos.size(); ++v) {
    out << r.videos[v] << ',' << r.days[v] << ',' << FormatNumber(r.mean_z[v]) << ','
        << FormatNumber(r.mos[v]) << '\n';
  }
  return out.str();
}

VideoPartitions PartitionSessions(const std::map<std::string, VideoMeta>& meta,
                                  const PartitionParams& p) {
  VideoPartitions out;
  for (const auto& [video, m] : meta) {
    const bool no_stall = m.total_stall_s == 0.0;
    const bool long_stall = m.total_stall_s > p.stall_limit_s;
    const bool near_target = std::abs(m.mean_quality - p.target_quality) <= p.quality_band;
    const bool steady = m.quality_std <= p.std_limit;
    if (near_target && steady) {
      if (no_stall) out.rebuffer_free.push_back(video);
      if (long_stall) out.rebuffered.push_back(video);
    }
    if (!long_stall && steady) {
      (m.mean_quality > p.high_quality ? out.high_quality : out.low_quality).push_back(video);
    }
    if (no_stall && near_target) (steady ? out.steady : out.adapting).push_back(video);
    if (no_stall && steady &&
        std::abs(m.mean_quality - p.position_target_quality) <= p.quality_band) {
      const bool first = m.first_quality < p.degraded_quality;
      const bool last = m.last_quality < p.degraded_quality;
      if (first && !last) out.degraded_first.push_back(video);
      if (last && !first) out.degraded_last.push_back(video);
    }
  }
  return out;
}

double DifferenceOfMeans(const ScoreMatrix& scores, size_t subject,
                         std::span<const std::string> first, std::span<const std::string> second,
                         size_t min_set) {
  if (subject >= scores.subjects.size()) throw Error("subject index out of range");
  auto mean_over = [&](std::span<const std::string> set) {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& id : set) {
      const auto v = scores.video_index(id);
      if (!v) continue;
      const double x = scores.at(subject, *v);
      if (!ScoreMatrix::present(x)) continue;
      sum += x;
      ++n;
    }
    if (n < min_set || n == 0) {
      throw Error("subject '" + scores.subjects[subject] + "' has " + std::to_string(n) +
                  " ratings in a set that needs " + std::to_string(min_set));
    }
    return sum / static_cast<double>(n);
  };
  const double a = mean_over(first);
  return a - mean_over(second);
}

double SensitivityRebuffering(const ScoreMatrix& scores, size_t subject,
                              const VideoPartitions& p, size_t min_set) {
  return DifferenceOfMeans(scores, subject, p.rebuffer_free, p.rebuffered, min_set);
}

double SensitivityQuality(const ScoreMatrix& scores, size_t subject, const VideoPartitions& p,
                          size_t min_set) {
  return DifferenceOfMeans(scores, subject, p.high_quality, p.low_quality, min_set);
}

double SensitivityAdaptation(const ScoreMatrix& scores, size_t subject,
                             const VideoPartitions& p, size_t min_set) {
  return DifferenceOfMeans(scores, subject, p.adapting, p.steady, min_set);
}

double PrimacyRecency(const ScoreMatrix& scores, size_t subject, const VideoPartitions& p,
                      size_t min_set) {
  return DifferenceOfMeans(scores, subject, p.degraded_first, p.degraded_last, min_set);
}

SensitivityReport BuildSensitivityReport(const ScoreMatrix& scores, const VideoPartitions& p,
                                         size_t min_set) {
  SensitivityReport report;
  report.set_sizes = {{"rebuffer_free", p.rebuffer_free.size()},
                      {"rebuffered", p.rebuffered.size()},
                      {"high_quality", p.high_quality.size()},
                      {"low_quality", p.low_quality.size()},
                      {"adapting", p.adapting.size()},
                      {"steady", p.steady.size()},
                      {"degraded_first", p.degraded_first.size()},
                      {"degraded_last", p.degraded_last.size()}};
  auto attempt = [&](auto fn, size_t s) -> std::optional<double> {
    try {
      return fn(scores, s, p, min_set);
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  for (size_t s = 0; s < scores.subjects.size(); ++s) {
    SubjectSensitivity row;
    row.subject = scores.subjects[s];
    row.s_r = attempt(SensitivityRebuffering, s);
    row.s_q = attempt(SensitivityQuality, s);
    row.s_a = attempt(SensitivityAdaptation, s);
    row.primacy_recency = attempt(PrimacyRecency, s);
    report.subjects.push_back(std::move(row));
  }
  return report;
}

std::string SensitivityReportToCsv(const SensitivityReport& report) {
  auto cell = [](const std::optional<double>& x) { return x ? FormatNumber(*x) : std::string(); };
  std::ostringstream out;
  out << "subject_id,s_r,s_q,s_a,primacy_recency\n";
  for (const auto& row : report.subjects) {
    out << row.subject << ',' << cell(row.s_r) << ',' << cell(row.s_q) << ',' << cell(row.s_a)
        << ',' << cell(row.primacy_recency) << '\n';
  }
  return out.str();
}

std::map<std::string, std::vector<CdfPoint>> PersonalMeanCdf(
    const ScoreMatrix& scores, const std::map<std::string, std::string>& device_of) {
  std::map<std::string, std::vector<CdfPoint>> out;
  for (size_t s = 0; s < scores.subjects.size(); ++s) {
    double sum = 0.0;
    int n = 0;
    for (size_t v = 0; v < scores.videos.size(); ++v) {
      if (ScoreMatrix::present(scores.at(s, v))) {
        sum += scores.at(s, v);
        ++n;
      }
    }
    if (n == 0) continue;
    const auto it = device_of.find(scores.subjects[s]);
    if (it == device_of.end()) throw Error("subject '" + scores.subjects[s] + "' has no device");
    out[it->second].push_back({scores.subjects[s], sum / n, 0.0});
  }
  for (auto& [_, points] : out) {
    std::sort(points.begin(), points.end(), [](const CdfPoint& a, const CdfPoint& b) {
      return a.mean != b.mean ? a.mean < b.mean : a.subject < b.subject;
    });
    const double n = static_cast<double>(points.size());
    for (size_t k = 0; k < points.size(); ++k) points[k].cdf = static_cast<double>(k + 1) / n;
  }
  return out;
}

}  // namespace abrsim
