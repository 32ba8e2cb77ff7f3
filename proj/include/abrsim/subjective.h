#ifndef ABRSIM_SUBJECTIVE_H_
#define ABRSIM_SUBJECTIVE_H_

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abrsim/session.h"

namespace abrsim {

// subjects x videos, row-major; NaN marks a missing rating.
struct ScoreMatrix {
  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  std::vector<double> values;

  double at(size_t s, size_t v) const { return values[s * videos.size() + v]; }
  double& at(size_t s, size_t v) { return values[s * videos.size() + v]; }
  static bool present(double x) { return !std::isnan(x); }
  std::optional<size_t> subject_index(std::string_view id) const;
  std::optional<size_t> video_index(std::string_view id) const;
  // Keeps only the listed subjects, in the given order.
  ScoreMatrix Subset(std::span<const std::string> kept) const;
};

struct VideoMeta {
  double mean_quality = 0.0;
  double quality_std = 0.0;
  double total_stall_s = 0.0;
  double first_quality = 0.0;
  double last_quality = 0.0;
  std::vector<double> stall_onsets_s;  // wall-clock seconds into the presentation
};

VideoMeta VideoMetaFromRecord(const SessionRecord& record);

struct RatingsMatrix {
  ScoreMatrix raw;
  std::map<std::string, std::string> session_of;      // video -> session
  std::map<std::string, std::string> day_of;          // session -> day
  std::map<std::string, std::string> device_of;       // subject -> device
  std::map<std::string, double> keystroke_accuracy;   // subject -> [0, 1]
  std::map<std::string, VideoMeta> video_meta;

  void Validate() const;
};

struct Keystroke {
  std::string subject;
  std::string video;
  double time_s = 0.0;
};

// `subject_id,video_id,session_id,day,device,score`
RatingsMatrix ParseRatingsCsv(std::string_view text, std::string_view source = "ratings");
// `subject_id,video_id,event_time_s`
std::vector<Keystroke> ParseKeystrokesCsv(std::string_view text,
                                          std::string_view source = "keystrokes");
// `video_id,mean_quality,quality_std,total_stall_s,first_quality,last_quality,stall_onsets_s`
// with onsets separated by ';'.
std::map<std::string, VideoMeta> ParseVideoMetaCsv(std::string_view text,
                                                   std::string_view source = "video_meta");
std::string VideoMetaToCsv(const std::map<std::string, VideoMeta>& meta);

inline constexpr double kKeystrokeToleranceS = 2.0;

// Fraction of true stall onsets, over the videos each subject rated, that
// are matched by a distinct keystroke within +-tolerance. Subjects who saw
// no stalls score 1.
std::map<std::string, double> KeystrokeAccuracy(const RatingsMatrix& matrix,
                                                std::span<const Keystroke> keys,
                                                double tolerance_s = kKeystrokeToleranceS);

// Blanks ratings of videos in which some stall was not flagged.
ScoreMatrix DropUnflaggedRatings(const RatingsMatrix& matrix, std::span<const Keystroke> keys,
                                 double tolerance_s = kKeystrokeToleranceS);

// Per subject per session (x - mean) / sample std.
ScoreMatrix ZNormalize(const ScoreMatrix& scores,
                       const std::map<std::string, std::string>& session_of);

std::vector<std::string> RejectAuxiliary(const RatingsMatrix& matrix, double threshold = 0.10);

struct Bt500Params {
  double kurtosis_lo = 2.0;
  double kurtosis_hi = 4.0;
  double normal_bound = 2.0;               // in std units, when kurtosis is in range
  double heavy_bound = 4.47213595499958;   // sqrt(20)
  double reject_fraction = 0.05;
  double balance = 0.3;
};

std::vector<std::string> RejectBt500(const ScoreMatrix& z, const Bt500Params& params = {});

struct Anchor {
  std::string day;
  std::string video;
  double mos = 0.0;
};

// `day,video_id,anchor_mos`
std::vector<Anchor> ParseAnchorsCsv(std::string_view text, std::string_view source = "anchors");

struct LinearMap {
  double a = 1.0;
  double b = 0.0;
  int anchors = 0;
};

struct RealignResult {
  std::map<std::string, LinearMap> day_maps;
  std::vector<std::string> videos;
  std::vector<std::string> days;
  std::vector<double> mean_z;
  std::vector<double> mos;
};

// Fits MOS = a * mean_z + b per day on the anchors and applies it to every
// video whose session falls on that day.
RealignResult Realign(const ScoreMatrix& z, const std::map<std::string, std::string>& session_of,
                      const std::map<std::string, std::string>& day_of,
                      std::span<const Anchor> anchors);

std::string RealignToCsv(const RealignResult& r);

struct PartitionParams {
  double target_quality = 80.0;
  double quality_band = 10.0;
  double std_limit = 10.0;
  double stall_limit_s = 1.0;
  double high_quality = 60.0;
  double position_target_quality = 85.0;
  double degraded_quality = 70.0;
};

struct VideoPartitions {
  std::vector<std::string> rebuffer_free;     // Q_r-bar
  std::vector<std::string> rebuffered;        // Q_r
  std::vector<std::string> high_quality;      // Q_q
  std::vector<std::string> low_quality;       // Q_q-bar
  std::vector<std::string> adapting;          // Q_a
  std::vector<std::string> steady;            // Q_a-bar
  std::vector<std::string> degraded_first;
  std::vector<std::string> degraded_last;
};

VideoPartitions PartitionSessions(const std::map<std::string, VideoMeta>& meta,
                                  const PartitionParams& params = {});

inline constexpr size_t kMinSensitivitySet = 30;

// Mean of the subject's ratings over `first` minus the mean over `second`.
// Each set must contain at least `min_set` rated videos.
double DifferenceOfMeans(const ScoreMatrix& scores, size_t subject,
                         std::span<const std::string> first, std::span<const std::string> second,
                         size_t min_set = kMinSensitivitySet);

double SensitivityRebuffering(const ScoreMatrix& scores, size_t subject,
                              const VideoPartitions& p, size_t min_set = kMinSensitivitySet);
double SensitivityQuality(const ScoreMatrix& scores, size_t subject, const VideoPartitions& p,
                          size_t min_set = kMinSensitivitySet);
double SensitivityAdaptation(const ScoreMatrix& scores, size_t subject,
                             const VideoPartitions& p, size_t min_set = kMinSensitivitySet);
// Positive when degradation at the end hurts more than at the start.
double PrimacyRecency(const ScoreMatrix& scores, size_t subject, const VideoPartitions& p,
                      size_t min_set = kMinSensitivitySet);

struct SubjectSensitivity {
  std::string subject;
  std::optional<double> s_r, s_q, s_a, primacy_recency;
};

struct SensitivityReport {
  std::vector<SubjectSensitivity> subjects;
  // Sizes of the video sets (before per-subject missing ratings).
  std::map<std::string, size_t> set_sizes;
};

// Metrics whose sets are too small for a subject are left empty.
SensitivityReport BuildSensitivityReport(const ScoreMatrix& scores, const VideoPartitions& p,
                                         size_t min_set = kMinSensitivitySet);
std::string SensitivityReportToCsv(const SensitivityReport& report);

struct CdfPoint {
  std::string subject;
  double mean = 0.0;
  double cdf = 0.0;
};

std::map<std::string, std::vector<CdfPoint>> PersonalMeanCdf(
    const ScoreMatrix& scores, const std::map<std::string, std::string>& device_of);

}  // namespace abrsim

#endif  // ABRSIM_SUBJECTIVE_H_
