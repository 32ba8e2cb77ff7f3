#ifndef ABRSIM_QOE_H_
#define ABRSIM_QOE_H_

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abrsim/session.h"

namespace abrsim {

// Bitrate- or quality-based linear model: sum of per-segment values minus
// switching, stall and startup penalties.
struct LinearQoeParams {
  double lambda = 1.0;      // per unit of |value change| between segments
  double mu = 4.3;          // per second of stalling
  double mu_startup = 0.0;  // per second of startup delay
};

struct FtwParams {
  double a = 3.5;
  double b_len = 0.15;
  double b_cnt = 0.19;
  double c = 1.5;
};

// Ternary-level regression on startup delay, stall frequency and mean stall
// duration. A value at or below the first threshold is level 0, at or below
// the second level 1, otherwise level 2.
struct MokParams {
  double intercept = 4.23;
  double w_init = 0.0672;
  double w_freq = 0.742;
  double w_dur = 0.106;
  double init_thresholds_s[2] = {1.0, 5.0};
  double freq_thresholds_per_min[2] = {1.2, 9.0};
  double dur_thresholds_s[2] = {5.0, 10.0};
};

struct LiuParams {
  double c1 = 4.0;  // rebuffer-ratio weight
  double c2 = 1.0;  // mean-bitrate (Mb/s) weight
};

struct LogUtilityParams {
  double stall_weight = 1.0;  // rho (Xue2014) or gamma (Spiteri2016)
  // Used only when the record carries no ladder minimum.
  double r_min_kbps = 235.0;
};

struct SqiParams {
  double u0 = 5.0;
  double u1 = 0.05;
  // Memory constant; infinite means stalls are not discounted by position.
  double tau_s = std::numeric_limits<double>::infinity();
};

// Nonnegative penalty surface sampled on a grid, read with bilinear
// interpolation and clamped at the edges.
struct PenaltySurface {
  std::vector<double> x;  // strictly increasing
  std::vector<double> y;  // strictly increasing
  std::vector<std::vector<double>> values;  // [x.size()][y.size()]

  double At(double xv, double yv) const;
  void Validate() const;
};

struct KsqiParams {
  double c0 = 40.0;
  double c1 = 1.0;
  double c2 = 0.02;
  double beta_neg = 0.5;
  double beta_pos = 0.1;
  // Learned surfaces override the parametric forms when present:
  // stall surface over (stall seconds, quality before stall), switch surface
  // over (quality before, quality after).
  std::optional<PenaltySurface> stall_surface;
  std::optional<PenaltySurface> switch_surface;

  // Checked construction; throws abrsim::Error on invalid coefficients.
  static KsqiParams Create(double c0, double c1, double c2, double beta_neg,
                           double beta_pos);
  void Validate() const;
};

struct QoeParams {
  LinearQoeParams yin2015{1.0, 4.3, 0.0};
  LinearQoeParams bentaleb2016{0.5, 50.0, 0.0};
  FtwParams ftw;
  MokParams mok2011;
  LiuParams liu2012;
  LogUtilityParams xue2014{1.0, 235.0};
  LogUtilityParams spiteri2016{2.0, 235.0};
  SqiParams sqi;
  KsqiParams ksqi;

  void Validate() const;
};

struct QoeScore {
  double value = 0.0;
  std::string model_id;
};

double QoeYin2015(const SessionRecord& record, const LinearQoeParams& p);
double QoeBentaleb2016(const SessionRecord& record, const LinearQoeParams& p);
double QoeFtw(const SessionRecord& record, const FtwParams& p);
double QoeMok2011(const SessionRecord& record, const MokParams& p);
double QoeLiu2012(const SessionRecord& record, const LiuParams& p);
double QoeXue2014(const SessionRecord& record, const LogUtilityParams& p);
double QoeSpiteri2016(const SessionRecord& record, const LogUtilityParams& p);
double QoeSqi(const SessionRecord& record, const SqiParams& p);
double QoeKsqi(const SessionRecord& record, const KsqiParams& p);

// Level (0, 1 or 2) of `value` against two ascending thresholds.
int MokLevel(double value, const double (&thresholds)[2]);

// Single KSQI penalty terms, shared with the RDOS planner so that both
// accumulate identical floating-point sums.
inline double KsqiStallTerm(double stall_s, double quality_before,
                            const KsqiParams& p);
inline double KsqiSwitchTerm(double q_prev, double q_next,
                             const KsqiParams& p);

// The nine knowledge-driven model ids, in a fixed order.
std::span<const std::string_view> KnowledgeDrivenModels();
bool IsKnownModel(std::string_view model_id);

QoeScore Evaluate(std::string_view model_id, const SessionRecord& record,
                  const QoeParams& params);

// Learned models (e.g. VideoATLAS, P.1203) scored out of process: the record
// is written as JSON to a temporary file and `command <file>` must print one
// number.
class ExternalQoeModel {
 public:
  ExternalQoeModel(std::string model_id, std::string command)
      : model_id_(std::move(model_id)), command_(std::move(command)) {}
  const std::string& model_id() const { return model_id_; }
  QoeScore Score(const SessionRecord& record) const;

 private:
  std::string model_id_;
  std::string command_;
};

// Parameter document keyed by model id; missing keys keep their defaults.
QoeParams QoeParamsFromJson(std::string_view text);
std::string QoeParamsToJson(const QoeParams& params);

// Free coefficients of a model as a flat vector (used by calibration).
std::vector<double> GetCoefficients(std::string_view model_id,
                                    const QoeParams& params);
void SetCoefficients(std::string_view model_id, std::span<const double> values,
                     QoeParams& params);

struct CalibrationOptions {
  double train_fraction = 0.8;
  unsigned seed = 1;
  int max_sweeps = 200;
  double initial_step = 0.5;  // relative to max(|coefficient|, 1)
  double min_step = 1e-6;
};

struct CalibrationResult {
  QoeParams params;
  double train_rmse = 0.0;
  double validation_rmse = 0.0;
  std::vector<size_t> train_indices;
  std::vector<size_t> validation_indices;
};

// Coordinate descent on a model's coefficients minimising the residual of
// the best affine map from scores to MOS on a random training split.
CalibrationResult Calibrate(std::string_view model_id,
                            std::span<const SessionRecord> records,
                            std::span<const double> mos,
                            const QoeParams& initial,
                            const CalibrationOptions& options = {});

inline double KsqiStallTerm(double stall_s, double quality_before,
                            const KsqiParams& p) {
  if (p.stall_surface) return p.stall_surface->At(stall_s, quality_before);
  return p.c0 * std::log1p(stall_s) * (p.c1 + p.c2 * (100.0 - quality_before));
}

inline double KsqiSwitchTerm(double q_prev, double q_next,
                             const KsqiParams& p) {
  if (p.switch_surface) return p.switch_surface->At(q_prev, q_next);
  const double delta = q_next - q_prev;
  return p.beta_neg * (delta < 0.0 ? -delta : 0.0) +
         p.beta_pos * (delta > 0.0 ? delta : 0.0);
}

}  // namespace abrsim

#endif  // ABRSIM_QOE_H_
