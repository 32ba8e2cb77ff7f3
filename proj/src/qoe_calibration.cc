#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "abrsim/error.h"
#include "abrsim/qoe.h"

namespace abrsim {
namespace {

std::vector<double*> CoefficientSlots(std::string_view id, QoeParams& p) {
  if (id == "yin2015") return {&p.yin2015.lambda, &p.yin2015.mu, &p.yin2015.mu_startup};
  if (id == "bentaleb2016") {
    return {&p.bentaleb2016.lambda, &p.bentaleb2016.mu, &p.bentaleb2016.mu_startup};
  }
  if (id == "ftw") return {&p.ftw.a, &p.ftw.b_len, &p.ftw.b_cnt, &p.ftw.c};
  if (id == "mok2011") {
    return {&p.mok2011.intercept, &p.mok2011.w_init, &p.mok2011.w_freq,
            &p.mok2011.w_dur};
  }
  if (id == "liu2012") return {&p.liu2012.c1, &p.liu2012.c2};
  if (id == "xue2014") return {&p.xue2014.stall_weight};
  if (id == "spiteri2016") return {&p.spiteri2016.stall_weight};
  if (id == "sqi") return {&p.sqi.u0, &p.sqi.u1};
  if (id == "ksqi") {
    return {&p.ksqi.c0, &p.ksqi.c1, &p.ksqi.c2, &p.ksqi.beta_neg, &p.ksqi.beta_pos};
  }
  throw Error("unknown QoE model '" + std::string(id) + "'");
}

// Residual sum of squares of the least-squares line mos ~ a * score + b.
double AffineSse(std::span<const double> score, std::span<const double> mos) {
  const auto n = static_cast<double>(score.size());
  const double ms = std::accumulate(score.begin(), score.end(), 0.0) / n;
  const double mm = std::accumulate(mos.begin(), mos.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < score.size(); ++i) {
    sxx += (score[i] - ms) * (score[i] - ms);
    sxy += (score[i] - ms) * (mos[i] - mm);
    syy += (mos[i] - mm) * (mos[i] - mm);
  }
  if (sxx <= 0.0) return syy;
  return std::max(0.0, syy - sxy * sxy / sxx);
}

}  // namespace

std::vector<double> GetCoefficients(std::string_view model_id,
                                    const QoeParams& params) {
  QoeParams copy = params;
  std::vector<double> out;
  for (double* slot : CoefficientSlots(model_id, copy)) out.push_back(*slot);
  return out;
}

void SetCoefficients(std::string_view model_id, std::span<const double> values,
                     QoeParams& params) {
  auto slots = CoefficientSlots(model_id, params);
  if (slots.size() != values.size()) {
    throw Error("coefficient count mismatch for " + std::string(model_id));
  }
  for (size_t i = 0; i < slots.size(); ++i) *slots[i] = values[i];
}

CalibrationResult Calibrate(std::string_view model_id,
                            std::span<const SessionRecord> records,
                            std::span<const double> mos,
                            const QoeParams& initial,
                            const CalibrationOptions& options) {
  if (records.size() != mos.size()) throw Error("records and MOS differ in length");
  if (records.size() < 5) throw Error("calibration needs at least 5 records");
  if (!(options.train_fraction > 0.0 && options.train_fraction <= 1.0)) {
    throw Error("train_fraction must be in (0, 1]");
  }
  initial.Validate();

  CalibrationResult result;
  std::vector<size_t> order(records.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::max<size_t>(
      3, static_cast<size_t>(std::llround(options.train_fraction * records.size())));
  result.train_indices.assign(order.begin(), order.begin() + std::min(n_train, order.size()));
  result.validation_indices.assign(order.begin() + result.train_indices.size(), order.end());

  auto sse = [&](const QoeParams& p, const std::vector<size_t>& idx) {
    std::vector<double> s, m;
    for (size_t i : idx) {
      s.push_back(Evaluate(model_id, records[i], p).value);
      m.push_back(mos[i]);
    }
    return AffineSse(s, m);
  };

  QoeParams best = initial;
  double best_sse = sse(best, result.train_indices);
  std::vector<double> coeffs = GetCoefficients(model_id, best);
  std::vector<double> steps(coeffs.size());
  for (size_t i = 0; i < coeffs.size(); ++i) {
    steps[i] = options.initial_step * std::max(std::abs(coeffs[i]), 1.0);
  }

  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    bool improved = false;
    for (size_t i = 0; i < coeffs.size(); ++i) {
      for (double dir : {1.0, -1.0}) {
        std::vector<double> trial = coeffs;
        trial[i] += dir * steps[i];
        QoeParams candidate = best;
        SetCoefficients(model_id, trial, candidate);
        try {
          candidate.Validate();
        } catch (const Error&) {
          continue;
        }
        double value = 0.0;
        try {
          value = sse(candidate, result.train_indices);
        } catch (const Error&) {
          continue;
        }
        if (value < best_sse) {
          best_sse = value;
          best = candidate;
          coeffs = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) {
      bool all_small = true;
      for (size_t i = 0; i < steps.size(); ++i) {
        steps[i] *= 0.5;
        if (steps[i] > options.min_step * std::max(std::abs(coeffs[i]), 1.0)) {
          all_small = false;
        }
      }
      if (all_small) break;
    }
  }

  result.params = best;
  result.train_rmse = std::sqrt(best_sse / result.train_indices.size());
  if (result.validation_indices.size() >= 2) {
    result.validation_rmse =
        std::sqrt(sse(best, result.validation_indices) / result.validation_indices.size());
  }
  return result;
}

}  // namespace abrsim
