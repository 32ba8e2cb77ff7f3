#ifndef ABRSIM_RDOS_H_
#define ABRSIM_RDOS_H_

#include <span>
#include <string>

#include "abrsim/abr.h"
#include "abrsim/qoe.h"

namespace abrsim {

// Quality-driven planner: maximises the KSQI-style score of the predicted
// horizon minus gamma_rate * (sum of chosen bitrates in Mb/s).
struct RdosParams {
  KsqiParams ksqi;
  double gamma_rate = 0.05;  // per Mb/s
  int horizon = 5;
  bool exact_future_sizes = false;

  void Validate() const;
};

// The horizon record scored by the planner: the previously fetched chunk (if
// any) followed by the candidate chunks, with stalls predicted by the buffer
// recursion under `predicted_kbps`.
SessionRecord RdosHorizonRecord(std::span<const int> choices,
                                const AbrState& state, double predicted_kbps,
                                const RdosParams& params);

double RdosObjective(std::span<const int> choices, const AbrState& state,
                     double predicted_kbps, const RdosParams& params);

// First element of the lexicographically smallest maximiser over all
// ladder^horizon sequences, under the harmonic-mean prediction.
int RdosSelect(const AbrState& state, const RdosParams& params);

class RdosPolicy : public AbrPolicy {
 public:
  explicit RdosPolicy(RdosParams params = {});
  std::string name() const override { return "rdos"; }
  int Select(const AbrState& state) const override;

 private:
  RdosParams params_;
};

}  // namespace abrsim

#endif  // ABRSIM_RDOS_H_
