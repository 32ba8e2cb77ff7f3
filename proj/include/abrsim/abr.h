#ifndef ABRSIM_ABR_H_
#define ABRSIM_ABR_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "abrsim/media.h"

namespace abrsim {

// Everything a policy may look at when picking the next chunk.
struct AbrState {
  int next_chunk = 0;  // 0-based index of the chunk about to be requested
  double buffer_s = 0.0;
  int last_rep = 1;
  // Per-chunk measured throughput (size / transfer time), most recent last.
  std::span<const double> throughput_history_kbps;
  const Manifest* manifest = nullptr;
  double wall_time_s = 0.0;
  double rtt_s = 0.08;
  double max_buffer_s = 60.0;
};

// Throws abrsim::Error if the state is unusable by the selectors.
void ValidateState(const AbrState& state);

double ArithmeticMeanPredict(std::span<const double> history, int window = 5);
double HarmonicMeanPredict(std::span<const double> history, int window = 5);

// Largest ladder index whose bitrate is below `predicted_kbps` (strictly
// below unless `strict` is false); index 1 if none qualifies.
int RateBasedSelect(std::span<const Representation> ladder,
                    double predicted_kbps, bool strict = true);
int RateBasedSelect(const AbrState& state, bool strict = true);

// Reservoir/cushion rate map interpolating linearly in bitrate.
int BufferBasedSelect(double buffer_s, std::span<const Representation> ladder,
                      double reservoir_s = 5.0, double cushion_s = 10.0);

class AbrPolicy {
 public:
  virtual ~AbrPolicy() = default;
  virtual std::string name() const = 0;
  // Returns a valid 1-based ladder index for state.next_chunk.
  virtual int Select(const AbrState& state) const = 0;
};

class FixedPolicy : public AbrPolicy {
 public:
  explicit FixedPolicy(int rep) : rep_(rep) {}
  std::string name() const override { return "fixed"; }
  int Select(const AbrState&) const override { return rep_; }

 private:
  int rep_;
};

class RateBasedPolicy : public AbrPolicy {
 public:
  explicit RateBasedPolicy(bool strict = true) : strict_(strict) {}
  std::string name() const override { return "rb"; }
  int Select(const AbrState& state) const override {
    return RateBasedSelect(state, strict_);
  }

 private:
  bool strict_;
};

class BufferBasedPolicy : public AbrPolicy {
 public:
  BufferBasedPolicy(double reservoir_s = 5.0, double cushion_s = 10.0);
  std::string name() const override { return "bb"; }
  int Select(const AbrState& state) const override;

 private:
  double reservoir_s_;
  double cushion_s_;
};

// Adapter for out-of-process policies (e.g. a trained neural controller).
// Each decision writes the state as JSON to a temporary file, runs
// `command <file>`, and reads a ladder index from the command's stdout.
class ExternalPolicy : public AbrPolicy {
 public:
  explicit ExternalPolicy(std::string command, std::string label = "external")
      : command_(std::move(command)), label_(std::move(label)) {}
  std::string name() const override { return label_; }
  int Select(const AbrState& state) const override;

 private:
  std::string command_;
  std::string label_;
};

// JSON document handed to external policies; see docs/formats.md.
std::string AbrStateToJson(const AbrState& state);

// Runs `command` through the shell and returns its stdout; throws on a
// non-zero exit status.
std::string RunCommand(const std::string& command);

}  // namespace abrsim

#endif  // ABRSIM_ABR_H_
