#ifndef ABRSIM_MPC_H_
#define ABRSIM_MPC_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abrsim/abr.h"
#include "abrsim/nettrace.h"

namespace abrsim {

// Bitrate-centric horizon objective:
//   sum R/1000 - lambda_switch * sum |dR|/1000 - mu_rebuf * predicted stall s
struct MpcObjectiveParams {
  double lambda_switch = 1.0;
  double mu_rebuf = 16.8;
  int horizon = 5;
  // Use the manifest's real future sizes instead of nominal bitrate x
  // duration.
  bool exact_future_sizes = false;

  void Validate() const;
  bool operator==(const MpcObjectiveParams&) const = default;
};

// A single receding-horizon decision problem with a fixed throughput
// prediction. stage_sizes_bits[k][r-1] is the size of horizon chunk k at
// ladder index r.
struct MpcProblem {
  std::vector<double> bitrates_kbps;
  std::vector<std::vector<double>> stage_sizes_bits;
  double segment_duration_s = 4.0;
  double rtt_s = 0.08;
  double max_buffer_s = 60.0;
  double buffer_s = 0.0;
  int last_rep = 1;
  double predicted_kbps = 0.0;

  int horizon() const { return static_cast<int>(stage_sizes_bits.size()); }
  int ladder_size() const { return static_cast<int>(bitrates_kbps.size()); }
};

// Builds the problem seen from `state`: horizon truncated at the end of the
// video, sizes nominal or exact per `params`.
MpcProblem MakeMpcProblem(const AbrState& state, const MpcObjectiveParams& params,
                          double predicted_kbps);

double MpcObjective(std::span<const int> choices, const MpcProblem& problem,
                    const MpcObjectiveParams& params);
double MpcObjective(std::span<const int> choices, const AbrState& state,
                    double predicted_kbps, const MpcObjectiveParams& params);

struct MpcSolution {
  std::vector<int> choices;
  double score = 0.0;
};

// Exact maximiser over all ladder^horizon sequences (branch and bound). Among
// equal scores the lexicographically smallest sequence wins.
MpcSolution SolveMpc(const MpcProblem& problem, const MpcObjectiveParams& params);

// First choice of SolveMpc under the harmonic-mean prediction.
int MpcSelectExact(const AbrState& state, const MpcObjectiveParams& params);

struct MpcBinning {
  int tput_bins = 100;
  double tput_max_kbps = 20000.0;
  int buffer_bins = 100;
  double max_buffer_s = 60.0;

  void Validate() const;
  bool operator==(const MpcBinning&) const = default;
};

// Everything needed to tabulate the controller offline.
struct MpcTableSpec {
  MpcBinning binning;
  MpcObjectiveParams params;
  std::vector<double> bitrates_kbps;
  double segment_duration_s = 4.0;
  double rtt_s = 0.08;

  void Validate() const;
  bool operator==(const MpcTableSpec&) const = default;
};

// FastMPC policy table: entries[(tput_bin * buffer_bins + buffer_bin) *
// ladder_size + (prev_rep - 1)] holds a ladder index.
class LookupTable {
 public:
  LookupTable(MpcTableSpec spec, std::vector<uint8_t> entries);

  const MpcTableSpec& spec() const { return spec_; }
  const std::vector<uint8_t>& entries() const { return entries_; }
  int rep_bins() const { return static_cast<int>(spec_.bitrates_kbps.size()); }
  size_t cell_count() const { return entries_.size(); }

  int TputBin(double kbps) const;
  int BufferBin(double buffer_s) const;
  double TputCenter(int bin) const;
  double BufferCenter(int bin) const;
  int At(int tput_bin, int buffer_bin, int prev_rep) const;

  bool operator==(const LookupTable&) const = default;

 private:
  MpcTableSpec spec_;
  std::vector<uint8_t> entries_;
};

// The decision problem a cell stands for: bin-center throughput and buffer,
// full horizon of nominal-size chunks.
MpcProblem TableCellProblem(const MpcTableSpec& spec, int tput_bin,
                            int buffer_bin, int prev_rep);

// Tabulates every cell, using up to `jobs` threads.
LookupTable BuildMpcTable(const MpcTableSpec& spec, int jobs = 1);

int MpcSelectTable(const AbrState& state, const LookupTable& table);

// Text artifact; see docs/formats.md.
std::string SerializeTable(const LookupTable& table);
LookupTable ParseTable(std::string_view text);

class MpcPolicy : public AbrPolicy {
 public:
  explicit MpcPolicy(MpcObjectiveParams params = {});
  std::string name() const override { return "mpc"; }
  int Select(const AbrState& state) const override;

 private:
  MpcObjectiveParams params_;
};

class FastMpcPolicy : public AbrPolicy {
 public:
  explicit FastMpcPolicy(LookupTable table) : table_(std::move(table)) {}
  std::string name() const override { return "fastmpc"; }
  int Select(const AbrState& state) const override;
  const LookupTable& table() const { return table_; }

 private:
  LookupTable table_;
};

// MPC that knows the true future channel: horizon download times come from
// the trace itself starting at the state's wall-clock time, and chunk sizes
// from the manifest.
class ClairvoyantMpcPolicy : public AbrPolicy {
 public:
  ClairvoyantMpcPolicy(const Trace& trace, ChannelConfig channel,
                       MpcObjectiveParams params = {});
  std::string name() const override { return "mpc_clairvoyant"; }
  int Select(const AbrState& state) const override;

 private:
  const Trace& trace_;
  ChannelConfig channel_;
  MpcObjectiveParams params_;
};

}  // namespace abrsim

#endif  // ABRSIM_MPC_H_
