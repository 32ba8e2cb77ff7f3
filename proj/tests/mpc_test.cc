#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "abrsim/error.h"
#include "abrsim/mpc.h"
#include "abrsim/simulator.h"
#include "test_support.h"

namespace abrsim {
namespace {

struct StateFixture {
  Manifest manifest = SyntheticManifest(20, DefaultLadder());
  std::vector<double> history;
  AbrState state;

  StateFixture(int next_chunk, double buffer, int last_rep, double tput) {
    history.assign(3, tput);
    state.manifest = &manifest;
    state.next_chunk = next_chunk;
    state.buffer_s = buffer;
    state.last_rep = last_rep;
    state.throughput_history_kbps = history;
  }
};

TEST(MpcObjective, ConstantChoicesAmpleBuffer) {
  StateFixture f(2, 30.0, 5, 50000.0);
  const std::vector<int> choices(5, 5);
  const double expected = 5 * 1.05;
  EXPECT_NEAR(MpcObjective(choices, f.state, 50000.0, {}), expected, 1e-12);
}

TEST(MpcObjective, HandValueWithSwitches) {
  StateFixture f(2, 30.0, 5, 1750.0);
  MpcObjectiveParams p;
  p.horizon = 3;
  const std::vector<int> choices = {5, 6, 5};
  ASSERT_DOUBLE_EQ(f.manifest.nominal_kbps(5), 1050.0);
  ASSERT_DOUBLE_EQ(f.manifest.nominal_kbps(6), 1750.0);
  EXPECT_NEAR(MpcObjective(choices, f.state, 1750.0, p), 2.45, 1e-12);
}

TEST(MpcObjective, LowerPredictionNeverHelps) {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> rep(1, 13);
  std::uniform_real_distribution<double> tput(100.0, 20000.0), buf(0.0, 60.0);
  for (int i = 0; i < 500; ++i) {
    StateFixture f(3, buf(rng), rep(rng), 1000.0);
    std::vector<int> choices(5);
    for (auto& c : choices) c = rep(rng);
    double a = tput(rng), b = tput(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(MpcObjective(choices, f.state, a, {}), MpcObjective(choices, f.state, b, {}) + 1e-12);
  }
}

TEST(MpcObjective, WrongLengthIsAnError) {
  StateFixture f(0, 10.0, 1, 1000.0);
  EXPECT_THROW(MpcObjective(std::vector<int>{1, 2}, f.state, 1000.0, {}), Error);
}

TEST(MpcSelectExact, HorizonOneHandCase) {
  StateFixture f(0, 1000.0, 5, 3000.0);
  MpcObjectiveParams p;
  p.horizon = 1;
  f.state.max_buffer_s = 2000.0;
  // Ample buffer: value is R - |R - 1.05| per rung, which is 1.05 (up to
  // rounding) for every rung at or above 5 and smaller below.
  const auto value = [&](int r) {
    const double R = f.manifest.nominal_kbps(r) / 1000.0;
    return R - std::abs(R - 1.05);
  };
  const int got = MpcSelectExact(f.state, p);
  EXPECT_GE(got, 5);
  EXPECT_NEAR(value(got), 1.05, 1e-12);
  for (int r = 1; r < 5; ++r) EXPECT_LT(value(r), 1.05 - 0.1);
}

TEST(MpcSelectExact, HorizonTruncatesAtEnd) {
  StateFixture f(18, 10.0, 5, 3000.0);
  const auto pr = MakeMpcProblem(f.state, {}, 3000.0);
  EXPECT_EQ(pr.horizon(), 2);
}

TEST(SolveMpc, AgreesWithEnumeration) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> rep(1, 13), horizon(1, 3);
  std::uniform_real_distribution<double> tput(100.0, 25000.0), buf(0.0, 60.0);
  std::uniform_real_distribution<double> lam(0.0, 3.0), mu(0.0, 30.0);
  for (int i = 0; i < 300; ++i) {
    const Manifest m = testing::JitteredManifest(rng, 10);
    std::vector<double> h = {tput(rng), tput(rng)};
    AbrState s;
    s.manifest = &m;
    s.next_chunk = i % 10;
    s.buffer_s = buf(rng);
    s.last_rep = rep(rng);
    s.throughput_history_kbps = h;
    MpcObjectiveParams p;
    p.horizon = horizon(rng);
    p.lambda_switch = lam(rng);
    p.mu_rebuf = mu(rng);
    p.exact_future_sizes = i % 2 == 0;
    const auto pr = MakeMpcProblem(s, p, HarmonicMeanPredict(h));
    const auto oracle = testing::EnumerateAll(13, pr.horizon(), [&](const std::vector<int>& q) {
      return testing::OracleMpcScore(q, pr, p.lambda_switch, p.mu_rebuf);
    });
    const auto sol = SolveMpc(pr, p);
    EXPECT_NEAR(sol.score, oracle.best, 1e-9 * std::max(1.0, std::abs(oracle.best)));
    EXPECT_NE(std::find(oracle.near_best_first.begin(), oracle.near_best_first.end(),
                        sol.choices.front()),
              oracle.near_best_first.end());
    EXPECT_EQ(MpcSelectExact(s, p), sol.choices.front());
  }
}

MpcTableSpec SmallSpec() {
  MpcTableSpec spec;
  spec.binning = {12, 20000.0, 9, 60.0};
  spec.bitrates_kbps = testing::LadderKbps();
  return spec;
}

TEST(Table, SmallTableMatchesEnumerationEverywhere) {
  const auto spec = SmallSpec();
  const LookupTable t = BuildMpcTable(spec, 2);
  ASSERT_EQ(t.cell_count(), 12u * 9u * 13u);
  for (int a = 0; a < 12; ++a) {
    for (int b = 0; b < 9; ++b) {
      for (int prev = 1; prev <= 13; ++prev) {
        const auto pr = TableCellProblem(spec, a, b, prev);
        const auto oracle = testing::EnumerateAll(13, 5, [&](const std::vector<int>& q) {
          return testing::OracleMpcScore(q, pr, 1.0, 16.8);
        });
        const int got = t.At(a, b, prev);
        EXPECT_NE(std::find(oracle.near_best_first.begin(), oracle.near_best_first.end(), got),
                  oracle.near_best_first.end())
            << a << "," << b << "," << prev;
      }
    }
  }
}

TEST(Table, CornerCells) {
  const LookupTable t = BuildMpcTable(SmallSpec(), 1);
  EXPECT_EQ(t.At(11, 8, 13), 13);
  for (int prev = 1; prev <= 13; ++prev) EXPECT_LE(t.At(0, 0, prev), t.At(11, 8, prev));
}

TEST(Table, SerializeRoundTripAndThreadCountInvariance) {
  const auto spec = SmallSpec();
  const LookupTable one = BuildMpcTable(spec, 1);
  const LookupTable three = BuildMpcTable(spec, 3);
  EXPECT_EQ(one, three);
  const std::string text = SerializeTable(one);
  EXPECT_EQ(text.rfind("abrsim-mpc-table 1\n", 0), 0u);
  EXPECT_EQ(ParseTable(text), one);
  EXPECT_EQ(SerializeTable(ParseTable(text)), text);
  EXPECT_THROW(ParseTable("garbage"), Error);
}

TEST(Table, MalformedBinningIsRejected) {
  auto spec = SmallSpec();
  spec.binning.tput_bins = 0;
  EXPECT_THROW(BuildMpcTable(spec), Error);
  spec = SmallSpec();
  spec.binning.max_buffer_s = -1.0;
  EXPECT_THROW(BuildMpcTable(spec), Error);
}

TEST(Table, OnlineLookupAtBinCentersAndClamping) {
  const auto spec = SmallSpec();
  const LookupTable t = BuildMpcTable(spec, 1);
  const Manifest m = SyntheticManifest(20, DefaultLadder());
  for (int a = 0; a < 12; a += 3) {
    for (int b = 0; b < 9; b += 2) {
      for (int prev : {1, 7, 13}) {
        std::vector<double> h(4, t.TputCenter(a));
        AbrState s;
        s.manifest = &m;
        s.next_chunk = 3;
        s.buffer_s = t.BufferCenter(b);
        s.last_rep = prev;
        s.throughput_history_kbps = h;
        EXPECT_EQ(MpcSelectTable(s, t), MpcSelectExact(s, spec.params));
      }
    }
  }
  EXPECT_EQ(t.TputBin(1e9), 11);
  EXPECT_EQ(t.BufferBin(0.0), 0);
  EXPECT_EQ(t.BufferBin(1e9), 8);
}

TEST(Clairvoyant, ValidAndNoWorseThanBlindOnKnownTrace) {
  std::mt19937_64 rng(23);
  SyntheticTraceSpec ts;
  ts.duration_s = 200.0;
  int better_or_equal = 0;
  for (int i = 0; i < 4; ++i) {
    const Trace trace = SyntheticTrace(ts, 100 + i);
    const Manifest m = SyntheticManifest(15, DefaultLadder());
    PlayerConfig cfg;
    const ClairvoyantMpcPolicy clair(trace, cfg.channel);
    const auto log = RunSession(m, trace, clair, cfg);
    for (int r : log.choices) EXPECT_TRUE(m.valid_rep(r));
    const auto blind = RunSession(m, trace, MpcPolicy(), cfg);
    const auto total = [&](const SessionLog& l) {
      double v = 0.0, stall = 0.0;
      for (size_t k = 1; k < l.choices.size(); ++k) {
        v += m.nominal_kbps(l.choices[k]) / 1000.0 -
             std::abs(m.nominal_kbps(l.choices[k]) - m.nominal_kbps(l.choices[k - 1])) / 1000.0;
      }
      for (const auto& s : l.stalls) stall += s.duration_s;
      return v - 16.8 * stall;
    };
    if (total(log) >= total(blind) - 1e-9) ++better_or_equal;
  }
  EXPECT_GE(better_or_equal, 3);
}

}  // namespace
}  // namespace abrsim
