#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "abrsim/abr.h"
#include "abrsim/error.h"
#include "abrsim/simulator.h"
#include "test_support.h"

namespace abrsim {
namespace {

class ScriptedPolicy : public AbrPolicy {
 public:
  explicit ScriptedPolicy(std::vector<int> reps) : reps_(std::move(reps)) {}
  std::string name() const override { return "scripted"; }
  int Select(const AbrState& s) const override { return reps_[s.next_chunk]; }

 private:
  std::vector<int> reps_;
};

Trace Constant(double kbps) { return Trace({{0.0, kbps}}, 60.0); }

TEST(BufferStep, HandValues) {
  EXPECT_EQ(BufferStep(8, 3, 4, 60), (BufferStepResult{9, 0, 0}));
  EXPECT_EQ(BufferStep(2, 3, 4, 60), (BufferStepResult{4, 1, 0}));
  for (double t : {0.0, 0.5, 7.0}) {
    EXPECT_EQ(BufferStep(0, t, 4, 60), (BufferStepResult{4, t, 0}));
  }
  EXPECT_EQ(BufferStep(59, 1, 4, 60), (BufferStepResult{60, 0, 2}));
}

TEST(RunSession, UnconstrainedChannel) {
  const Manifest m = SyntheticManifest(10, DefaultLadder());
  PlayerConfig cfg;
  const auto log = RunSession(m, Constant(100000.0), RateBasedPolicy(), cfg);
  EXPECT_TRUE(log.stalls.empty());
  EXPECT_NEAR(log.startup_delay_s, 0.08 + 940000.0 / 1e8, 1e-12);
}

TEST(RunSession, ThreeChunkHandSession) {
  std::vector<Representation> ladder = {{1, 320, 180, 235.0}};
  const Manifest m(4.0, ladder, std::vector<std::vector<SegmentInfo>>(3, {{940000.0, 40.0}}));
  PlayerConfig cfg;
  const auto log = RunSession(m, Constant(1000.0), FixedPolicy(1), cfg);
  EXPECT_NEAR(log.startup_delay_s, 1.02, 1e-12);
  EXPECT_TRUE(log.stalls.empty());
  EXPECT_NEAR(log.buffer_levels_s.back(), 9.96, 1e-12);
}

TEST(RunSession, TopRungOnSlowLinkStallsEveryChunk) {
  const Manifest m = SyntheticManifest(4, DefaultLadder());
  PlayerConfig cfg;
  cfg.initial_rep = 13;
  const auto log = RunSession(m, Constant(300.0), FixedPolicy(13), cfg);
  const double dl = 0.08 + 16800.0 * 4.0 / 300.0;
  ASSERT_EQ(log.stalls.size(), 3u);
  double buffer = 4.0;
  for (int k = 1; k < 4; ++k) {
    const double stall = std::max(0.0, dl - buffer);
    buffer = std::max(0.0, buffer - dl) + 4.0;
    EXPECT_NEAR(log.stalls[k - 1].duration_s, stall, 1e-9);
    EXPECT_DOUBLE_EQ(log.stalls[k - 1].position_s, 4.0 * k);
  }
}

TEST(RunSession, RejectsBadConfig) {
  const Manifest m = SyntheticManifest(4, DefaultLadder());
  PlayerConfig cfg;
  cfg.max_buffer_s = 7.0;
  EXPECT_THROW(RunSession(m, Constant(1000.0), FixedPolicy(1), cfg), Error);
  cfg = {};
  cfg.initial_rep = 14;
  EXPECT_THROW(RunSession(m, Constant(1000.0), FixedPolicy(1), cfg), Error);
  cfg = {};
  EXPECT_THROW(RunSession(m, Constant(1000.0), FixedPolicy(0), cfg), Error);
}

TEST(ToRecord, DropsFirstChunk) {
  const Manifest m = SyntheticManifest(8, DefaultLadder());
  PlayerConfig cfg;
  const auto log = RunSession(m, Constant(3000.0), RateBasedPolicy(), cfg);
  const auto rec = ToRecord(log, m, cfg);
  EXPECT_EQ(rec.size(), 7u);
  EXPECT_DOUBLE_EQ(rec.startup_delay_s, 0.0);
  EXPECT_DOUBLE_EQ(rec.min_bitrate_kbps, 235.0);
}

TEST(ToRecord, IdentityWithoutTrimming) {
  const Manifest m = SyntheticManifest(8, DefaultLadder());
  PlayerConfig cfg;
  cfg.drop_first_chunk = false;
  const auto log = RunSession(m, Constant(700.0), FixedPolicy(5), cfg);
  const auto rec = ToRecord(log, m, cfg);
  ASSERT_EQ(rec.size(), 8u);
  EXPECT_DOUBLE_EQ(rec.startup_delay_s, log.startup_delay_s);
  EXPECT_EQ(rec.stalls, log.stalls);
  for (int k = 0; k < 8; ++k) {
    EXPECT_DOUBLE_EQ(rec.qualities[k], m.segment(k, log.choices[k]).quality);
    EXPECT_DOUBLE_EQ(rec.bitrates_kbps[k], m.actual_kbps(k, log.choices[k]));
  }
}

TEST(ToRecord, StallPositionShiftsByOneSegment) {
  const Manifest m = SyntheticManifest(3, DefaultLadder());
  SessionLog log;
  log.choices = {1, 1, 1};
  log.stalls = {{6.0, 1.5}};
  PlayerConfig cfg;
  const auto rec = ToRecord(log, m, cfg);
  ASSERT_EQ(rec.stalls.size(), 1u);
  EXPECT_DOUBLE_EQ(rec.stalls[0].position_s, 2.0);
}

TEST(SessionLog, JsonRoundTrip) {
  const Manifest m = SyntheticManifest(6, DefaultLadder());
  const auto log = RunSession(m, Constant(900.0), RateBasedPolicy(), PlayerConfig{});
  EXPECT_EQ(SessionLogFromJson(SessionLogToJson(log)), log);
  const auto rec = ToRecord(log, m, PlayerConfig{});
  EXPECT_EQ(SessionRecordFromJson(SessionRecordToJson(rec)), rec);
}

struct RandomSession {
  Manifest manifest;
  Trace trace;
  std::vector<int> reps;
  PlayerConfig config;
};

RandomSession MakeRandomSession(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> segs(2, 30), rep(1, 13);
  std::uniform_real_distribution<double> cap(8.0, 40.0);
  RandomSession s{testing::JitteredManifest(rng, segs(rng)), testing::RandomMsTrace(rng), {}, {}};
  for (int k = 0; k < s.manifest.segment_count(); ++k) s.reps.push_back(rep(rng));
  s.config.max_buffer_s = cap(rng);
  s.config.initial_rep = s.reps[0];
  return s;
}

TEST(RunSession, WallTimeIdentityAndBufferBounds) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = MakeRandomSession(rng);
    const auto log = RunSession(s.manifest, s.trace, ScriptedPolicy(s.reps), s.config);
    double stalls = 0.0;
    for (const auto& st : log.stalls) stalls += st.duration_s;
    const double played = s.manifest.segment_count() * s.manifest.segment_duration_s();
    EXPECT_NEAR(log.startup_delay_s + played + stalls, log.total_wall_time_s, 1e-9);
    for (double b : log.buffer_levels_s) {
      EXPECT_GE(b, 0.0);
      EXPECT_LE(b, s.config.max_buffer_s);
    }
  }
}

TEST(RunSession, Deterministic) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = MakeRandomSession(rng);
    EXPECT_EQ(RunSession(s.manifest, s.trace, RateBasedPolicy(), s.config),
              RunSession(s.manifest, s.trace, RateBasedPolicy(), s.config));
  }
}

TEST(RunSession, FasterChannelNeverAddsStall) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> boost(1.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = MakeRandomSession(rng);
    auto samples = s.trace.samples();
    for (auto& x : samples) x.bandwidth_kbps *= boost(rng);
    const Trace faster(samples, s.trace.duration_s());
    const auto total = [](const SessionLog& log) {
      double t = 0.0;
      for (const auto& st : log.stalls) t += st.duration_s;
      return t;
    };
    const ScriptedPolicy p(s.reps);
    EXPECT_LE(total(RunSession(s.manifest, faster, p, s.config)),
              total(RunSession(s.manifest, s.trace, p, s.config)) + 1e-9);
  }
}

}  // namespace
}  // namespace abrsim
