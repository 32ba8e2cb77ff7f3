#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "abrsim/abr.h"
#include "abrsim/error.h"
#include "abrsim/mpc.h"
#include "abrsim/rdos.h"
#include "test_support.h"

namespace abrsim {
namespace {

TEST(Predictors, ArithmeticMean) {
  const std::vector<double> constant(5, 1000.0);
  EXPECT_DOUBLE_EQ(ArithmeticMeanPredict(constant), 1000.0);
  EXPECT_DOUBLE_EQ(ArithmeticMeanPredict(std::vector<double>{1000, 2000}), 1500.0);
  const std::vector<double> seven = {9e9, 9e9, 1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(ArithmeticMeanPredict(seven), 3.0);
  EXPECT_THROW(ArithmeticMeanPredict(std::vector<double>{}), Error);
}

TEST(Predictors, HarmonicMean) {
  for (double c : {0.1, 777.0, 12345.678}) {
    EXPECT_EQ(HarmonicMeanPredict(std::vector<double>(4, c)), c);
  }
  EXPECT_NEAR(HarmonicMeanPredict(std::vector<double>{1000, 2000}), 4000.0 / 3.0, 1e-9);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(10.0, 1e5);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> h(1 + i % 9);
    for (auto& x : h) x = u(rng);
    EXPECT_LE(HarmonicMeanPredict(h), ArithmeticMeanPredict(h) * (1 + 1e-12));
  }
}

TEST(RateBased, HandValues) {
  const auto ladder = DefaultLadder();
  EXPECT_EQ(RateBasedSelect(ladder, 3000.0), 7);
  EXPECT_EQ(RateBasedSelect(ladder, 100.0), 1);
  EXPECT_EQ(RateBasedSelect(ladder, 1e9), 13);
  EXPECT_EQ(RateBasedSelect(ladder, 3000.0, false), 8);
}

TEST(BufferBased, HandValues) {
  const auto ladder = DefaultLadder();
  EXPECT_EQ(BufferBasedSelect(5.0, ladder), 1);
  EXPECT_EQ(BufferBasedSelect(15.0, ladder), 13);
  EXPECT_EQ(BufferBasedSelect(10.0, ladder), 11);
  EXPECT_EQ(BufferBasedSelect(0.0, ladder), 1);
  EXPECT_EQ(BufferBasedSelect(100.0, ladder), 13);
}

TEST(RateAndBufferBased, Monotone) {
  const auto ladder = DefaultLadder();
  int prev_rb = 1, prev_bb = 1;
  for (double x = 0.0; x < 30000.0; x += 7.3) {
    const int rb = RateBasedSelect(ladder, x + 1.0);
    EXPECT_GE(rb, prev_rb);
    prev_rb = rb;
    const int bb = BufferBasedSelect(x / 1000.0, ladder);
    EXPECT_GE(bb, prev_bb);
    prev_bb = bb;
  }
}

TEST(RateAndBufferBased, ScaleInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> k(0.1, 10.0), x(10.0, 40000.0), b(0.0, 20.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = k(rng);
    auto scaled = DefaultLadder();
    for (auto& r : scaled) r.bitrate_kbps *= s;
    const double pred = x(rng);
    EXPECT_EQ(RateBasedSelect(scaled, pred * s), RateBasedSelect(DefaultLadder(), pred));
    const double buf = b(rng);
    EXPECT_EQ(BufferBasedSelect(buf, scaled), BufferBasedSelect(buf, DefaultLadder()));
  }
}

TEST(Selectors, ValidIndicesOnFuzzedStates) {
  std::mt19937_64 rng(8);
  const Manifest m = testing::JitteredManifest(rng, 12);
  std::uniform_int_distribution<int> chunk(0, 11), rep(1, 13), hist(1, 8);
  std::uniform_real_distribution<double> buf(0.0, 60.0), tput(1.0, 50000.0);
  MpcObjectiveParams mp;
  mp.horizon = 2;
  RdosParams rp;
  rp.horizon = 2;
  const MpcPolicy mpc(mp);
  const RdosPolicy rdos(rp);
  const RateBasedPolicy rb;
  const BufferBasedPolicy bb;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> h(hist(rng));
    for (auto& v : h) v = tput(rng);
    AbrState s;
    s.next_chunk = chunk(rng);
    s.buffer_s = buf(rng);
    s.last_rep = rep(rng);
    s.throughput_history_kbps = h;
    s.manifest = &m;
    for (const AbrPolicy* p : std::initializer_list<const AbrPolicy*>{&mpc, &rdos, &rb, &bb}) {
      const int r = p->Select(s);
      EXPECT_TRUE(m.valid_rep(r)) << p->name();
    }
  }
}

TEST(State, ValidationErrors) {
  const Manifest m = SyntheticManifest(3, DefaultLadder());
  const std::vector<double> h = {1000.0};
  AbrState s;
  s.manifest = &m;
  s.throughput_history_kbps = h;
  EXPECT_NO_THROW(ValidateState(s));
  s.buffer_s = -1.0;
  EXPECT_THROW(ValidateState(s), Error);
  s.buffer_s = 0.0;
  s.last_rep = 0;
  EXPECT_THROW(ValidateState(s), Error);
  s.last_rep = 1;
  s.next_chunk = 3;
  EXPECT_THROW(ValidateState(s), Error);
}

TEST(External, StateDocumentAndCommand) {
  const Manifest m = SyntheticManifest(3, DefaultLadder());
  const std::vector<double> h = {1000.0, 2000.0};
  AbrState s;
  s.manifest = &m;
  s.next_chunk = 1;
  s.buffer_s = 3.5;
  s.throughput_history_kbps = h;
  const auto doc = nlohmann::json::parse(AbrStateToJson(s));
  EXPECT_EQ(doc.at("next_chunk").get<int>(), 1);
  EXPECT_DOUBLE_EQ(doc.at("buffer_s").get<double>(), 3.5);
  EXPECT_EQ(ExternalPolicy("echo 4 #").Select(s), 4);
  EXPECT_THROW(ExternalPolicy("echo 99 #").Select(s), Error);
  EXPECT_THROW(ExternalPolicy("false").Select(s), Error);
}

}  // namespace
}  // namespace abrsim
