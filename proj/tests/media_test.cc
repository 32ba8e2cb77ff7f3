#include <algorithm>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "abrsim/error.h"
#include "abrsim/media.h"
#include "test_support.h"

namespace abrsim {
namespace {

TEST(Ladder, EndpointsMatchTheEncodingTable) {
  const auto ladder = DefaultLadder();
  ASSERT_EQ(ladder.size(), 13u);
  EXPECT_EQ(ladder.front(), (Representation{1, 320, 180, 235.0}));
  EXPECT_EQ(ladder.back(), (Representation{13, 3840, 2160, 16800.0}));
  for (size_t i = 1; i < ladder.size(); ++i) {
    EXPECT_GT(ladder[i].bitrate_kbps, ladder[i - 1].bitrate_kbps);
    EXPECT_EQ(ladder[i].index, static_cast<int>(i) + 1);
  }
}

TEST(Ladder, RejectsNonContiguousIndices) {
  std::vector<Representation> ladder = {{1, 10, 10, 100}, {3, 10, 10, 200}};
  EXPECT_THROW(ValidateLadder(ladder), Error);
  ladder = {{1, 10, 10, 200}, {2, 10, 10, 100}};
  EXPECT_THROW(ValidateLadder(ladder), Error);
}

TEST(Manifest, MinimalDocument) {
  const char* text = R"({
    "segment_duration_s": 4,
    "ladder": [{"index": 1, "width": 320, "height": 180, "bitrate_kbps": 235}],
    "segments": [[{"size_bits": 940000, "quality": 40}],
                 [{"size_bits": 900000, "quality": 42}]]
  })";
  const Manifest m = ParseManifest(text);
  EXPECT_EQ(m.segment_count(), 2);
  EXPECT_EQ(m.ladder_size(), 1);
  EXPECT_DOUBLE_EQ(m.segment(1, 1).size_bits, 900000.0);
}

TEST(Manifest, NamedDefaultLadder) {
  auto doc = nlohmann::json::parse(SerializeManifest(SyntheticManifest(2, DefaultLadder())));
  doc["ladder"] = "default";
  EXPECT_EQ(ParseManifest(doc.dump()).ladder(), DefaultLadder());
  doc["ladder"] = "other";
  EXPECT_THROW(ParseManifest(doc.dump()), Error);
}

TEST(Manifest, QualityAboveHundredIsRejected) {
  const char* text = R"({
    "segment_duration_s": 4,
    "ladder": [{"index": 1, "width": 320, "height": 180, "bitrate_kbps": 235}],
    "segments": [[{"size_bits": 940000, "quality": 101}]]
  })";
  EXPECT_THROW(ParseManifest(text), Error);
}

TEST(Manifest, RaggedRowIsRejected) {
  auto ladder = DefaultLadder();
  std::vector<std::vector<SegmentInfo>> rows(1, std::vector<SegmentInfo>(12, {1000.0, 50.0}));
  EXPECT_THROW(Manifest(4.0, ladder, rows), Error);
}

TEST(Manifest, SyntheticRoundTrip) {
  const Manifest m = SyntheticManifest(8, DefaultLadder());
  EXPECT_EQ(m.segment_count(), 8);
  EXPECT_EQ(m.ladder_size(), 13);
  const Manifest again = ParseManifest(SerializeManifest(m));
  EXPECT_EQ(again, m);
}

TEST(Manifest, RoundTripIsBitExactForRandomValues) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Manifest m = testing::JitteredManifest(rng, 1 + trial % 9, 1.0 + (trial % 4) * 1.37);
    const Manifest once = ParseManifest(SerializeManifest(m));
    EXPECT_EQ(once, m);
    EXPECT_EQ(ParseManifest(SerializeManifest(once)), once);
  }
}

TEST(AverageBitrate, ConstantAtLowestRung) {
  const Manifest m = SyntheticManifest(5, DefaultLadder());
  const std::vector<int> choices(5, 1);
  EXPECT_DOUBLE_EQ(AverageBitrateKbps(m, choices), 235.0);
}

TEST(AverageBitrate, TwoSegmentsHandValue) {
  std::vector<Representation> ladder = {{1, 320, 180, 235.0}};
  const Manifest m(4.0, ladder, {{{1e6, 50.0}}, {{3e6, 50.0}}});
  const std::vector<int> choices = {1, 1};
  EXPECT_DOUBLE_EQ(AverageBitrateKbps(m, choices), 500.0);
}

TEST(AverageBitrate, SingleSegment) {
  std::vector<Representation> ladder = {{1, 320, 180, 235.0}};
  const Manifest m(2.0, ladder, {{{123456.0, 50.0}}});
  const std::vector<int> choices = {1};
  EXPECT_DOUBLE_EQ(AverageBitrateKbps(m, choices), 123456.0 / 2.0 / 1000.0);
}

TEST(AverageBitrate, RejectsInvalidChoices) {
  const Manifest m = SyntheticManifest(2, DefaultLadder());
  const std::vector<int> bad = {1, 14};
  EXPECT_THROW(AverageBitrateKbps(m, bad), Error);
  EXPECT_THROW(AverageBitrateKbps(m, std::vector<int>{}), Error);
}

TEST(AverageBitrate, PermutationAndScaling) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Manifest m = testing::JitteredManifest(rng, 6);
    std::vector<int> choices(6);
    std::uniform_int_distribution<int> pick(1, 13);
    for (auto& c : choices) c = pick(rng);
    const double base = AverageBitrateKbps(m, choices);

    // Permute segments together with their choices.
    std::vector<int> order = {0, 1, 2, 3, 4, 5};
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<SegmentInfo>> rows;
    std::vector<int> permuted;
    for (int k : order) {
      rows.push_back(m.segments()[k]);
      permuted.push_back(choices[k]);
    }
    const Manifest shuffled(m.segment_duration_s(), m.ladder(), rows);
    EXPECT_NEAR(AverageBitrateKbps(shuffled, permuted), base, 1e-9 * base);

    auto scaled_rows = m.segments();
    for (auto& row : scaled_rows) {
      for (auto& cell : row) cell.size_bits *= 2.5;
    }
    const Manifest scaled(m.segment_duration_s(), m.ladder(), scaled_rows);
    EXPECT_NEAR(AverageBitrateKbps(scaled, choices), 2.5 * base, 1e-9 * base);
  }
}

}  // namespace
}  // namespace abrsim
