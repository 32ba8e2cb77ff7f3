#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "abrsim/error.h"
#include "abrsim/stats.h"
#include "test_support.h"

namespace abrsim {
namespace {

using testing::OracleFCdf;
using testing::OracleKendall;
using testing::OraclePearson;
using testing::OracleRanks;
using testing::OracleSpearman;
using testing::OracleWilcoxon;

std::vector<double> RandomVector(std::mt19937_64& rng, int n, bool ties) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_int_distribution<int> small(0, 4);
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? small(rng) : u(rng);
  return v;
}

TEST(Correlation, HandValues) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y, z;
  for (double v : x) {
    y.push_back(2 * v + 1);
    z.push_back(-v);
  }
  EXPECT_NEAR(Plcc(x, y), 1.0, 1e-12);
  EXPECT_NEAR(Plcc(x, z), -1.0, 1e-12);
  const std::vector<double> a = {1, 2, 3, 5}, b = {2, 1, 4, 5};
  // means 2.75 and 3; sxy = 8, sxx = 8.75, syy = 10
  EXPECT_NEAR(Plcc(a, b), 8.0 / std::sqrt(87.5), 1e-12);
  EXPECT_NEAR(Srcc(x, y), 1.0, 1e-12);
  EXPECT_NEAR(Srcc(x, z), -1.0, 1e-12);
  EXPECT_NEAR(Krcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-12);
  EXPECT_NEAR(Krcc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 1.0 / 3.0, 1e-12);
}

TEST(Correlation, TiedRanks) {
  const std::vector<double> x = {1, 1, 2}, y = {3, 4, 5};
  EXPECT_EQ(AverageRanks(x), (std::vector<double>{1.5, 1.5, 3.0}));
  EXPECT_NEAR(Srcc(x, y), OracleSpearman(x, y), 1e-12);
}

TEST(Correlation, RandomAgreementWithOracles) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 300; ++i) {
    const int n = 3 + i % 30;
    const auto x = RandomVector(rng, n, i % 2 == 0);
    auto y = RandomVector(rng, n, i % 3 == 0);
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) continue;
    EXPECT_EQ(AverageRanks(x), OracleRanks(x));
    EXPECT_NEAR(Plcc(x, y), OraclePearson(x, y), 1e-10);
    EXPECT_NEAR(Srcc(x, y), OracleSpearman(x, y), 1e-10);
    EXPECT_NEAR(Krcc(x, y), OracleKendall(x, y), 1e-10);
    for (double r : {Plcc(x, y), Srcc(x, y), Krcc(x, y)}) {
      EXPECT_GE(r, -1.0 - 1e-12);
      EXPECT_LE(r, 1.0 + 1e-12);
    }
  }
}

TEST(Correlation, Invariances) {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = RandomVector(rng, 20, false);
    const auto y = RandomVector(rng, 20, false);
    std::vector<double> affine, cubed;
    for (double v : x) {
      affine.push_back(3.5 * v - 7.0);
      cubed.push_back(v * v * v + v);
    }
    EXPECT_NEAR(Plcc(affine, y), Plcc(x, y), 1e-10);
    EXPECT_NEAR(Srcc(cubed, y), Srcc(x, y), 1e-12);
    EXPECT_NEAR(Krcc(cubed, y), Krcc(x, y), 1e-12);
    EXPECT_NEAR(Plcc(x, y), Plcc(y, x), 1e-12);
  }
}

TEST(Correlation, DegenerateInputsAreErrors) {
  EXPECT_THROW(Plcc(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
  EXPECT_THROW(Plcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Logistic, AffineDataFitsExactly) {
  std::vector<double> s, mos;
  for (int i = 0; i < 40; ++i) {
    s.push_back(i * 0.25);
    mos.push_back(0.4 * i * 0.25 + 1.0);
  }
  const auto fit = FitLogistic(s, mos);
  EXPECT_LT(fit.sse, 1e-6);
  const auto rep = EvaluateAgainstMos(s, mos);
  EXPECT_NEAR(rep.plcc, 1.0, 1e-6);
  EXPECT_NEAR(rep.srcc, 1.0, 1e-12);
  EXPECT_NEAR(rep.krcc, 1.0, 1e-12);
  EXPECT_NEAR(rep.rmse, std::sqrt(fit.sse / 40.0), 1e-12);
}

TEST(Logistic, NoisySigmoidBeatsTruthResidualAndIsMonotone) {
  std::mt19937_64 rng(47);
  std::normal_distribution<double> noise(0.0, 0.1);
  const LogisticParams truth = {3.0, 1.2, 5.0, 0.05, 3.0};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> s, mos;
    double truth_sse = 0.0;
    for (int i = 0; i < 80; ++i) {
      const double x = i / 8.0;
      const double e = noise(rng);
      s.push_back(x);
      mos.push_back(LogisticEval(truth, x) + e);
      truth_sse += e * e;
    }
    const auto fit = FitLogistic(s, mos);
    EXPECT_LE(fit.sse, truth_sse * (1.0 + 1e-6));
    for (int i = 1; i < 200; ++i) {
      EXPECT_GE(LogisticEval(fit.beta, i / 20.0), LogisticEval(fit.beta, (i - 1) / 20.0) - 1e-9);
    }
    ASSERT_EQ(fit.fitted.size(), s.size());
    for (size_t i = 0; i < s.size(); ++i) {
      EXPECT_NEAR(fit.fitted[i], LogisticEval(fit.beta, s[i]), 1e-9);
    }
  }
}

TEST(Wilcoxon, IdenticalSamplesAreIndistinguishable) {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7};
  const auto r = WilcoxonSignedRank(a, a);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.decision, Comparison::kIndistinguishable);
}

TEST(Wilcoxon, SixPositiveDifferences) {
  const std::vector<double> a = {2, 3, 4, 5, 6, 7}, b = {1, 1, 1, 1, 1, 1};
  const auto r = WilcoxonSignedRank(a, b);
  EXPECT_NEAR(r.p_value, 0.03125, 1e-12);
  EXPECT_EQ(r.decision, Comparison::kRowBetter);
  EXPECT_DOUBLE_EQ(r.statistic, 21.0);
  EXPECT_EQ(WilcoxonSignedRank(b, a).decision, Comparison::kRowWorse);
}

TEST(Wilcoxon, TooFewDifferencesIsAnError) {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6}, b = {0, 0, 0, 0, 5, 6};
  EXPECT_THROW(WilcoxonSignedRank(a, b), Error);
}

TEST(Wilcoxon, ExactMatchesSignEnumeration) {
  std::mt19937_64 rng(53);
  for (int i = 0; i < 200; ++i) {
    const int n = 6 + i % 7;
    auto a = RandomVector(rng, n, i % 2 == 0);
    auto b = RandomVector(rng, n, i % 2 == 0);
    for (int k = 0; k < 6; ++k) {
      if (a[k] == b[k]) a[k] += 1.0;
    }
    const auto [p, w] = OracleWilcoxon(a, b);
    const auto r = WilcoxonSignedRank(a, b, 0.05, WilcoxonMethod::kExact);
    EXPECT_NEAR(r.p_value, p, 1e-12);
    EXPECT_DOUBLE_EQ(r.statistic, w);
    const auto swapped = WilcoxonSignedRank(b, a, 0.05, WilcoxonMethod::kExact);
    EXPECT_NEAR(swapped.p_value, r.p_value, 1e-12);
    EXPECT_EQ(swapped.decision, Flip(r.decision));
  }
}

TEST(Wilcoxon, NormalApproximationTracksExact) {
  std::mt19937_64 rng(59);
  std::normal_distribution<double> d(0.3, 1.0);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> a(24), b(24, 0.0);
    for (auto& v : a) v = d(rng);
    const auto exact = WilcoxonSignedRank(a, b, 0.05, WilcoxonMethod::kExact);
    const auto normal = WilcoxonSignedRank(a, b, 0.05, WilcoxonMethod::kNormal);
    EXPECT_NEAR(exact.p_value, normal.p_value, 0.01);
  }
}

TEST(FDistribution, CdfMatchesQuadrature) {
  for (double d1 : {1.0, 2.0, 5.0, 30.0}) {
    for (double d2 : {3.0, 10.0, 50.0}) {
      for (double x : {0.1, 0.5, 1.0, 2.0, 4.0}) {
        EXPECT_NEAR(FDistCdf(x, d1, d2), OracleFCdf(x, d1, d2), 1e-8) << d1 << " " << d2 << " " << x;
        EXPECT_NEAR(FDistCdf(x, d1, d2) + FDistSf(x, d1, d2), 1.0, 1e-12);
      }
    }
  }
}

TEST(FTest, IdenticalResidualsAreIndistinguishable) {
  const std::vector<double> a = {0.1, -0.3, 0.2, 0.5, -0.4, 0.0};
  const auto r = FTestVariance(a, a);
  EXPECT_DOUBLE_EQ(r.statistic, 1.0);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_EQ(r.decision, Comparison::kIndistinguishable);
}

TEST(FTest, VarianceRatioFourAgainstQuadrature) {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> b(51);
  for (auto& v : b) v = d(rng);
  std::vector<double> a;
  for (double v : b) a.push_back(2.0 * v);
  const auto r = FTestVariance(a, b);
  EXPECT_NEAR(r.statistic, 4.0, 1e-12);
  EXPECT_NEAR(r.p_value, 2.0 * (1.0 - OracleFCdf(4.0, 50, 50)), 1e-8);
  EXPECT_EQ(r.decision, Comparison::kRowWorse);
  EXPECT_EQ(FTestVariance(b, a).decision, Comparison::kRowBetter);
  std::vector<double> a10, b10;
  for (double v : a) a10.push_back(10 * v);
  for (double v : b) b10.push_back(10 * v);
  EXPECT_NEAR(FTestVariance(a10, b10).p_value, r.p_value, 1e-12);
}

TEST(FTest, ZeroDenominatorIsAnError) {
  EXPECT_THROW(FTestVariance(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}), Error);
}

TEST(Anova, EqualMeansGiveZero) {
  const auto r = OneWayAnova({{1, 2, 3}, {3, 2, 1}, {2, 1, 3}});
  EXPECT_NEAR(r.f, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_EQ(r.df_between, 2);
  EXPECT_EQ(r.df_within, 6);
}

TEST(Anova, HandValue) {
  // means 2 and 5, grand 3.5; SSB = 3*2.25*2 = 13.5, SSW = 2 + 2 = 4
  const auto r = OneWayAnova({{1, 2, 3}, {4, 5, 6}});
  EXPECT_NEAR(r.f, 13.5 / (4.0 / 4.0), 1e-12);
  EXPECT_NEAR(r.p_value, 1.0 - OracleFCdf(13.5, 1, 4), 1e-8);
}

TEST(Anova, LargeShiftIsHighlySignificant) {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> g(2, std::vector<double>(20));
  for (auto& v : g[0]) v = d(rng);
  for (auto& v : g[1]) v = d(rng) + 10.0;
  EXPECT_LT(OneWayAnova(g).p_value, 1e-6);
  EXPECT_THROW(OneWayAnova({{1, 1}, {2, 2}}), Error);
}

TEST(SignificanceMatrix, PlantedOrderingWilcoxon) {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> d(0.0, 0.1);
  const int n = 40;
  std::vector<std::vector<double>> samples(3, std::vector<double>(n));
  std::vector<double> base(n);
  for (auto& v : base) v = d(rng) * 10;
  for (int i = 0; i < n; ++i) {
    samples[0][i] = base[i] + 1.0 + d(rng);
    samples[1][i] = base[i] + d(rng);
    samples[2][i] = base[i] + 1.0 + d(rng);
  }
  const std::vector<std::string> labels = {"a", "b", "c"};
  const auto m = BuildSignificanceMatrix(labels, samples, SignificanceTest::kWilcoxon, {}, 0.05, 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(ComparisonGlyph(m.cells[i][i]), '-');
  EXPECT_EQ(ComparisonGlyph(m.cells[0][1]), '1');
  EXPECT_EQ(ComparisonGlyph(m.cells[1][0]), '0');
  EXPECT_EQ(ComparisonGlyph(m.cells[2][1]), '1');
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(m.cells[i][j], Flip(m.cells[j][i]));
      EXPECT_DOUBLE_EQ(m.p_values[i][j], m.p_values[j][i]);
    }
  }
  const std::string csv = SignificanceMatrixToCsv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,a,b,c");
  EXPECT_NE(csv.find("b,0,-,0"), std::string::npos);
  const std::string md = SignificanceMatrixToMarkdown(m);
  EXPECT_EQ(md.rfind("| | a | b | c |", 0), 0u);
  EXPECT_EQ(BuildSignificanceMatrix(labels, samples, SignificanceTest::kWilcoxon, {}, 0.05, 1).cells,
            m.cells);
}

TEST(SignificanceMatrix, FTestModeUsesMappedResiduals) {
  std::mt19937_64 rng(73);
  std::normal_distribution<double> d(0.0, 1.0);
  const int n = 120;
  std::vector<double> mos(n);
  std::vector<std::vector<double>> samples(2, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    mos[i] = 1.0 + 4.0 * i / (n - 1);
    samples[0][i] = 10.0 * mos[i] + 0.5 * d(rng);
    samples[1][i] = 10.0 * mos[i] + 8.0 * d(rng);
  }
  const auto m = BuildSignificanceMatrix({"good", "bad"}, samples, SignificanceTest::kFTest, mos);
  EXPECT_EQ(m.cells[0][1], Comparison::kRowBetter);
  EXPECT_EQ(m.cells[1][0], Comparison::kRowWorse);
  EXPECT_THROW(BuildSignificanceMatrix({"x"}, samples, SignificanceTest::kFTest, mos), Error);
}

}  // namespace
}  // namespace abrsim
