#ifndef ABRSIM_STATS_H_
#define ABRSIM_STATS_H_

#include <array>
#include <span>
#include <string>
#include <vector>

namespace abrsim {

double Plcc(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> AverageRanks(std::span<const double> x);

double Srcc(std::span<const double> x, std::span<const double> y);

// Kendall tau-b.
double Krcc(std::span<const double> x, std::span<const double> y);

// f(s) = b1 * (1/2 - 1/(1 + exp(b2 * (s - b3)))) + b4 * s + b5
using LogisticParams = std::array<double, 5>;

double LogisticEval(const LogisticParams& beta, double s);

struct LogisticFit {
  LogisticParams beta{};
  std::vector<double> fitted;
  double sse = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Least-squares fit constrained to be monotone in the direction of the
// Pearson correlation between scores and mos. On non-convergence the best
// iterate is returned with converged = false.
LogisticFit FitLogistic(std::span<const double> scores, std::span<const double> mos,
                        int max_iterations = 2000);

enum class Comparison { kRowBetter, kRowWorse, kIndistinguishable };

char ComparisonGlyph(Comparison c);
Comparison Flip(Comparison c);

struct TestResult {
  Comparison decision = Comparison::kIndistinguishable;
  double p_value = 1.0;
  double statistic = 0.0;
};

enum class WilcoxonMethod { kAuto, kExact, kNormal };

// Exact null up to this many nonzero differences under kAuto.
inline constexpr int kWilcoxonExactMaxN = 25;

// Paired two-sided test on a - b. The statistic is W+, the rank sum of the
// positive differences. "Better" means larger values in `a`.
TestResult WilcoxonSignedRank(std::span<const double> a, std::span<const double> b,
                              double alpha = 0.05,
                              WilcoxonMethod method = WilcoxonMethod::kAuto);

// P(F <= x) for F ~ F(d1, d2).
double FDistCdf(double x, double d1, double d2);
double FDistSf(double x, double d1, double d2);

// Two-sided variance-ratio test, statistic var(a) / var(b). The side with
// the smaller residual variance is better.
TestResult FTestVariance(std::span<const double> residuals_a,
                         std::span<const double> residuals_b, double alpha = 0.05);

struct AnovaResult {
  double f = 0.0;
  double p_value = 1.0;
  int df_between = 0;
  int df_within = 0;
};

AnovaResult OneWayAnova(const std::vector<std::vector<double>>& groups);

enum class SignificanceTest { kWilcoxon, kFTest };

struct SignificanceMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<Comparison>> cells;
  std::vector<std::vector<double>> p_values;
};

// samples[i] holds method i's score on every item. For kFTest the scores are
// first mapped onto `mos` with FitLogistic and the residuals are compared.
SignificanceMatrix BuildSignificanceMatrix(
    const std::vector<std::string>& labels,
    const std::vector<std::vector<double>>& samples, SignificanceTest test,
    std::span<const double> mos = {}, double alpha = 0.05, int jobs = 1);

std::string SignificanceMatrixToCsv(const SignificanceMatrix& m);
std::string SignificanceMatrixToMarkdown(const SignificanceMatrix& m);

struct CorrelationReport {
  double plcc = 0.0;  // on logistic-mapped scores
  double srcc = 0.0;
  double krcc = 0.0;
  double rmse = 0.0;  // of the mapped scores
  LogisticFit fit;
};

CorrelationReport EvaluateAgainstMos(std::span<const double> scores,
                                     std::span<const double> mos);

}  // namespace abrsim

#endif  // ABRSIM_STATS_H_
