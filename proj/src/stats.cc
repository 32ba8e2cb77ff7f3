#include "abrsim/stats.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "abrsim/error.h"

namespace abrsim {
namespace {

void CheckPaired(std::span<const double> x, std::span<const double> y, size_t min_len) {
  if (x.size() != y.size()) throw Error("paired samples differ in length");
  if (x.size() < min_len) {
    throw Error("need at least " + std::to_string(min_len) + " samples");
  }
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw Error("samples must be finite");
  }
}

double Mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double SampleVariance(std::span<const double> x) {
  const double m = Mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double PearsonRaw(std::span<const double> x, std::span<const double> y) {
  const double mx = Mean(x), my = Mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error("correlation of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double Logistic(double b2, double b3, double s) {
  return 0.5 - 1.0 / (1.0 + std::exp(b2 * (s - b3)));
}

struct LinearPart {
  double b1 = 0.0, b4 = 0.0, b5 = 0.0;
  double sse = 0.0;
};

// Best (b1, b4, b5) for fixed (b2, b3) subject to dir * b1 >= 0 and
// dir * b4 >= 0. The problem is convex, so the optimum is the best feasible
// unconstrained solution over the four active sets.
LinearPart SolveLinear(std::span<const double> s, std::span<const double> mos, double b2,
                       double b3, double dir) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::VectorXd logistic(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    logistic(i) = Logistic(b2, b3, s[i]);
    y(i) = mos[i];
  }
  LinearPart best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 4; ++mask) {
    const bool use1 = mask & 1, use4 = mask & 2;
    const int cols = 1 + use1 + use4;
    Eigen::MatrixXd a(n, cols);
    int c = 0;
    if (use1) a.col(c++) = logistic;
    if (use4) {
      for (Eigen::Index i = 0; i < n; ++i) a(i, c) = s[i];
      ++c;
    }
    a.col(c).setOnes();
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
    LinearPart cand;
    c = 0;
    if (use1) cand.b1 = coef(c++);
    if (use4) cand.b4 = coef(c++);
    cand.b5 = coef(c);
    if (dir * cand.b1 < 0.0 || dir * cand.b4 < 0.0) continue;
    cand.sse = (a * coef - y).squaredNorm();
    if (cand.sse < best.sse) best = cand;
  }
  return best;
}

std::vector<double> Residuals(const LogisticFit& fit, std::span<const double> mos) {
  std::vector<double> r(mos.size());
  for (size_t i = 0; i < mos.size(); ++i) r[i] = mos[i] - fit.fitted[i];
  return r;
}

}  // namespace

double Plcc(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y, 3);
  return PearsonRaw(x, y);
}

std::vector<double> AverageRanks(std::span<const double> x) {
  std::vector<size_t> order(x.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double Srcc(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y, 3);
  const auto rx = AverageRanks(x), ry = AverageRanks(y);
  return PearsonRaw(rx, ry);
}

double Krcc(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y, 3);
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  const size_t n = x.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0) ++tied_x;
      if (dy == 0.0) ++tied_y;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0.0) == (dy > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const auto pairs = static_cast<long long>(n * (n - 1) / 2);
  const double denom = std::sqrt(static_cast<double>(pairs - tied_x) *
                                 static_cast<double>(pairs - tied_y));
  if (!(denom > 0.0)) throw Error("kendall tau undefined for all-tied input");
  return static_cast<double>(concordant - discordant) / denom;
}

double LogisticEval(const LogisticParams& b, double s) {
  return b[0] * Logistic(b[1], b[2], s) + b[3] * s + b[4];
}

LogisticFit FitLogistic(std::span<const double> scores, std::span<const double> mos,
                        int max_iterations) {
  CheckPaired(scores, mos, 5);
  const double s_std = std::sqrt(SampleVariance(scores));
  if (!(s_std > 0.0)) throw Error("logistic fit needs non-constant scores");
  double dir = 1.0;
  if (SampleVariance(mos) > 0.0 && PearsonRaw(scores, mos) < 0.0) dir = -1.0;

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double median =
      n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const auto [mos_lo, mos_hi] = std::minmax_element(mos.begin(), mos.end());

  // Search space: b2 = exp(p0) / std(score), b3 = median + p1 * std(score).
  auto unpack = [&](const std::array<double, 2>& p) {
    return std::pair{std::exp(p[0]) / s_std, median + p[1] * s_std};
  };
  auto objective = [&](const std::array<double, 2>& p) {
    const auto [b2, b3] = unpack(p);
    return SolveLinear(scores, mos, b2, b3, dir).sse;
  };

  LogisticFit fit;
  // Reference point: the documented initial iterate.
  LogisticParams init{dir * (*mos_hi - *mos_lo), 1.0 / s_std, median, 0.0, Mean(mos)};
  double init_sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = mos[i] - LogisticEval(init, scores[i]);
    init_sse += r * r;
  }

  // Nelder-Mead over the two nonlinear parameters.
  std::array<std::array<double, 2>, 3> simplex{{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}};
  std::array<double, 3> f{};
  for (int i = 0; i < 3; ++i) f[i] = objective(simplex[i]);
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return f[a] < f[b]; });
    const int lo = idx[0], mid = idx[1], hi = idx[2];
    double diameter = 0.0;
    for (int i : {mid, hi}) {
      diameter = std::max(diameter, std::hypot(simplex[i][0] - simplex[lo][0],
                                               simplex[i][1] - simplex[lo][1]));
    }
    if (f[hi] - f[lo] <= 1e-14 * (1.0 + std::abs(f[lo])) && diameter < 1e-9) {
      fit.converged = true;
      break;
    }
    std::array<double, 2> centroid{0.5 * (simplex[lo][0] + simplex[mid][0]),
                                   0.5 * (simplex[lo][1] + simplex[mid][1])};
    auto along = [&](double t) {
      return std::array<double, 2>{centroid[0] + t * (simplex[hi][0] - centroid[0]),
                                   centroid[1] + t * (simplex[hi][1] - centroid[1])};
    };
    const auto xr = along(-1.0);
    const double fr = objective(xr);
    if (fr < f[lo]) {
      const auto xe = along(-2.0);
      const double fe = objective(xe);
      if (fe < fr) {
        simplex[hi] = xe;
        f[hi] = fe;
      } else {
        simplex[hi] = xr;
        f[hi] = fr;
      }
    } else if (fr < f[mid]) {
      simplex[hi] = xr;
      f[hi] = fr;
    } else {
      const auto xc = fr < f[hi] ? along(-0.5) : along(0.5);
      const double fc = objective(xc);
      if (fc < std::min(fr, f[hi])) {
        simplex[hi] = xc;
        f[hi] = fc;
      } else {
        for (int i : {mid, hi}) {
          simplex[i] = {0.5 * (simplex[i][0] + simplex[lo][0]),
                        0.5 * (simplex[i][1] + simplex[lo][1])};
          f[i] = objective(simplex[i]);
        }
      }
    }
  }
  fit.iterations = iter;
  const int best = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
  const auto [b2, b3] = unpack(simplex[best]);
  const LinearPart lin = SolveLinear(scores, mos, b2, b3, dir);
  fit.beta = {lin.b1, b2, b3, lin.b4, lin.b5};
  if (init_sse < lin.sse) fit.beta = init;
  fit.fitted.resize(n);
  fit.sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    fit.fitted[i] = LogisticEval(fit.beta, scores[i]);
    fit.sse += (mos[i] - fit.fitted[i]) * (mos[i] - fit.fitted[i]);
  }
  return fit;
}

char ComparisonGlyph(Comparison c) {
  switch (c) {
    case Comparison::kRowBetter:
      return '1';
    case Comparison::kRowWorse:
      return '0';
    case Comparison::kIndistinguishable:
      return '-';
  }
  return '-';
}

Comparison Flip(Comparison c) {
  if (c == Comparison::kRowBetter) return Comparison::kRowWorse;
  if (c == Comparison::kRowWorse) return Comparison::kRowBetter;
  return c;
}

TestResult WilcoxonSignedRank(std::span<const double> a, std::span<const double> b,
                              double alpha, WilcoxonMethod method) {
  CheckPaired(a, b, 1);
  std::vector<double> diff;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
  }
  TestResult result;
  if (diff.empty()) return result;
  const int n = static_cast<int>(diff.size());
  if (n < 6) throw Error("wilcoxon test needs at least 6 nonzero differences");

  std::vector<double> mags(diff.size());
  for (size_t i = 0; i < diff.size(); ++i) mags[i] = std::abs(diff[i]);
  const auto ranks = AverageRanks(mags);
  double w_plus = 0.0;
  for (size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > 0.0) w_plus += ranks[i];
  }
  result.statistic = w_plus;
  const double expected = n * (n + 1) / 4.0;

  const bool exact = method == WilcoxonMethod::kExact ||
                     (method == WilcoxonMethod::kAuto && n <= kWilcoxonExactMaxN);
  if (exact) {
    // Null distribution of the doubled statistic; average ranks become
    // integers after doubling.
    std::vector<int> doubled(ranks.size());
    int total = 0;
    for (size_t i = 0; i < ranks.size(); ++i) {
      doubled[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int d : doubled) {
      for (int s = reach; s >= 0; --s) {
        if (count[s] != 0.0) count[s + d] += count[s];
      }
      reach += d;
    }
    const int w2 = static_cast<int>(std::lround(2.0 * w_plus));
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) lower += count[s];
      if (s >= w2) upper += count[s];
    }
    const double patterns = std::ldexp(1.0, n);
    result.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
  } else {
    double tie_term = 0.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size();) {
      size_t j = i;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const auto t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double z = std::max(0.0, std::abs(w_plus - expected) - 0.5) / std::sqrt(variance);
    result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  if (result.p_value < alpha) {
    result.decision = w_plus > expected ? Comparison::kRowBetter : Comparison::kRowWorse;
  }
  return result;
}

double FDistCdf(double x, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error("F distribution needs positive dof");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::ibeta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2));
}

double FDistSf(double x, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw Error("F distribution needs positive dof");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::ibetac(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2));
}

TestResult FTestVariance(std::span<const double> residuals_a,
                         std::span<const double> residuals_b, double alpha) {
  if (residuals_a.size() < 2 || residuals_b.size() < 2) {
    throw Error("F-test needs at least 2 samples per side");
  }
  const double va = SampleVariance(residuals_a);
  const double vb = SampleVariance(residuals_b);
  if (!(vb > 0.0)) throw Error("F-test denominator variance is zero");
  TestResult result;
  result.statistic = va / vb;
  const double d1 = static_cast<double>(residuals_a.size() - 1);
  const double d2 = static_cast<double>(residuals_b.size() - 1);
  const double cdf = FDistCdf(result.statistic, d1, d2);
  const double sf = FDistSf(result.statistic, d1, d2);
  result.p_value = std::min(1.0, 2.0 * std::min(cdf, sf));
  if (result.p_value < alpha) {
    result.decision = va < vb ? Comparison::kRowBetter : Comparison::kRowWorse;
  }
  return result;
}

AnovaResult OneWayAnova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("ANOVA needs at least 2 groups");
  double grand = 0.0;
  size_t total = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("ANOVA groups need at least 2 samples");
    for (double v : g) grand += v;
    total += g.size();
  }
  grand /= static_cast<double>(total);
  double ss_between = 0.0, ss_within = 0.0;
  for (const auto& g : groups) {
    const double m = Mean(g);
    ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ss_within += (v - m) * (v - m);
  }
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(total - groups.size());
  if (!(ss_within > 0.0)) throw Error("ANOVA groups have zero within-group variance");
  r.f = (ss_between / r.df_between) / (ss_within / r.df_within);
  r.p_value = FDistSf(r.f, r.df_between, r.df_within);
  return r;
}

SignificanceMatrix BuildSignificanceMatrix(const std::vector<std::string>& labels,
                                           const std::vector<std::vector<double>>& samples,
                                           SignificanceTest test,
                                           std::span<const double> mos, double alpha,
                                           int jobs) {
  if (labels.size() != samples.size()) throw Error("labels and samples differ in count");
  const size_t m = labels.size();
  for (const auto& s : samples) {
    if (!samples.empty() && s.size() != samples.front().size()) {
      throw Error("all methods must be sampled over the same items");
    }
  }
  std::vector<std::vector<double>> compared = samples;
  if (test == SignificanceTest::kFTest) {
    if (!samples.empty() && mos.size() != samples.front().size()) {
      throw Error("F-test matrix needs one MOS per item");
    }
    for (size_t i = 0; i < m; ++i) compared[i] = Residuals(FitLogistic(samples[i], mos), mos);
  }

  SignificanceMatrix out;
  out.labels = labels;
  out.cells.assign(m, std::vector<Comparison>(m, Comparison::kIndistinguishable));
  out.p_values.assign(m, std::vector<double>(m, 1.0));
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  }
  std::vector<TestResult> results(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t k; (k = next++) < pairs.size();) {
      const auto [i, j] = pairs[k];
      try {
        results[k] = test == SignificanceTest::kWilcoxon
                         ? WilcoxonSignedRank(compared[i], compared[j], alpha)
                         : FTestVariance(compared[i], compared[j], alpha);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
    worker();
  }
  for (size_t k = 0; k < pairs.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    const auto [i, j] = pairs[k];
    out.cells[i][j] = results[k].decision;
    out.cells[j][i] = Flip(results[k].decision);
    out.p_values[i][j] = out.p_values[j][i] = results[k].p_value;
  }
  return out;
}

std::string SignificanceMatrixToCsv(const SignificanceMatrix& m) {
  std::ostringstream out;
  out << "method";
  for (const auto& l : m.labels) out << ',' << l;
  out << '\n';
  for (size_t i = 0; i < m.labels.size(); ++i) {
    out << m.labels[i];
    for (size_t j = 0; j < m.labels.size(); ++j) out << ',' << ComparisonGlyph(m.cells[i][j]);
    out << '\n';
  }
  return out.str();
}

std::string SignificanceMatrixToMarkdown(const SignificanceMatrix& m) {
  std::ostringstream out;
  out << "| |";
  for (const auto& l : m.labels) out << ' ' << l << " |";
  out << "\n|---|";
  for (size_t j = 0; j < m.labels.size(); ++j) out << "---|";
  out << '\n';
  for (size_t i = 0; i < m.labels.size(); ++i) {
    out << "| " << m.labels[i] << " |";
    for (size_t j = 0; j < m.labels.size(); ++j) out << ' ' << ComparisonGlyph(m.cells[i][j]) << " |";
    out << '\n';
  }
  return out.str();
}

CorrelationReport EvaluateAgainstMos(std::span<const double> scores,
                                     std::span<const double> mos) {
  CorrelationReport r;
  r.fit = FitLogistic(scores, mos);
  r.plcc = Plcc(r.fit.fitted, mos);
  r.srcc = Srcc(scores, mos);
  r.krcc = Krcc(scores, mos);
  r.rmse = std::sqrt(r.fit.sse / static_cast<double>(mos.size()));
  return r;
}

}  // namespace abrsim
