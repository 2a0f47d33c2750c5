#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "thicken/errors.hpp"
#include "thicken/rational.hpp"

// Floating point is confined to p-values and confidence bounds; inputs stay exact.
namespace thicken::lab {

using FiniteLaw = std::map<std::string, Rational>;

inline FiniteLaw bernoulli_law(const Rational& p) { return {{"0", Rational(1) - p}, {"1", p}}; }

inline Rational tv_exact(const FiniteLaw& a, const FiniteLaw& b) {
  if (a.size() != b.size()) throw SupportMismatch("tv_exact: supports differ in size");
  Rational total(0);
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) throw SupportMismatch("tv_exact: outcome '" + ia->first + "' missing from one law");
    total += abs(ia->second - ib->second);
  }
  return total / Rational(2);
}

struct TestResult {
  double statistic = 0;
  double df = 0;
  double p_value = 1;
  std::uint64_t n = 0;
};

inline double chi_square_tail(double statistic, double df) {
  if (df <= 0) throw InvalidArgument("chi-square needs positive degrees of freedom");
  if (statistic <= 0) return 1.0;
  return boost::math::gamma_q(df / 2, statistic / 2);
}

inline constexpr double kMinExpected = 5.0;

// Pearson goodness of fit; df = cells - 1.
inline TestResult chi_square_gof(const std::vector<std::uint64_t>& observed, const std::vector<Rational>& probs) {
  if (observed.size() != probs.size() || observed.size() < 2)
    throw LengthMismatch("chi-square: need matching cell lists with at least two cells");
  std::uint64_t n = 0;
  for (auto o : observed) n += o;
  if (n == 0) throw InsufficientSamples("chi-square: no samples");
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double e = static_cast<double>(n) * probs[i].to_double();
    if (e < kMinExpected)
      throw SparseCells("chi-square: cell " + std::to_string(i) + " expects " + std::to_string(e) + " < 5");
    double d = static_cast<double>(observed[i]) - e;
    stat += d * d / e;
  }
  double df = static_cast<double>(observed.size() - 1);
  return {stat, df, chi_square_tail(stat, df), n};
}

// Samples are tuples of outcomes; the target is the product of the given marginals.
inline TestResult chi_square_iid(const std::vector<std::vector<std::string>>& samples,
                                 const std::vector<FiniteLaw>& target) {
  if (samples.empty()) throw InsufficientSamples("chi_square_iid: no samples");
  if (target.empty()) throw InvalidArgument("chi_square_iid: empty target");
  std::vector<std::string> outcome;
  std::map<std::vector<std::string>, std::uint64_t> counts;
  for (const auto& s : samples) {
    if (s.size() != target.size()) throw LengthMismatch("chi_square_iid: tuple length differs from the target");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!target[i].count(s[i])) throw SupportMismatch("chi_square_iid: outcome '" + s[i] + "' outside the target support");
    ++counts[s];
  }
  // walk the product support in lexicographic order
  std::vector<std::uint64_t> observed;
  std::vector<Rational> probs;
  std::vector<FiniteLaw::const_iterator> it;
  for (const auto& law : target) it.push_back(law.begin());
  for (;;) {
    std::vector<std::string> cell;
    Rational p(1);
    for (auto& i : it) {
      cell.push_back(i->first);
      p *= i->second;
    }
    auto c = counts.find(cell);
    observed.push_back(c == counts.end() ? 0 : c->second);
    probs.push_back(p);
    std::size_t k = it.size();
    while (k > 0) {
      --k;
      if (++it[k] != target[k].end()) break;
      it[k] = target[k].begin();
      if (k == 0) return chi_square_gof(observed, probs);
    }
  }
}

// Pearson test of independence on a contingency table; df = (rows-1)(cols-1).
inline TestResult chi_square_independence(const std::vector<std::vector<std::uint64_t>>& table) {
  if (table.size() < 2 || table.front().size() < 2) throw LengthMismatch("independence test needs a 2x2 table or larger");
  const std::size_t rows = table.size(), cols = table.front().size();
  std::vector<double> rsum(rows, 0), csum(cols, 0);
  double n = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (table[i].size() != cols) throw LengthMismatch("ragged contingency table");
    for (std::size_t j = 0; j < cols; ++j) {
      rsum[i] += static_cast<double>(table[i][j]);
      csum[j] += static_cast<double>(table[i][j]);
      n += static_cast<double>(table[i][j]);
    }
  }
  if (n == 0) throw InsufficientSamples("independence test: no samples");
  double stat = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double e = rsum[i] * csum[j] / n;
      if (e < kMinExpected)
        throw SparseCells("independence test: cell (" + std::to_string(i) + "," + std::to_string(j) + ") expects " +
                          std::to_string(e) + " < 5");
      double d = static_cast<double>(table[i][j]) - e;
      stat += d * d / e;
    }
  }
  double df = static_cast<double>((rows - 1) * (cols - 1));
  return {stat, df, chi_square_tail(stat, df), static_cast<std::uint64_t>(n)};
}

// Two samples of counts over the same cells.
inline TestResult chi_square_homogeneity(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
  return chi_square_independence({a, b});
}

// P(K > x) for the Kolmogorov distribution.
inline double kolmogorov_survival(double x) {
  if (x <= 0) return 1.0;
  if (x < 1.18) {
    const double pi = 3.14159265358979323846;
    double s = 0;
    for (int j = 1; j <= 20; ++j) {
      double k = 2.0 * j - 1;
      s += std::exp(-k * k * pi * pi / (8 * x * x));
    }
    return std::clamp(1.0 - std::sqrt(2 * pi) / x * s, 0.0, 1.0);
  }
  double s = 0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * x * x);
    s += (j % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2 * s, 0.0, 1.0);
}

inline constexpr std::size_t kMinKsSamples = 100;

// One-sample KS against Exponential(rate), p-value with Stephens' small-n correction.
inline TestResult ks_exponential(const std::vector<Rational>& gaps, const Rational& rate) {
  if (gaps.empty()) throw InvalidArgument("ks_exponential: empty input");
  if (gaps.size() < kMinKsSamples)
    throw InsufficientSamples("ks_exponential: need at least 100 gaps, got " + std::to_string(gaps.size()));
  if (rate.sign() <= 0) throw InvalidArgument("ks_exponential: rate must be positive");
  std::vector<Rational> sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  const double lam = rate.to_double();
  const double n = static_cast<double>(sorted.size());
  double d = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    double f = -std::expm1(-lam * sorted[i].to_double());
    d = std::max({d, (static_cast<double>(i) + 1) / n - f, f - static_cast<double>(i) / n});
  }
  double sn = std::sqrt(n);
  return {d, 0, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d), sorted.size()};
}

struct Interval {
  double lo = 0;
  double hi = 0;
};

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// Two-sided Wilson score interval at the given confidence.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double confidence = 0.99) {
  if (n == 0) throw InsufficientSamples("wilson interval: no trials");
  if (successes > n) throw InvalidArgument("wilson interval: more successes than trials");
  const double z = normal_quantile(1 - (1 - confidence) / 2);
  const double nn = static_cast<double>(n), ph = static_cast<double>(successes) / nn;
  const double denom = 1 + z * z / nn;
  const double centre = (ph + z * z / (2 * nn)) / denom;
  const double half = z * std::sqrt(ph * (1 - ph) / nn + z * z / (4 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline constexpr double kSignificance = 0.01;

inline double bonferroni(double alpha, std::size_t tests) { return alpha / static_cast<double>(std::max<std::size_t>(tests, 1)); }

// Binomial standard error of a frequency.
inline double binomial_sigma(double p, std::uint64_t n) { return std::sqrt(p * (1 - p) / static_cast<double>(n)); }

}  // namespace thicken::lab
