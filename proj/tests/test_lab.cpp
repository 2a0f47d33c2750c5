#include <gtest/gtest.h>

#include <sstream>

#include "thicken/lab/enumerate.hpp"
#include "thicken/lab/experiments.hpp"
#include "thicken/lab/report.hpp"
#include "thicken/lab/stats.hpp"

using namespace thicken;
using namespace thicken::lab;

TEST(TvExact, Examples) {
  EXPECT_EQ(tv_exact(bernoulli_law(Rational(3, 4)), bernoulli_law(Rational(1, 2))), Rational(1, 4));
  EXPECT_EQ(tv_exact(bernoulli_law(Rational(1, 3)), bernoulli_law(Rational(1, 3))), Rational(0));
  EXPECT_EQ(tv_exact(bernoulli_law(Rational(4, 9)), bernoulli_law(Rational(1, 2))), Rational(1, 18));
  FiniteLaw three = {{"a", Rational(1, 3)}, {"b", Rational(1, 3)}, {"c", Rational(1, 3)}};
  EXPECT_THROW(tv_exact(three, bernoulli_law(Rational(1, 2))), SupportMismatch);
  FiniteLaw other = {{"0", Rational(1, 2)}, {"2", Rational(1, 2)}};
  EXPECT_THROW(tv_exact(other, bernoulli_law(Rational(1, 2))), SupportMismatch);
}

TEST(Enumerate, ParityGivenAllOnesWindow) {
  // two bits of bias 1/3: P(parity 1) = 2 * 1/3 * 2/3 = 4/9
  auto parity = [](const std::vector<Bit>& s) {
    Bit a = 0;
    for (Bit b : s) a ^= b;
    return std::string(a ? "1" : "0");
  };
  ConditionalTable t = enumerate_conditional({Rational(1, 3), Rational(1, 3)}, parity);
  EXPECT_EQ(t.conditional.at("1"), Rational(4, 9));
  EXPECT_EQ(t.condition_mass, Rational(1));

  ConditionalTable c = enumerate_conditional({Rational(1, 2), Rational(1, 2), Rational(1, 2)}, parity,
                                             [](const std::vector<Bit>& s) { return s[0] == 1; });
  EXPECT_EQ(c.condition_mass, Rational(1, 2));
  EXPECT_EQ(c.conditional.at("1"), Rational(1, 2));

  EXPECT_THROW(enumerate_conditional({Rational(0)}, parity, [](const std::vector<Bit>& s) { return s[0] == 1; }),
               EmptyConditioning);
  EXPECT_THROW(enumerate_conditional(std::vector<Rational>(25, Rational(1, 2)), parity), FeasibilityGuard);
  EXPECT_THROW(enumerate_conditional({Rational(3, 2)}, parity), InvalidArgument);
}

TEST(Enumerate, SingleBitIsBernoulli) {
  for (Rational p : {Rational(1, 5), Rational(1, 2), Rational(7, 8)}) {
    ConditionalTable t = enumerate_conditional({p}, [](const std::vector<Bit>& s) { return std::string(s[0] ? "1" : "0"); });
    EXPECT_EQ(t.conditional, bernoulli_law(p));
  }
}

TEST(ChiSquare, IidCalibration) {
  const std::vector<FiniteLaw> target = {bernoulli_law(Rational(1, 3)), bernoulli_law(Rational(1, 2))};
  int pass = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    BitStream a = BitStream::seeded(derive_seed(rep, 1), Rational(1, 3)), b = BitStream::seeded(derive_seed(rep, 2));
    std::vector<std::vector<std::string>> samples;
    for (std::uint64_t i = 1; i <= 1000; ++i) samples.push_back({a.at(i) ? "1" : "0", b.at(i) ? "1" : "0"});
    if (chi_square_iid(samples, target).p_value > kSignificance) ++pass;
  }
  EXPECT_GE(pass, 98);
}

TEST(ChiSquare, PowerAndExactMatch) {
  const std::vector<FiniteLaw> target = {bernoulli_law(Rational(1, 2))};
  std::vector<std::vector<std::string>> constant(1000, {"1"});
  EXPECT_LT(chi_square_iid(constant, target).p_value, 1e-6);
  std::vector<std::vector<std::string>> exact;
  for (int i = 0; i < 100; ++i) exact.push_back({i % 2 ? "1" : "0"});
  TestResult t = chi_square_iid(exact, target);
  EXPECT_EQ(t.statistic, 0.0);
  EXPECT_EQ(t.p_value, 1.0);
  EXPECT_THROW(chi_square_iid({{"2"}}, target), SupportMismatch);
  EXPECT_THROW(chi_square_iid({{"1", "0"}}, target), LengthMismatch);
  EXPECT_THROW(chi_square_iid({}, target), InsufficientSamples);
  EXPECT_THROW(chi_square_gof({1, 1}, {Rational(1, 2), Rational(1, 2)}), SparseCells);
}

TEST(ChiSquare, TailAgainstKnownQuantiles) {
  // upper 5% points of chi-square with 1 and 3 degrees of freedom
  EXPECT_NEAR(chi_square_tail(3.841458820694124, 1), 0.05, 1e-9);
  EXPECT_NEAR(chi_square_tail(7.814727903251178, 3), 0.05, 1e-9);
}

TEST(Ks, CalibrationAndPower) {
  int pass = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    std::vector<Rational> gaps;
    for (std::uint64_t s = 0; gaps.size() < 500; ++s) {
      PointWindow w = sample_poisson(Rational(0), Rational(8), Rational(1), derive_seed(rep, s));
      if (!w.points.empty()) gaps.push_back(w.points.front());
    }
    if (ks_exponential(gaps, Rational(1)).p_value > kSignificance) ++pass;
  }
  EXPECT_GE(pass, 98);

  std::vector<Rational> unit(1000, Rational(1));
  EXPECT_LT(ks_exponential(unit, Rational(1)).p_value, 1e-6);
  std::vector<Rational> gaps;
  for (std::uint64_t s = 0; gaps.size() < 10000; ++s) {
    PointWindow w = sample_poisson(Rational(0), Rational(8), Rational(1), s);
    if (!w.points.empty()) gaps.push_back(w.points.front());
  }
  EXPECT_LT(ks_exponential(gaps, Rational(2)).p_value, 1e-6);
  EXPECT_THROW(ks_exponential({}, Rational(1)), InvalidArgument);
  EXPECT_THROW(ks_exponential(std::vector<Rational>(99, Rational(1)), Rational(1)), InsufficientSamples);
}

TEST(Kolmogorov, SurvivalValues) {
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 1e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 1e-4);
  EXPECT_NEAR(kolmogorov_survival(0.8), 0.5441, 1e-3);
}

TEST(Wilson, Interval) {
  Interval i = wilson_interval(50, 100, 0.95);
  EXPECT_NEAR(i.lo, 0.4038, 1e-3);
  EXPECT_NEAR(i.hi, 0.5962, 1e-3);
  Interval z = wilson_interval(0, 100);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_GT(z.hi, 0.0);
  EXPECT_THROW(wilson_interval(0, 0), InsufficientSamples);
  EXPECT_THROW(wilson_interval(5, 4), InvalidArgument);
}

TEST(Spec, ParsingAndAliases) {
  ExperimentSpec s = ExperimentSpec::parse("thicken p=1/2 p'=3/4 N=1e5 seed=42\n# comment\nlambda'=2");
  EXPECT_EQ(s.name(), "thicken");
  EXPECT_EQ(s.rational("pprime", Rational(0)), Rational(3, 4));
  EXPECT_EQ(s.integer("samples", 0), 100'000u);
  EXPECT_EQ(s.integer("seed", 0), 42u);
  EXPECT_EQ(s.rational("lambdaprime", Rational(0)), Rational(2));
  EXPECT_EQ(s.line_of("lambdaprime"), 3u);
  EXPECT_EQ(s.rational("delta", Rational(1, 32)), Rational(1, 32));

  ExperimentSpec named = ExperimentSpec::parse("experiment=extract\neps=1/10");
  EXPECT_EQ(named.name(), "extract");
  EXPECT_EQ(named.rational("epsilon", Rational(0)), Rational(1, 10));
}

TEST(Spec, Errors) {
  EXPECT_THROW(ExperimentSpec::parse("thicken p=1/2 p=1/3"), ConfigError);
  EXPECT_THROW(ExperimentSpec::parse("p=1/2"), ConfigError);
  EXPECT_THROW(ExperimentSpec::parse("thicken extract"), ConfigError);
  try {
    ExperimentSpec s = ExperimentSpec::parse("thicken\nseed=1\np=3/0");
    s.rational("p", Rational(1, 2));
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(ExperimentSpec::parse("thicken N=ten").integer("samples", 0), ConfigError);
  EXPECT_THROW(run_experiment("thicken lambda=1"), ConfigError);
  EXPECT_THROW(run_experiment("no-such-experiment"), ConfigError);
}

TEST(Experiments, BiasSpotAndNoExtractor) {
  ExperimentReport b = run_experiment("bias-spot");
  EXPECT_TRUE(b.passed());
  EXPECT_EQ(b.statistics["cond_law_a"], "4/9");
  EXPECT_EQ(b.statistics["tv_to_fair"], "1/18");
  ExperimentReport n = run_experiment("search-no-extractor windows=2");
  EXPECT_EQ(n.id, "no-extractor");
  EXPECT_TRUE(n.passed());
}

TEST(Experiments, ThickenSmallRunIsDeterministic) {
  const std::string text = "thicken p=1/2 p'=3/4 N=2000 seed=42";
  ExperimentReport a = run_experiment(text), b = run_experiment(text);
  EXPECT_EQ(a.body_text(), b.body_text());
  EXPECT_EQ(a.samples, 2000u);
  bool found = false;
  for (const auto& [name, ok] : a.criteria)
    if (name == "monotonicity") {
      found = true;
      EXPECT_TRUE(ok);
    }
  EXPECT_TRUE(found);
  std::ostringstream csv;
  run_spec(ExperimentSpec::parse("extract N=10 seed=1"), &csv);
  EXPECT_EQ(csv.str().rfind("run,", 0), 0u);
}

TEST(Experiments, NamesDispatch) {
  for (const auto& name : experiment_names()) EXPECT_FALSE(name.empty());
  EXPECT_EQ(experiment_names().size(), 10u);
}
