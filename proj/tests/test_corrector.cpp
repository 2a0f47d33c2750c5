#include <gtest/gtest.h>

#include <cmath>
#include <unordered_map>

#include "thicken/corrector.hpp"
#include "thicken/lab/stats.hpp"

using namespace thicken;

namespace {

std::vector<Bit> prefix_bits(std::uint64_t n, unsigned bits) {
  std::vector<Bit> out;
  for (unsigned b = bits; b-- > 0;) out.push_back(static_cast<Bit>((n >> b) & 1));
  return out;
}

// P(corrector fires) over U, from every `bits`-bit prefix of z; a prefix the
// corrector cannot decide adds the exact measure of {U * p_c > 1/2} inside it.
Rational firing_probability(Bit observed, const Rational& prob_one, unsigned bits = 12) {
  const Rational pc = observed ? prob_one : Rational(1) - prob_one;
  Rational total(0);
  for (std::uint64_t n = 0; n < (std::uint64_t{1} << bits); ++n) {
    auto law = [&]() { return ConditionalLaw{DyadicReal::exact(prob_one)}; };
    try {
      CorrectionRecord rec = decide_correction(observed, Rational(1, 2), law, BitStream::recorded(prefix_bits(n, bits)));
      EXPECT_TRUE(rec.verify());
      if (rec.fired) total += Rational::pow2(-static_cast<long>(bits));
    } catch (const StreamExhausted&) {
      Rational lo = Rational::dyadic(mpz_class(n), bits), hi = Rational::dyadic(mpz_class(n + 1), bits);
      if (pc.sign() > 0) {
        Rational tau = Rational(1) / (Rational(2) * pc);
        total += hi - max(lo, min(hi, tau));
      }
    }
  }
  return total;
}

}  // namespace

TEST(Corrector, UniformLawNeverFires) {
  int calls = 0;
  auto law = [&]() {
    ++calls;
    return ConditionalLaw{DyadicReal::exact(Rational(1, 2))};
  };
  for (std::uint64_t s = 0; s < 200; ++s) {
    CorrectionRecord rec = decide_correction(s % 2, Rational(0), law, BitStream::seeded(s));
    ASSERT_FALSE(rec.fired);
    ASSERT_EQ(rec.u_bits_consumed, 0u);
  }
  EXPECT_EQ(calls, 0);
}

TEST(Corrector, DeterminedBitFiresWithHalfChance) {
  auto law = []() { return ConditionalLaw{DyadicReal::exact(Rational(1))}; };
  EXPECT_TRUE(decide_correction(1, Rational(1, 2), law, BitStream::parse("11")).fired);
  EXPECT_FALSE(decide_correction(1, Rational(1, 2), law, BitStream::parse("0")).fired);
  EXPECT_EQ(firing_probability(1, Rational(1)), Rational(1, 2));
  EXPECT_EQ(firing_probability(0, Rational(1)), Rational(0));
}

TEST(Corrector, ThreeQuartersExample) {
  // P(f = 0 | merged) = 3/4
  const Rational p1(1, 4);
  const Rational fire0 = firing_probability(0, p1), fire1 = firing_probability(1, p1);
  EXPECT_EQ(fire0, Rational(1, 3));
  EXPECT_EQ(fire1, Rational(0));
  const Rational p0 = Rational(1) - p1;
  EXPECT_EQ(p0 * fire0 + p1 * fire1, Rational(1, 4));
  // output 0 when f = 0 and no fire, or f = 1 and fire
  EXPECT_EQ(p0 * (Rational(1) - fire0) + p1 * fire1, Rational(1, 2));
}

TEST(Corrector, OutputExactlyFairForManyLaws) {
  for (Rational p1 : {Rational(0), Rational(1, 3), Rational(2, 5), Rational(1, 2), Rational(7, 9), Rational(1)}) {
    const Rational fire0 = firing_probability(0, p1), fire1 = firing_probability(1, p1);
    const Rational p0 = Rational(1) - p1;
    EXPECT_EQ(p1 * (Rational(1) - fire1) + p0 * fire0, Rational(1, 2)) << p1.str();
    EXPECT_EQ(p0 * fire0 + p1 * fire1, abs(p0 - Rational(1, 2))) << p1.str();
  }
}

TEST(Corrector, RecordCsvAndVerify) {
  CorrectionRecord r{true, 3, Rational(3, 4), Rational(7, 8), Rational(3, 4), Rational(7, 8)};
  EXPECT_EQ(CorrectionRecord::csv_header(), "fired,u_bits_consumed,prob_lo,prob_hi");
  EXPECT_EQ(r.csv_row(), "1,3,3/4,7/8");
  EXPECT_TRUE(r.verify());
  r.u_lo = Rational(1, 2);
  EXPECT_FALSE(r.verify());
}

TEST(Corrector, CorrectedEqualsExtractedWhenQuiet) {
  ExtractorParams params = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 8));
  for (std::uint64_t s = 0; s < 5000; ++s) {
    BitStream x = BitStream::seeded(derive_seed(s, 1)), y = BitStream::seeded(derive_seed(s, 2), params.q),
              z = BitStream::seeded(derive_seed(s, 3));
    CorrectedBit c = corrected_extract(x, y, z, params);
    ASSERT_TRUE(c.record.verify());
    BitStream x2 = BitStream::seeded(derive_seed(s, 1));
    ASSERT_EQ(c.extracted, eps_extract(x2, params));
    if (!c.record.fired) ASSERT_EQ(c.value, c.extracted);
    else ASSERT_NE(c.value, c.extracted);
  }
}

TEST(Corrector, FiringRateBelowEpsilon) {
  const Rational eps(1, 16);
  ExtractorParams params = choose_params(Rational(1, 2), Rational(3, 4), eps);
  const std::uint64_t n = 100'000;
  std::uint64_t fired = 0, ones = 0;
  for (std::uint64_t s = 0; s < n; ++s) {
    BitStream x = BitStream::seeded(derive_seed(s, 1)), y = BitStream::seeded(derive_seed(s, 2), params.q),
              z = BitStream::seeded(derive_seed(s, 3));
    CorrectedBit c = corrected_extract(x, y, z, params);
    fired += c.record.fired;
    ones += c.value;
  }
  const double e = eps.to_double();
  EXPECT_LT(static_cast<double>(fired) / n, e + 3 * lab::binomial_sigma(e, n));
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 3 * lab::binomial_sigma(0.5, n));
}

TEST(Corrector, LargerBudgetKeepsDecisions) {
  ExtractorParams params = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 8));
  for (std::uint64_t s = 0; s < 2000; ++s) {
    auto run = [&](std::size_t budget) {
      return correct_bit(BitStream::seeded(derive_seed(s, 1)), BitStream::seeded(derive_seed(s, 2), params.q),
                         BitStream::seeded(derive_seed(s, 3)), params, budget);
    };
    auto a = run(64), b = run(4096);
    ASSERT_EQ(a.first, b.first);
    ASSERT_EQ(a.second.u_bits_consumed, b.second.u_bits_consumed);
  }
}

TEST(Corrector, VectorQuietMatchesExtractor) {
  const Rational p(1, 2), pp(3, 4), eps(1, 8), q(1, 2);
  std::uint64_t any_fire = 0;
  const std::uint64_t n = 20'000;
  for (std::uint64_t s = 0; s < n; ++s) {
    BitStream x = BitStream::seeded(derive_seed(s, 1)), y = BitStream::seeded(derive_seed(s, 2), q),
              z = BitStream::seeded(derive_seed(s, 3));
    VectorCorrected vc = vector_correct(x, y, z, eps, p, pp);
    BitStream plain = vector_extract(BitStream::seeded(derive_seed(s, 1)), eps, p, pp);
    bool fired = false;
    for (std::uint64_t i = 1; i <= 8; ++i) {
      Bit v = vc.output.at(i);
      if (vc.records->record(Index(i)).fired) fired = true;
      else ASSERT_EQ(v, plain.at(i));
    }
    any_fire += fired;
  }
  const double e = eps.to_double();
  EXPECT_LT(static_cast<double>(any_fire) / n, e + 3 * lab::binomial_sigma(e, n));
}

TEST(Corrector, VectorCoordinatesUseDisjointRows) {
  const Rational p(1, 2), pp(3, 4), eps(1, 8), q(1, 2);
  std::unordered_map<std::uint64_t, Bit> row2;
  for (std::uint64_t t = 1; t <= 400; ++t) row2.emplace(pair_index(2, t), 1);
  for (std::uint64_t s = 0; s < 300; ++s) {
    auto make = [&](bool override_row) {
      BitStream x = BitStream::seeded(derive_seed(s, 1)), y = BitStream::seeded(derive_seed(s, 2), q),
                z = BitStream::seeded(derive_seed(s, 3));
      if (override_row) {
        x = BitStream::overlay(x, row2);
        y = BitStream::overlay(y, row2);
        z = BitStream::overlay(z, row2);
      }
      return vector_correct(x, y, z, eps, p, pp);
    };
    VectorCorrected a = make(false), b = make(true);
    ASSERT_EQ(a.output.at(1), b.output.at(1));
  }
}
