#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "thicken/density.hpp"
#include "thicken/index.hpp"
#include "thicken/lab/stats.hpp"
#include "thicken/lazy_real.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

using namespace thicken;

TEST(Rational, LowestTermsAndParse) {
  EXPECT_EQ(Rational::parse("6/8"), Rational(3, 4));
  EXPECT_EQ(Rational::parse("-2/4").str(), "-1/2");
  EXPECT_EQ(Rational::parse(" 5 "), Rational(5));
  EXPECT_THROW(Rational::parse("3/0"), InvalidArgument);
  EXPECT_THROW(Rational::parse("1/x"), InvalidArgument);
  EXPECT_THROW(Rational::parse(""), InvalidArgument);
  EXPECT_EQ(Rational::dyadic(mpz_class(5), 3), Rational(5, 8));
  EXPECT_EQ(Rational::pow2(-4), Rational(1, 16));
}

// walk the anti-diagonals by hand
TEST(Pairing, MatchesDiagonalWalk) {
  std::uint64_t n = 1;
  for (std::uint64_t d = 2; d <= 200; ++d) {
    for (std::uint64_t i = 1; i < d; ++i, ++n) {
      const std::uint64_t j = d - i;
      ASSERT_EQ(pair_index(i, j), n);
      ASSERT_EQ(unpair(n), std::make_pair(i, j));
    }
  }
}

TEST(Pairing, SpotValuesAndErrors) {
  EXPECT_EQ(pair_index(1, 1), 1u);
  EXPECT_EQ(pair_index(1, 2), 2u);
  EXPECT_EQ(pair_index(2, 1), 3u);
  EXPECT_EQ(unpair(pair_index(7, 13)), (std::pair<std::uint64_t, std::uint64_t>(7, 13)));
  EXPECT_THROW(pair_index(0, 1), InvalidArgument);
  EXPECT_THROW(pair_index(1, 0), InvalidArgument);
  EXPECT_THROW(unpair(0), InvalidArgument);
}

TEST(Pairing, RoundTripUpToAMillion) {
  for (std::uint64_t n = 1; n <= 1'000'000; ++n) {
    auto [i, j] = unpair(n);
    ASSERT_EQ(pair_index(i, j), n);
  }
}

TEST(Pairing, LargeValuesRoundTrip) {
  for (std::uint64_t n : {std::uint64_t{1} << 40, (std::uint64_t{1} << 62) + 12345, UINT64_MAX - 7}) {
    auto [i, j] = unpair(n);
    EXPECT_EQ(pair_index(i, j), n);
  }
}

TEST(Pairing, IntegerEnumeration) {
  EXPECT_EQ(z_to_n(0), 1u);
  EXPECT_EQ(z_to_n(1), 2u);
  EXPECT_EQ(z_to_n(-1), 3u);
  EXPECT_EQ(z_to_n(2), 4u);
  EXPECT_EQ(z_to_n(-2), 5u);
  for (std::int64_t i = -10000; i <= 10000; ++i) ASSERT_EQ(n_to_z(z_to_n(i)), i);
}

TEST(Index, SymbolicPairsAgreeWithNumericPairs) {
  for (std::uint64_t i = 1; i < 40; ++i)
    for (std::uint64_t j = 1; j < 40; ++j) {
      Index p = pair(Index(i), Index(j));
      ASSERT_TRUE(p.is_small());
      ASSERT_EQ(p.value(), pair_index(i, j));
    }
  Index big = pair(Index(std::uint64_t{1} << 61), Index(std::uint64_t{1} << 61));
  EXPECT_FALSE(big.is_small());
  auto [a, b] = big.unpair();
  EXPECT_EQ(a.value(), std::uint64_t{1} << 61);
  EXPECT_EQ(b.value(), std::uint64_t{1} << 61);
}

TEST(Index, CodeLengthDependsOnlyOnValue) {
  EXPECT_EQ(pair(Index(1), Index(1)).code_length(), Index(1).code_length());
  EXPECT_EQ(pair(Index(1), Index(2)).code_length(), Index(2).code_length());
  EXPECT_EQ(Index::pair_key(Index::small_key(1), Index::small_key(1)).code_length, Index(1).code_length());
  for (std::uint64_t i = 1; i < 60; ++i)
    for (std::uint64_t j = 1; j < 60; ++j) {
      Index p = pair(Index(i), Index(j));
      ASSERT_EQ(p.code_length(), Index(p.value()).code_length());
      ASSERT_EQ(Index::pair_key(Index::small_key(i), Index::small_key(j)).code_length, p.code_length());
    }
  // Kraft sum over 1..2^16 stays below 3/8
  double kraft = 0;
  for (std::uint64_t v = 1; v < (1u << 16); ++v) kraft += std::ldexp(1.0, -static_cast<int>(Index(v).code_length()));
  EXPECT_LT(kraft, 0.375);
}

TEST(BitStream, RecordedReplayAndExhaustion) {
  BitStream s = BitStream::parse("0110");
  EXPECT_EQ(s.at(2), 1);
  EXPECT_EQ(s.at(2), 1);
  EXPECT_EQ(s.at(1), 0);
  EXPECT_EQ(s.consumed(), 2u);
  EXPECT_EQ(s.prefix(4), "0110");
  EXPECT_EQ(s.consumed(), 4u);
  EXPECT_THROW(s.at(5), StreamExhausted);
  EXPECT_THROW(BitStream::parse("01a"), InvalidArgument);
}

TEST(BitStream, SeededIsDeterministic) {
  BitStream a = BitStream::seeded(99, Rational(1, 3)), b = BitStream::seeded(99, Rational(1, 3));
  EXPECT_EQ(a.prefix(500), b.prefix(500));
  BitStream c = BitStream::seeded(100, Rational(1, 3));
  EXPECT_NE(a.prefix(500), c.prefix(500));
}

TEST(BitStream, SeededBiasMatchesExactly) {
  const std::uint64_t n = 200'000;
  for (Rational p : {Rational(1, 2), Rational(1, 3), Rational(3, 4)}) {
    BitStream s = BitStream::seeded(5, p);
    std::uint64_t ones = 0;
    for (std::uint64_t i = 1; i <= n; ++i) ones += s.at(i);
    double f = static_cast<double>(ones) / n;
    EXPECT_NEAR(f, p.to_double(), 4 * lab::binomial_sigma(p.to_double(), n));
  }
}

TEST(GridStream, CellsFollowPairing) {
  GridStream g = split_grid(BitStream::parse("011"));
  EXPECT_EQ(g.at(Index(1), Index(1)), 0);
  EXPECT_EQ(g.at(Index(1), Index(2)), 1);
  EXPECT_EQ(g.at(Index(2), Index(1)), 1);
  EXPECT_THROW(g.at(Index(1), Index(3)), StreamExhausted);
}

TEST(GridStream, RowsAreIndependent) {
  std::vector<std::vector<std::uint64_t>> table(2, std::vector<std::uint64_t>(2, 0));
  for (std::uint64_t s = 0; s < 100'000; ++s) {
    GridStream g = split_grid(BitStream::seeded(s));
    ++table[g.at(Index(1), Index(1))][g.at(Index(2), Index(1))];
  }
  EXPECT_GT(lab::chi_square_independence(table).p_value, 0.01);
}

TEST(DyadicReal, UniformFromBitsEnclosures) {
  DyadicReal u = uniform_from_bits(BitStream::parse("100"));
  for (int i = 0; i < 3; ++i) u.refine();
  EXPECT_EQ(u.lo(), Rational(1, 2));
  EXPECT_EQ(u.hi(), Rational(5, 8));
  DyadicReal v = uniform_from_bits(BitStream::parse("011"));
  for (int i = 0; i < 3; ++i) v.refine();
  EXPECT_EQ(v.lo(), Rational(3, 8));
  EXPECT_EQ(v.hi(), Rational(1, 2));
  DyadicReal w = uniform_from_bits(BitStream::parse(std::string(20, '0')));
  for (int k = 1; k <= 20; ++k) {
    w.refine();
    ASSERT_EQ(w.lo(), Rational(0));
    ASSERT_EQ(w.width(), Rational::pow2(-k));
  }
  EXPECT_EQ(bits_consumed(w), 20u);
}

TEST(DyadicReal, CompareOrders) {
  DyadicReal a = DyadicReal::interval(Rational(1, 4), Rational(3, 8), [](Rational&, Rational&) { return false; });
  DyadicReal b = DyadicReal::interval(Rational(1, 2), Rational(5, 8), [](Rational&, Rational&) { return false; });
  EXPECT_EQ(compare(a, b).order, Order::less);

  DyadicReal u = uniform_from_bits(BitStream::parse("10000000"));
  DyadicReal q = DyadicReal::exact(Rational(1, 4));
  Comparison c = compare(u, q);
  EXPECT_EQ(c.order, Order::greater);
  EXPECT_EQ(c.refinements, 2u);
  EXPECT_EQ(bits_consumed(u), 1u);

  DyadicReal t1 = DyadicReal::exact(Rational(1, 3)), t2 = DyadicReal::exact(Rational(1, 3));
  EXPECT_THROW(compare(t1, t2, 64), BudgetExceeded);
}

TEST(Density, ExamplesFromFairBits) {
  BinaryExpansion half(Rational(1, 2)), quarter(Rational(1, 4));
  BitStream s0 = BitStream::parse("0");
  DensityBit d0 = bernoulli_from_fair(s0, half);
  EXPECT_EQ(d0.value, 1);
  EXPECT_EQ(d0.consumed, 1u);
  // a leading 1 only ties with 0.1000..., the next 1 decides U > 1/2
  BitStream s1 = BitStream::parse("11");
  DensityBit d1 = bernoulli_from_fair(s1, half);
  EXPECT_EQ(d1.value, 0);
  EXPECT_EQ(d1.consumed, 2u);
  BitStream s1b = BitStream::parse("1");
  EXPECT_THROW(bernoulli_from_fair(s1b, half), StreamExhausted);
  BitStream s2 = BitStream::parse("00");
  DensityBit d2 = bernoulli_from_fair(s2, quarter);
  EXPECT_EQ(d2.value, 1);
  EXPECT_EQ(d2.consumed, 2u);
  BitStream s3 = BitStream::parse("011");
  DensityBit d3 = bernoulli_from_fair(s3, quarter);
  EXPECT_EQ(d3.value, 0);
  EXPECT_EQ(d3.consumed, 3u);
}

TEST(Density, BinaryExpansionDigits) {
  BinaryExpansion third(Rational(1, 3));
  for (std::uint64_t i = 1; i <= 200; ++i) ASSERT_EQ(third.digit(i), i % 2 == 0 ? 1 : 0);
  BinaryExpansion five_eighths(Rational(5, 8));
  EXPECT_EQ(five_eighths.digit(1), 1);
  EXPECT_EQ(five_eighths.digit(2), 0);
  EXPECT_EQ(five_eighths.digit(3), 1);
  for (std::uint64_t i = 4; i <= 100; ++i) ASSERT_EQ(five_eighths.digit(i), 0);
}

TEST(Density, TransformMeanAndConsumption) {
  const std::uint64_t n = 1'000'000;
  for (Rational q : {Rational(1, 4), Rational(1, 3), Rational(2, 3)}) {
    BitStream fair = BitStream::seeded(11);
    BitStream out = density_transform(fair, q);
    std::uint64_t ones = 0;
    for (std::uint64_t i = 1; i <= n; ++i) ones += out.at(i);
    const double f = static_cast<double>(ones) / n;
    EXPECT_NEAR(f, q.to_double(), 4 * lab::binomial_sigma(q.to_double(), n)) << q.str();
  }
  // fair bits per output bit: geometric with mean 2
  BitStream fair = BitStream::seeded(12);
  BinaryExpansion q(Rational(1, 3));
  std::uint64_t used = 0;
  for (std::uint64_t i = 0; i < 100'000; ++i) used += bernoulli_from_fair(fair, q).consumed;
  EXPECT_NEAR(static_cast<double>(used) / 100'000, 2.0, 0.02);
  EXPECT_THROW(density_transform(BitStream::seeded(1), Rational(0)), InvalidArgument);
}

TEST(Streams, DeriveSeedSeparatesTags) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 1000; ++t) seen.insert(derive_seed(42, t));
  EXPECT_EQ(seen.size(), 1000u);
}
