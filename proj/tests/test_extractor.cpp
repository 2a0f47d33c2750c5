#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <unordered_map>

#include "thicken/extractor.hpp"
#include "thicken/lab/enumerate.hpp"
#include "thicken/lab/stats.hpp"

using namespace thicken;
using lab::enumerate_conditional;

namespace {

// P(Bin(k, p) < ell) by summing over all 2^k outcomes
Rational binomial_tail_by_enumeration(unsigned k, const Rational& p, unsigned ell) {
  Rational total(0);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << k); ++code) {
    unsigned ones = __builtin_popcountll(code);
    if (ones < ell) total += pow(p, ones) * pow(Rational(1) - p, k - ones);
  }
  return total;
}

}  // namespace

TEST(Extractor, ParityExamples) {
  BitStream a = BitStream::parse("101");
  EXPECT_EQ(parity_a(a, 3), 0);
  BitStream b = BitStream::parse("0000000");
  EXPECT_EQ(parity_a(b, 7), 0);
  BitStream c = BitStream::parse("11111");
  EXPECT_EQ(parity_a(c, 5), 1);
  EXPECT_EQ(c.consumed(), 5u);
  EXPECT_THROW(parity_a(c, 0), InvalidArgument);
}

TEST(Extractor, VonNeumannExamples) {
  // k = 1: pairs start at positions (3,4)
  BitStream x = BitStream::parse("0" "0" "00" "10");
  VonNeumannBit v = vn_bit_b(x, 1);
  EXPECT_EQ(v.bit, 1);
  EXPECT_EQ(v.stop_index, 2u);
  BitStream y = BitStream::parse("0" "0" "01");
  VonNeumannBit w = vn_bit_b(y, 1);
  EXPECT_EQ(w.bit, 0);
  EXPECT_EQ(w.stop_index, 1u);
  BitStream z = BitStream::parse("0" "0" "00" "11" "00");
  EXPECT_THROW(vn_bit_b(z, 1, 3), BudgetExceeded);
}

TEST(Extractor, VonNeumannFairAtHighBias) {
  const std::uint64_t n = 1'000'000;
  std::uint64_t ones = 0;
  for (std::uint64_t s = 0; s < n; ++s) {
    BitStream x = BitStream::seeded(s, Rational(9, 10));
    ones += vn_bit_b(x, 1).bit;
  }
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.5, 0.002);
}

TEST(Extractor, BinomialTailAgreesWithEnumeration) {
  for (unsigned k = 1; k <= 10; ++k)
    for (unsigned ell = 0; ell <= k + 1; ++ell)
      ASSERT_EQ(binomial_lower_tail(k, Rational(3, 4), ell), binomial_tail_by_enumeration(k, Rational(3, 4), ell));
  EXPECT_EQ(binomial_tail_by_enumeration(6, Rational(3, 4), 3), Rational(77, 2048));
}

TEST(Extractor, ChooseParamsTenth) {
  ExtractorParams p = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 10));
  EXPECT_EQ(p.ell_prime, 3u);
  EXPECT_EQ(p.k, 6u);
  EXPECT_EQ(p.q, Rational(1, 2));
  EXPECT_EQ(p.r, Rational(2, 3));
  // ell' minimal: (1/3)^2 = 1/9 is not below 1/20, (1/3)^3 = 1/27 is
  EXPECT_FALSE(pow(Rational(1, 3), 2) < Rational(1, 20));
  EXPECT_TRUE(pow(Rational(1, 3), 3) < Rational(1, 20));
  // k minimal: k = 5 misses the tail target
  EXPECT_LT(binomial_tail_by_enumeration(6, Rational(3, 4), 3), Rational(1, 20));
  EXPECT_FALSE(binomial_tail_by_enumeration(5, Rational(3, 4), 3) < Rational(1, 20));
}

TEST(Extractor, ChooseParamsVanishingBias) {
  for (Rational eps : {Rational(1, 2), Rational(1, 10), Rational(1, 1000)}) {
    ExtractorParams p = choose_params(Rational(1, 3), Rational(2, 3), eps);
    EXPECT_EQ(p.ell_prime, 1u);
  }
}

TEST(Extractor, ChooseParamsMonotoneInEpsilon) {
  ExtractorParams loose = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 2));
  ExtractorParams tight = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 10));
  EXPECT_LT(loose.k, tight.k);
  Rational prev_k(0);
  for (int m = 1; m <= 12; ++m) {
    ExtractorParams p = choose_params(Rational(1, 2), Rational(3, 4), Rational::pow2(-m));
    EXPECT_LE(prev_k, Rational(static_cast<long>(p.k)));
    prev_k = Rational(static_cast<long>(p.k));
  }
}

TEST(Extractor, ChooseParamsErrors) {
  EXPECT_THROW(choose_params(Rational(1, 2), Rational(1, 2), Rational(1, 10)), DegenerateParameters);
  EXPECT_THROW(choose_params(Rational(1, 2), Rational(1), Rational(1, 10)), DegenerateParameters);
  EXPECT_THROW(choose_params(Rational(1, 2), Rational(3, 4), Rational(0)), InvalidArgument);
}

TEST(Extractor, SerializeFlatRecord) {
  ExtractorParams p = choose_params(Rational(1, 2), Rational(3, 4), Rational(1, 10));
  const std::string s = p.serialize();
  for (const char* line : {"p=1/2\n", "p_prime=3/4\n", "q=1/2\n", "r=2/3\n", "k=6\n", "epsilon=1/10\n", "ell_prime=3\n"})
    EXPECT_NE(s.find(line), std::string::npos) << line;
}

TEST(Extractor, ExtractComposition) {
  ExtractorParams p = ExtractorParams::manual(Rational(1, 2), Rational(3, 4), Rational(1, 10), 4, 1);
  // k zeros, one skipped position, then pair (0,1)
  BitStream x = BitStream::parse("0000" "0" "01");
  EXPECT_EQ(eps_extract(x, p), 0);
  BitStream y = BitStream::parse("1000" "0" "10");
  Extraction e = extract(y, p);
  EXPECT_EQ(e.parity, 1);
  EXPECT_EQ(e.vn, 1);
  EXPECT_EQ(e.value, 0);
  EXPECT_EQ(e.window_ones, 1u);
}

// every x prefix of length 4 + 1 + 6 at p = 1/2, pair budget 3, conditioned on a stop
TEST(Extractor, FairOnEnumeratedPrefixes) {
  ExtractorParams p = ExtractorParams::manual(Rational(1, 2), Rational(3, 4), Rational(1, 10), 4, 1, 3);
  Rational ones(0), stopped(0);
  const Rational weight = Rational::pow2(-11);
  for (std::uint64_t code = 0; code < 2048; ++code) {
    std::vector<Bit> bits(11);
    for (int i = 0; i < 11; ++i) bits[i] = static_cast<Bit>((code >> i) & 1);
    BitStream x = BitStream::recorded(bits);
    try {
      Bit f = eps_extract(x, p);
      stopped += weight;
      if (f) ones += weight;
    } catch (const BudgetExceeded&) {
    }
  }
  EXPECT_EQ(ones / stopped, Rational(1, 2));
}

TEST(Extractor, ParityLawExamples) {
  ExtractorParams p = ExtractorParams::manual(Rational(1, 2), Rational(3, 4), Rational(1, 10), 2, 1);
  std::vector<Bit> none{0, 0}, one{1, 0}, two{1, 1};
  EXPECT_EQ(cond_law_a(none, p).prob_one.lo(), Rational(0));
  EXPECT_EQ(cond_law_a(one, p).prob_one.lo(), Rational(2, 3));
  ConditionalLaw l2 = cond_law_a(two, p);
  EXPECT_EQ(l2.prob_one.lo(), Rational(4, 9));
  EXPECT_TRUE(l2.prob_one.is_exact());
  std::vector<Bit> wrong{1, 1, 1};
  EXPECT_THROW(cond_law_a(wrong, p), LengthMismatch);
}

// the closed form against brute force over (X, Y) given max(X, Y)
TEST(Extractor, ParityLawMatchesEnumeration) {
  const Rational p(1, 2), pp(3, 4);
  for (unsigned k = 1; k <= 5; ++k) {
    ExtractorParams params = ExtractorParams::manual(p, pp, Rational(1, 10), k, 1);
    std::vector<Rational> bias(k, p);
    bias.insert(bias.end(), k, params.q);
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << k); ++m) {
      auto t = enumerate_conditional(
          bias,
          [&](const std::vector<Bit>& s) {
            Bit a = 0;
            for (unsigned i = 0; i < k; ++i) a ^= s[i];
            return std::string(a ? "1" : "0");
          },
          [&](const std::vector<Bit>& s) {
            for (unsigned i = 0; i < k; ++i)
              if ((s[i] | s[k + i]) != ((m >> i) & 1)) return false;
            return true;
          });
      std::vector<Bit> window(k);
      for (unsigned i = 0; i < k; ++i) window[i] = static_cast<Bit>((m >> i) & 1);
      Rational expected = t.conditional.count("1") ? t.conditional.at("1") : Rational(0);
      ASSERT_EQ(cond_law_a(window, params).prob_one.lo(), expected) << "k=" << k << " m=" << m;
    }
  }
}

TEST(Extractor, ScanLawExamples) {
  // r = 1/2 with all pairs (1,1): b is fair, so f is fair whatever a is
  ExtractorParams half = ExtractorParams::manual(Rational(1, 4), Rational(1, 2), Rational(1, 10), 1, 1, 64);
  ASSERT_EQ(half.r, Rational(1, 2));
  BitStream ones = BitStream::from_function([](const Index&) -> Bit { return 1; });
  ConditionalLaw f = cond_law_f(ones, half);
  while (f.prob_one.refine()) {
  }
  EXPECT_LE(f.prob_one.lo(), Rational(1, 2));
  EXPECT_GE(f.prob_one.hi(), Rational(1, 2));
  EXPECT_LT(f.prob_one.width(), Rational::pow2(-30));

  // all pairs (1,0): b = 1 at the first stop; window all zero makes f = b
  ExtractorParams p = ExtractorParams::manual(Rational(1, 2), Rational(3, 4), Rational(1, 10), 2, 1, 200);
  BitStream tens = BitStream::from_function([](const Index& i) -> Bit {
    std::uint64_t v = i.value();
    if (v <= 3) return 0;
    return (v - 4) % 2 == 0 ? 1 : 0;
  });
  ConditionalLaw g = cond_law_f(tens, p);
  Rational prev_width = g.prob_one.width();
  while (g.prob_one.refine()) {
    ASSERT_LE(g.prob_one.width(), prev_width);
    prev_width = g.prob_one.width();
  }
  EXPECT_EQ(g.prob_one.hi(), Rational(1));
  EXPECT_GT(g.prob_one.lo(), Rational(1) - Rational::pow2(-100));
}

// b given merged pairs against enumeration over 5 pairs plus the exact tail
TEST(Extractor, ScanLawMatchesEnumeration) {
  const Rational p(1, 2), pp(3, 4);
  ExtractorParams params = ExtractorParams::manual(p, pp, Rational(1, 10), 1, 1, 5);
  std::vector<Rational> bias(10, p);
  bias.insert(bias.end(), 10, params.q);
  for (std::uint64_t m : {std::uint64_t{0x2AA}, std::uint64_t{0x3FF}, std::uint64_t{0x155}, std::uint64_t{0x1B3}}) {
    auto t = enumerate_conditional(
        bias,
        [](const std::vector<Bit>& s) -> std::string {
          for (int j = 0; j < 5; ++j)
            if (s[2 * j] != s[2 * j + 1]) return s[2 * j] ? "1" : "0";
          return "c";
        },
        [&](const std::vector<Bit>& s) {
          for (int i = 0; i < 10; ++i)
            if ((s[i] | s[10 + i]) != ((m >> i) & 1)) return false;
          return true;
        });
    std::vector<Bit> merged(12, 0);
    for (int i = 0; i < 10; ++i) merged[2 + i] = static_cast<Bit>((m >> i) & 1);
    ConditionalLaw law = cond_law_f(BitStream::recorded(merged), params);
    while (law.prob_one.refine()) {
    }
    auto get = [&](const char* o) { return t.conditional.count(o) ? t.conditional.at(o) : Rational(0); };
    EXPECT_EQ(law.prob_one.lo(), get("1"));
    EXPECT_EQ(law.prob_one.hi(), get("1") + get("c"));
  }
}

TEST(Extractor, WindowAndScanFactorizeGivenMerged) {
  const Rational p(1, 2), pp(3, 4);
  ExtractorParams params = ExtractorParams::manual(p, pp, Rational(1, 10), 2, 1);
  const Rational q = params.q;
  // x: two window bits then two scan pairs; y alongside
  std::vector<Rational> bias(6, p);
  bias.insert(bias.end(), 6, q);
  for (std::uint64_t m = 0; m < 64; ++m) {
    auto t = enumerate_conditional(
        bias,
        [](const std::vector<Bit>& s) {
          std::string a = (s[0] ^ s[1]) ? "1" : "0";
          std::string b = s[2] != s[3] ? (s[2] ? "1" : "0") : (s[4] != s[5] ? (s[4] ? "1" : "0") : "c");
          return a + b;
        },
        [&](const std::vector<Bit>& s) {
          for (int i = 0; i < 6; ++i)
            if ((s[i] | s[6 + i]) != ((m >> i) & 1)) return false;
          return true;
        });
    std::map<std::string, Rational> ma, mb;
    for (const auto& [k, v] : t.conditional) {
      ma[k.substr(0, 1)] += v;
      mb[k.substr(1)] += v;
    }
    for (const auto& [k, v] : t.conditional) ASSERT_EQ(v, ma[k.substr(0, 1)] * mb[k.substr(1)]);
  }
}

TEST(Extractor, VectorCoordinatesIndependent) {
  const std::uint64_t n = 100'000;
  std::vector<std::array<std::uint64_t, 4>> pairs(16, {0, 0, 0, 0});
  for (std::uint64_t s = 0; s < n; ++s) {
    BitStream out = vector_extract(BitStream::seeded(s, Rational(1, 2)), Rational(1, 2), Rational(1, 2), Rational(3, 4));
    Bit v[4];
    for (int i = 0; i < 4; ++i) v[i] = out.at(i + 1);
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) ++pairs[4 * a + b][2 * v[a] + v[b]];
  }
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b) {
      const auto& c = pairs[4 * a + b];
      EXPECT_GT(lab::chi_square_independence({{c[0], c[1]}, {c[2], c[3]}}).p_value, lab::bonferroni(0.01, 6));
    }
}

TEST(Extractor, VectorUsesDisjointRows) {
  // coordinate i reads only row i of the grid: overriding row 2 leaves coordinate 1 alone
  std::unordered_map<std::uint64_t, Bit> flips;
  for (std::uint64_t t = 1; t <= 400; ++t) flips.emplace(pair_index(2, t), 1);
  for (std::uint64_t s = 0; s < 200; ++s) {
    BitStream base = BitStream::seeded(s);
    BitStream a = vector_extract(base, Rational(1, 2), Rational(1, 2), Rational(3, 4));
    BitStream b = vector_extract(BitStream::overlay(base, flips), Rational(1, 2), Rational(1, 2), Rational(3, 4));
    ASSERT_EQ(a.at(1), b.at(1));
  }
}

TEST(Extractor, NoExactExtractorOnSmallWindows) {
  EXPECT_TRUE(no_extractor_search(0, Rational(1, 2), Rational(1, 3)).empty());
  EXPECT_TRUE(no_extractor_search(2, Rational(1, 2), Rational(1, 3)).empty());
  EXPECT_TRUE(no_extractor_search(3, Rational(1, 3), Rational(1, 4)).empty());
  EXPECT_THROW(no_extractor_search(5, Rational(1, 2), Rational(1, 3)), FeasibilityGuard);
  EXPECT_THROW(no_extractor_search(21, Rational(1, 2), Rational(1, 3)), FeasibilityGuard);
}

TEST(Extractor, SearchAcceptsOnlyExactCandidates) {
  // the identity and its negation are fair at p = 1/2 but see the merged bit
  std::vector<TruthTable> cands = {{0, 1}, {1, 0}, {0, 0}};
  EXPECT_TRUE(no_extractor_search(1, Rational(1, 2), Rational(1, 3), &cands).empty());
}
