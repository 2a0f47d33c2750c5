#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>

#include "thicken/errors.hpp"
#include "thicken/extractor.hpp"
#include "thicken/lazy_real.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

// The decision certificate: u in [u_lo,u_hi] and p_c in [prob_lo,prob_hi] with the
// product enclosure strictly above 1/2 (fired) or at most 1/2 (not fired).
struct CorrectionRecord {
  bool fired = false;
  std::uint64_t u_bits_consumed = 0;
  Rational prob_lo;
  Rational prob_hi;
  Rational u_lo;
  Rational u_hi;

  bool verify() const {
    if (prob_hi < prob_lo || u_hi < u_lo) return false;
    if (fired) return u_lo * prob_lo > Rational(1, 2);
    return u_hi * prob_hi <= Rational(1, 2);
  }

  static std::string csv_header() { return "fired,u_bits_consumed,prob_lo,prob_hi"; }

  std::string csv_row() const {
    return std::string(fired ? "1" : "0") + "," + std::to_string(u_bits_consumed) + "," + prob_lo.str() + "," +
           prob_hi.str();
  }
};

// f' = 1 iff U(z) * p_c > 1/2, where p_c = P(f = observed | merged). The caller
// supplies a cheap a-priori bound |p_c - 1/2| <= half_bias and a factory for the
// refinable conditional law of f = 1, which is only built when needed.
template <class LawFactory>
CorrectionRecord decide_correction(Bit observed, const Rational& half_bias, LawFactory&& make_law, BitStream z,
                                   std::size_t budget = kDefaultRefinementBudget) {
  const Rational half(1, 2);
  // U is known to lie in [n, n+1] / 2^bits
  mpz_class n = 0;
  unsigned long bits = 0;
  Rational plo = max(Rational(0), half - half_bias);
  Rational phi = min(Rational(1), half + half_bias);
  std::optional<ConditionalLaw> law;
  bool law_stuck = false;
  auto absorb_law = [&]() {
    const DyadicReal& one = law->prob_one;
    if (observed) {
      if (plo < one.lo()) plo = one.lo();
      if (one.hi() < phi) phi = one.hi();
    } else {
      Rational lo = Rational(1) - one.hi();
      Rational hi = Rational(1) - one.lo();
      if (plo < lo) plo = std::move(lo);
      if (hi < phi) phi = std::move(hi);
    }
  };
  // sign of (n + d) * p - 2^(bits-1), compared as integers
  mpz_class lhs, rhs;
  auto above_half = [&](unsigned long d, const Rational& p) {
    lhs = n + d;
    mpz_mul(lhs.get_mpz_t(), lhs.get_mpz_t(), p.get().get_num_mpz_t());
    mpz_mul_2exp(lhs.get_mpz_t(), lhs.get_mpz_t(), 1);
    mpz_mul_2exp(rhs.get_mpz_t(), p.get().get_den_mpz_t(), bits);
    return cmp(lhs, rhs);
  };
  auto record = [&](bool fired) {
    return CorrectionRecord{fired, bits, plo, phi, Rational::dyadic(n, bits), Rational::dyadic(n + 1, bits)};
  };
  for (std::size_t steps = 0;; ++steps) {
    if (above_half(0, plo) > 0) return record(true);
    if (above_half(1, phi) <= 0) return record(false);
    if (steps >= budget) throw BudgetExceeded("corrector: product enclosure still straddles 1/2");
    // refine whichever factor contributes more to the width of the product:
    // u-width * phi versus (phi - plo) * u_hi, i.e. phi versus (phi - plo) * (n+1)
    bool refine_law = false;
    if (!law_stuck) {
      Rational p_part = (phi - plo) * Rational(n + 1, mpz_class(1));
      refine_law = p_part > phi;
    }
    if (refine_law) {
      if (!law) {
        law.emplace(make_law());
      } else if (!law->prob_one.refine()) {
        law_stuck = true;
      }
      absorb_law();
    } else {
      n = n * 2 + z.next();
      ++bits;
    }
  }
}

inline BitStream merged_stream(BitStream x, BitStream y) {
  BitStream xs = x.fork(), ys = y.fork();
  return BitStream::from_function([xs, ys](const Index& i) mutable -> Bit { return xs.at(i) ? Bit{1} : ys.at(i); });
}

inline Rational extraction_half_bias(const ExtractorParams& params, std::uint64_t known_ones) {
  return pow(params.bias_base(), known_ones) / Rational(2);
}

// Corrector for an extraction already computed from x.
inline CorrectionRecord correct_extraction(const Extraction& e, BitStream x, BitStream y, BitStream z,
                                           const ExtractorParams& params,
                                           std::size_t budget = kDefaultRefinementBudget) {
  auto make_law = [&]() { return cond_law_f(merged_stream(x, y), params, e.window_ones); };
  return decide_correction(e.value, extraction_half_bias(params, e.window_ones), make_law, z, budget);
}

inline std::pair<Bit, CorrectionRecord> correct_bit(BitStream x, BitStream y, BitStream z,
                                                    const ExtractorParams& params,
                                                    std::size_t budget = kDefaultRefinementBudget) {
  Extraction e = extract(x, params);
  CorrectionRecord rec = correct_extraction(e, x, y, z, params, budget);
  return {static_cast<Bit>(rec.fired), rec};
}

struct CorrectedBit {
  Bit value;
  Bit extracted;
  CorrectionRecord record;
};

inline CorrectedBit corrected_extract(BitStream x, BitStream y, BitStream z, const ExtractorParams& params,
                                      std::size_t budget = kDefaultRefinementBudget) {
  Extraction e = extract(x, params);
  CorrectionRecord rec = correct_extraction(e, x, y, z, params, budget);
  return {static_cast<Bit>(e.value ^ rec.fired), e.value, rec};
}

// Coordinate i applies corrected_extract to row i of each of the three grids.
class VectorCorrection {
 public:
  VectorCorrection(BitStream x, BitStream y, BitStream z, const Rational& base_epsilon, const Rational& p,
                   const Rational& p_prime, Schedule schedule = Schedule::geometric)
      : x_(split_grid(x.fork())),
        y_(split_grid(y.fork())),
        z_(split_grid(z.fork())),
        cache_(std::make_shared<ParamsCache>(p, p_prime, base_epsilon)),
        schedule_(schedule) {}

  const CorrectedBit& at(const Index& i) {
    auto it = memo_.find(i);
    if (it != memo_.end()) return it->second;
    const ExtractorParams& params = cache_->at(schedule_exponent(schedule_, i));
    return memo_.emplace(i, corrected_extract(x_.row(i), y_.row(i), z_.row(i), params)).first->second;
  }

  Bit bit(const Index& i) { return at(i).value; }
  const CorrectionRecord& record(const Index& i) { return at(i).record; }

 private:
  GridStream x_, y_, z_;
  std::shared_ptr<ParamsCache> cache_;
  Schedule schedule_;
  std::unordered_map<Index, CorrectedBit, IndexHash> memo_;
};

struct VectorCorrected {
  BitStream output;
  std::shared_ptr<VectorCorrection> records;
};

inline VectorCorrected vector_correct(BitStream x, BitStream y, BitStream z, const Rational& base_epsilon,
                                      const Rational& p, const Rational& p_prime,
                                      Schedule schedule = Schedule::geometric) {
  auto vc = std::make_shared<VectorCorrection>(x, y, z, base_epsilon, p, p_prime, schedule);
  return {BitStream::from_function([vc](const Index& i) { return vc->bit(i); }), vc};
}

}  // namespace thicken
