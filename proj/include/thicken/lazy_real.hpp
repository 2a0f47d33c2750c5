#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <utility>

#include "thicken/errors.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

inline constexpr std::size_t kDefaultRefinementBudget = 4096;

// A real known through a nested sequence of rational enclosures.
class DyadicReal {
 public:
  // Shrinks [lo,hi] in place; returns false when no further progress is possible.
  using Refiner = std::function<bool(Rational& lo, Rational& hi)>;

  DyadicReal() : DyadicReal(Rational(0)) {}

  static DyadicReal exact(Rational value) { return DyadicReal(std::move(value)); }

  static DyadicReal interval(Rational lo, Rational hi, Refiner refine) {
    if (hi < lo) throw InvalidArgument("DyadicReal: empty enclosure");
    DyadicReal d;
    d.lo_ = std::move(lo);
    d.hi_ = std::move(hi);
    d.refine_ = std::make_shared<Refiner>(std::move(refine));
    return d;
  }

  const Rational& lo() const { return lo_; }
  const Rational& hi() const { return hi_; }
  Rational width() const { return hi_ - lo_; }
  bool is_exact() const { return lo_ == hi_; }
  std::size_t refinements() const { return refinements_; }

  bool refine() {
    if (is_exact() || !refine_) return false;
    ++refinements_;
    Rational lo = lo_, hi = hi_;
    bool progressed = (*refine_)(lo, hi);
    // keep the nesting invariant even if a refiner returns a looser bound
    lo_ = max(lo_, lo);
    hi_ = min(hi_, hi);
    return progressed;
  }

 private:
  explicit DyadicReal(Rational value) : lo_(value), hi_(std::move(value)) {}

  Rational lo_;
  Rational hi_;
  std::shared_ptr<Refiner> refine_;
  std::size_t refinements_ = 0;
};

enum class Order { less, greater };

struct Comparison {
  Order order;
  std::size_t refinements;
};

// Each round refines a and then b (a no-op on an exact side) until the
// enclosures separate; the count includes both halves of every round.
inline Comparison compare(DyadicReal& a, DyadicReal& b, std::size_t budget = kDefaultRefinementBudget) {
  std::size_t used = 0;
  for (;;) {
    if (a.hi() < b.lo()) return {Order::less, used};
    if (a.lo() > b.hi()) return {Order::greater, used};
    if (used + 2 > budget)
      throw BudgetExceeded("compare: enclosures still overlap after " + std::to_string(used) + " refinements");
    a.refine();
    b.refine();
    used += 2;
  }
}

// U(z) = sum z_i 2^{-i}; each refinement reads the next bit of z.
inline DyadicReal uniform_from_bits(BitStream z) {
  struct State {
    mpz_class numerator = 0;
    unsigned long bits = 0;
  };
  auto state = std::make_shared<State>();
  return DyadicReal::interval(Rational(0), Rational(1), [z, state](Rational& lo, Rational& hi) mutable {
    Bit b = z.next();
    state->numerator = state->numerator * 2 + b;
    ++state->bits;
    lo = Rational::dyadic(state->numerator, state->bits);
    hi = Rational::dyadic(state->numerator + 1, state->bits);
    return true;
  });
}

// Number of bits read so far by a DyadicReal produced by uniform_from_bits.
inline std::size_t bits_consumed(const DyadicReal& u) { return u.refinements(); }

}  // namespace thicken
