#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <tuple>
#include <string>
#include <unordered_map>
#include <vector>

#include "thicken/errors.hpp"
#include "thicken/index.hpp"
#include "thicken/lazy_real.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

inline constexpr std::uint64_t kDefaultPairBudget = 128;

struct ExtractorParams {
  Rational p;
  Rational p_prime;
  Rational q;
  Rational r;
  Rational epsilon;
  std::uint64_t k = 1;
  std::uint64_t ell_prime = 1;
  std::uint64_t pair_budget = kDefaultPairBudget;

  // Params with a hand-picked window; the epsilon guarantee is not checked.
  static ExtractorParams manual(const Rational& p, const Rational& p_prime, const Rational& epsilon, std::uint64_t k,
                                std::uint64_t ell_prime, std::uint64_t pair_budget = kDefaultPairBudget) {
    check_densities(p, p_prime);
    if (k == 0) throw InvalidArgument("parity window must be positive");
    ExtractorParams out;
    out.p = p;
    out.p_prime = p_prime;
    out.q = (p_prime - p) / (Rational(1) - p);
    out.r = p / p_prime;
    out.epsilon = epsilon;
    out.k = k;
    out.ell_prime = ell_prime;
    out.pair_budget = pair_budget;
    return out;
  }

  // |1-2r|, the per-point bias factor.
  Rational bias_base() const { return abs(Rational(1) - Rational(2) * r); }

  std::string serialize() const {
    std::ostringstream os;
    os << "p=" << p.str() << "\n"
       << "p_prime=" << p_prime.str() << "\n"
       << "q=" << q.str() << "\n"
       << "r=" << r.str() << "\n"
       << "k=" << k << "\n"
       << "epsilon=" << epsilon.str() << "\n"
       << "ell_prime=" << ell_prime << "\n";
    return os.str();
  }

  static void check_densities(const Rational& p, const Rational& p_prime) {
    if (p == p_prime || p_prime == Rational(1))
      throw DegenerateParameters("degenerate densities p=" + p.str() + " p'=" + p_prime.str());
    if (p.sign() <= 0 || p_prime < p || p_prime > Rational(1))
      throw InvalidArgument("densities must satisfy 0 < p < p' < 1");
  }
};

// P(Binomial(k, p) < ell), exact.
inline Rational binomial_lower_tail(std::uint64_t k, const Rational& p, std::uint64_t ell) {
  if (ell == 0) return Rational(0);
  if (ell > k) return Rational(1);
  mpz_class a = p.numerator(), d = p.denominator(), b = d - a;
  mpz_class sum = 0, coeff = 1;
  mpz_class apow = 1;
  for (std::uint64_t j = 0; j < ell; ++j) {
    mpz_class bpow;
    mpz_pow_ui(bpow.get_mpz_t(), b.get_mpz_t(), k - j);
    sum += coeff * apow * bpow;
    coeff = coeff * (k - j) / (j + 1);
    apow *= a;
  }
  mpz_class den;
  mpz_pow_ui(den.get_mpz_t(), d.get_mpz_t(), k);
  return Rational(sum, den);
}

inline ExtractorParams choose_params(const Rational& p, const Rational& p_prime, const Rational& epsilon) {
  ExtractorParams::check_densities(p, p_prime);
  if (epsilon.sign() <= 0 || epsilon >= Rational(1)) throw InvalidArgument("epsilon must lie in (0,1)");
  ExtractorParams out = ExtractorParams::manual(p, p_prime, epsilon, 1, 1);
  Rational half_eps = epsilon / Rational(2);
  Rational base = out.bias_base();
  std::uint64_t ell = 1;
  if (!base.is_zero()) {
    Rational power = base;
    while (!(power < half_eps)) {
      power *= base;
      ++ell;
    }
  }
  out.ell_prime = ell;
  auto ok = [&](std::uint64_t k) { return binomial_lower_tail(k, p_prime, ell) < half_eps; };
  std::uint64_t lo = ell, hi = ell;
  while (!ok(hi)) {
    lo = hi + 1;
    hi *= 2;
  }
  while (lo < hi) {
    std::uint64_t mid = lo + (hi - lo) / 2;
    if (ok(mid)) hi = mid;
    else lo = mid + 1;
  }
  out.k = lo;
  return out;
}

// Extractor parameters for epsilon = base * 2^{-m}, computed once per m.
class ParamsCache {
 public:
  ParamsCache(Rational p, Rational p_prime, Rational base_epsilon = Rational(1))
      : p_(std::move(p)), p_prime_(std::move(p_prime)), base_(std::move(base_epsilon)) {
    ExtractorParams::check_densities(p_, p_prime_);
  }

  const ExtractorParams& at(std::uint64_t m) {
    auto it = table_.find(m);
    if (it != table_.end()) return it->second;
    Rational eps = base_ * Rational::pow2(-static_cast<long>(m));
    return table_.emplace(m, choose_params(p_, p_prime_, eps)).first->second;
  }

  const Rational& p() const { return p_; }
  const Rational& p_prime() const { return p_prime_; }

 private:
  Rational p_;
  Rational p_prime_;
  Rational base_;
  std::unordered_map<std::uint64_t, ExtractorParams> table_;
};

// Stream-like types only need at(std::uint64_t) -> Bit.
template <class Stream>
Bit parity_a(Stream& x, std::uint64_t k) {
  if (k == 0) throw InvalidArgument("parity window must be positive");
  Bit a = 0;
  for (std::uint64_t i = 1; i <= k; ++i) a ^= x.at(i);
  return a;
}

struct VonNeumannBit {
  Bit bit;
  std::uint64_t stop_index;
};

// First member of the first unequal pair (k+2m, k+2m+1), m = 1, 2, ...
template <class Stream>
VonNeumannBit vn_bit_b(Stream& x, std::uint64_t k, std::uint64_t pair_budget = kDefaultPairBudget) {
  for (std::uint64_t m = 1; m <= pair_budget; ++m) {
    Bit u = x.at(k + 2 * m);
    Bit v = x.at(k + 2 * m + 1);
    if (u != v) return {u, m};
  }
  throw BudgetExceeded("von Neumann scan: no unequal pair within " + std::to_string(pair_budget) + " pairs");
}

struct Extraction {
  Bit value;
  Bit parity;
  Bit vn;
  std::uint64_t stop_index;
  std::uint64_t window_ones;
};

template <class Stream>
Extraction extract(Stream& x, const ExtractorParams& params) {
  Bit a = 0;
  std::uint64_t ones = 0;
  for (std::uint64_t i = 1; i <= params.k; ++i) {
    Bit b = x.at(i);
    a ^= b;
    ones += b;
  }
  VonNeumannBit vn = vn_bit_b(x, params.k, params.pair_budget);
  return {static_cast<Bit>(a ^ vn.bit), a, vn.bit, vn.stop_index, ones};
}

template <class Stream>
Bit eps_extract(Stream& x, const ExtractorParams& params) {
  return extract(x, params).value;
}

struct ConditionalLaw {
  DyadicReal prob_one;
};

// P(parity = 1 | ell merged ones) = (1 - (1-2r)^ell) / 2
inline Rational parity_law(const Rational& r, std::uint64_t ell) {
  return (Rational(1) - pow(Rational(1) - Rational(2) * r, ell)) / Rational(2);
}

inline ConditionalLaw cond_law_a(std::span<const Bit> merged_window, const ExtractorParams& params) {
  if (merged_window.size() != params.k)
    throw LengthMismatch("cond_law_a: window of length " + std::to_string(merged_window.size()) + ", expected " +
                         std::to_string(params.k));
  std::uint64_t ell = 0;
  for (Bit b : merged_window) ell += b;
  return {DyadicReal::exact(parity_law(params.r, ell))};
}

namespace detail {

// Range of a + b - 2ab over a box.
inline std::pair<Rational, Rational> xor_range(const Rational& alo, const Rational& ahi, const Rational& blo,
                                               const Rational& bhi) {
  auto f = [](const Rational& a, const Rational& b) { return a + b - Rational(2) * a * b; };
  Rational c[4] = {f(alo, blo), f(alo, bhi), f(ahi, blo), f(ahi, bhi)};
  Rational lo = c[0], hi = c[0];
  for (auto& v : c) {
    lo = min(lo, v);
    hi = max(hi, v);
  }
  return {lo, hi};
}

// Conditional law of the von Neumann bit given the merged scan pairs.
struct ScanLaw {
  Rational acc = Rational(0);  // P(stopped and b = 1) so far
  Rational rem = Rational(1);  // P(not stopped yet)

  void absorb(Bit m1, Bit m2, const Rational& r) {
    if (m1 && m2) {
      Rational s = Rational(2) * r * (Rational(1) - r);
      acc += rem * s / Rational(2);
      rem *= Rational(1) - s;
    } else if (m1) {
      acc += rem * r;
      rem *= Rational(1) - r;
    } else if (m2) {
      rem *= Rational(1) - r;
    }
  }
};

}  // namespace detail

// Refinable enclosure of P(f = 1 | merged). The first refinement reads the parity
// window; later ones extend the pair scan past runs of (0,0) pairs. known_ones is
// a lower bound on the merged ones in the window (for instance the ones of x).
inline ConditionalLaw cond_law_f(BitStream merged, const ExtractorParams& params, std::uint64_t known_ones = 0) {
  struct State {
    BitStream merged;
    ExtractorParams params;
    std::uint64_t known_ones;
    bool window_read = false;
    std::uint64_t ones = 0;
    std::uint64_t pairs = 0;
    detail::ScanLaw scan;
  };
  auto st = std::make_shared<State>(State{merged, params, known_ones});
  auto enclosure = [st]() {
    Rational alo, ahi;
    if (st->window_read) {
      alo = ahi = parity_law(st->params.r, st->ones);
    } else {
      Rational half_bias = pow(st->params.bias_base(), st->known_ones) / Rational(2);
      alo = Rational(1, 2) - half_bias;
      ahi = Rational(1, 2) + half_bias;
    }
    return detail::xor_range(alo, ahi, st->scan.acc, st->scan.acc + st->scan.rem);
  };
  auto [lo, hi] = enclosure();
  return {DyadicReal::interval(lo, hi, [st, enclosure](Rational& lo, Rational& hi) {
    if (!st->window_read) {
      for (std::uint64_t i = 1; i <= st->params.k; ++i) st->ones += st->merged.at(i);
      st->window_read = true;
    } else {
      bool moved = false;
      while (!moved && st->pairs < st->params.pair_budget) {
        ++st->pairs;
        std::uint64_t pos = st->params.k + 2 * st->pairs;
        Bit m1 = st->merged.at(pos);
        Bit m2 = st->merged.at(pos + 1);
        st->scan.absorb(m1, m2, st->params.r);
        moved = m1 || m2;
      }
      if (!moved) return false;
    }
    std::tie(lo, hi) = enclosure();
    return true;
  })};
}

enum class Schedule {
  geometric,    // epsilon * 2^{-i} for coordinate i
  code_length,  // epsilon * 2^{1 - code_length(i)}; summable over symbolic indices
};

inline std::uint64_t schedule_exponent(Schedule s, const Index& i) {
  if (s == Schedule::code_length) return i.code_length() - 1;
  if (!i.is_small() || i.value() > 4096) throw InvalidArgument("geometric schedule: coordinate too large");
  return i.value();
}

// Coordinate i is eps_extract on row i of split_grid(x).
inline BitStream vector_extract(BitStream x, const Rational& base_epsilon, const Rational& p, const Rational& p_prime,
                                Schedule schedule = Schedule::geometric) {
  auto cache = std::make_shared<ParamsCache>(p, p_prime, base_epsilon);
  GridStream grid = split_grid(x.fork());
  return BitStream::from_function(
      [cache, grid, schedule](const Index& i) {
        BitStream row = grid.row(i);
        return eps_extract(row, cache->at(schedule_exponent(schedule, i)));
      },
      true);
}

using TruthTable = std::vector<Bit>;

namespace detail {

inline bool is_exact_extractor(const TruthTable& f, unsigned w, const mpz_class& pa, const mpz_class& pd,
                               const mpz_class& ra, const mpz_class& rd) {
  const std::size_t n = std::size_t{1} << w;
  // (i) P(f(X) = 1) = 1/2 with X ~ Bernoulli(p)^w
  mpz_class total = 0;
  for (std::size_t x = 0; x < n; ++x) {
    if (!f[x]) continue;
    unsigned ones = static_cast<unsigned>(__builtin_popcountll(x));
    mpz_class t1, t0;
    mpz_pow_ui(t1.get_mpz_t(), pa.get_mpz_t(), ones);
    mpz_class comp = pd - pa;
    mpz_pow_ui(t0.get_mpz_t(), comp.get_mpz_t(), w - ones);
    total += t1 * t0;
  }
  mpz_class full;
  mpz_pow_ui(full.get_mpz_t(), pd.get_mpz_t(), w);
  bool fair = 2 * total == full;
  // (ii) P(f = 1 | merged = m) = 1/2 for all m: S(m) = sum_{x <= m} f(x) ra^|x| (rd-ra)^{|m|-|x|}
  std::vector<mpz_class> s(n);
  for (std::size_t x = 0; x < n; ++x) s[x] = f[x];
  mpz_class rb = rd - ra;
  for (unsigned i = 0; i < w; ++i) {
    std::size_t bit = std::size_t{1} << i;
    for (std::size_t m = 0; m < n; ++m) {
      if (m & bit) continue;
      s[m | bit] = rb * s[m] + ra * s[m | bit];
    }
  }
  for (std::size_t m = 0; m < n; ++m) {
    mpz_class scale;
    mpz_pow_ui(scale.get_mpz_t(), rd.get_mpz_t(), static_cast<unsigned long>(__builtin_popcountll(m)));
    if (2 * s[m] != scale) return false;
  }
  return fair;
}

}  // namespace detail

// Boolean functions of the first window_x coordinates that are exactly fair and
// exactly independent of the merged window. All functions are tried for
// window_x <= 4; larger windows only check the supplied candidates.
inline std::vector<TruthTable> no_extractor_search(unsigned window_x, const Rational& p, const Rational& q,
                                                   const std::vector<TruthTable>* candidates = nullptr) {
  if (window_x > 20) throw FeasibilityGuard("no_extractor_search: window_x must be at most 20");
  if (window_x > 4 && candidates == nullptr)
    throw FeasibilityGuard("no_extractor_search: windows above 4 need a candidate list");
  if (p.sign() <= 0 || p >= Rational(1) || q.sign() <= 0 || q >= Rational(1))
    throw InvalidArgument("no_extractor_search: p and q must lie in (0,1)");
  Rational p_prime = p + q - p * q;
  Rational r = p / p_prime;
  const std::size_t n = std::size_t{1} << window_x;
  std::vector<TruthTable> found;
  auto check = [&](const TruthTable& f) {
    if (f.size() != n) throw LengthMismatch("candidate truth table has the wrong size");
    if (detail::is_exact_extractor(f, window_x, p.numerator(), p.denominator(), r.numerator(), r.denominator()))
      found.push_back(f);
  };
  if (candidates) {
    for (const auto& f : *candidates) check(f);
    return found;
  }
  const std::uint64_t functions = std::uint64_t{1} << n;
  TruthTable f(n);
  for (std::uint64_t code = 0; code < functions; ++code) {
    for (std::size_t x = 0; x < n; ++x) f[x] = static_cast<Bit>((code >> x) & 1);
    check(f);
  }
  return found;
}

}  // namespace thicken
