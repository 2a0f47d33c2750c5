#pragma once

#include <mpfr.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thicken/corrector.hpp"
#include "thicken/errors.hpp"
#include "thicken/extractor.hpp"
#include "thicken/index.hpp"
#include "thicken/lazy_real.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"
#include "thicken/thickener.hpp"

namespace thicken {

// Each exponential gap is -ln(U)/lambda for a dyadic uniform U with this many bits.
inline constexpr unsigned kDefaultGapBits = 16;
inline constexpr std::size_t kDefaultTailBudget = 4096;

struct PointWindow {
  Rational lo;
  Rational hi;
  std::vector<Rational> points;
  Rational intensity = Rational(1);

  void validate() const {
    if (!(lo < hi)) throw InvalidArgument("point window needs lo < hi");
    if (intensity.sign() <= 0) throw InvalidArgument("point window intensity must be positive");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i] < lo || points[i] > hi) throw InvalidArgument("point " + points[i].str() + " outside the window");
      if (i > 0 && !(points[i - 1] < points[i])) throw InvalidArgument("points must be strictly increasing");
    }
  }

  // points in [a, b)
  std::size_t count_in(const Rational& a, const Rational& b) const {
    auto first = std::lower_bound(points.begin(), points.end(), a);
    auto last = std::lower_bound(points.begin(), points.end(), b);
    return last > first ? static_cast<std::size_t>(last - first) : 0;
  }

  bool contains(const Rational& x) const { return std::binary_search(points.begin(), points.end(), x); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : points) pts.push_back(p.str());
    return {{"lo", lo.str()}, {"hi", hi.str()}, {"intensity", intensity.str()}, {"points", pts}};
  }

  static PointWindow from_json(const nlohmann::json& j) {
    PointWindow w;
    try {
      w.lo = Rational::parse(j.at("lo").get<std::string>());
      w.hi = Rational::parse(j.at("hi").get<std::string>());
      w.intensity = Rational::parse(j.at("intensity").get<std::string>());
      for (const auto& p : j.at("points")) w.points.push_back(Rational::parse(p.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("point window json: ") + e.what());
    }
    w.validate();
    return w;
  }
};

// -ln((u + 1/2) / 2^bits). The logarithm is evaluated by MPFR with a 64-bit
// mantissa (round to nearest) and then converted to a rational exactly.
inline Rational neg_log_uniform(std::uint64_t u, unsigned bits) {
  if (bits == 0 || bits > 62) throw InvalidArgument("gap resolution must be between 1 and 62 bits");
  if (u >> bits) throw InvalidArgument("uniform numerator out of range");
  // few enough distinct values at low resolution to keep them all
  const bool cached = bits <= 20;
  thread_local std::unordered_map<std::uint64_t, Rational> table;
  const std::uint64_t slot = (std::uint64_t{bits} << 32) | u;
  if (cached) {
    auto it = table.find(slot);
    if (it != table.end()) return it->second;
  }
  mpfr_t x;
  mpfr_init2(x, 64);
  static_assert(sizeof(unsigned long) == 8);
  mpfr_set_ui(x, 2 * static_cast<unsigned long>(u) + 1, MPFR_RNDN);
  mpfr_div_2ui(x, x, bits + 1, MPFR_RNDN);
  mpfr_log(x, x, MPFR_RNDN);
  mpfr_neg(x, x, MPFR_RNDN);
  mpq_class q;
  mpfr_get_q(q.get_mpq_t(), x);
  mpfr_clear(x);
  Rational out(std::move(q));
  if (cached) table.emplace(slot, out);
  return out;
}

inline Rational exponential_gap(std::uint64_t u, unsigned bits, const Rational& lambda) {
  if (lambda == Rational(1)) return neg_log_uniform(u, bits);
  return neg_log_uniform(u, bits) / lambda;
}

namespace detail {

// Cumulative exponential gaps from lo; points strictly below hi are kept.
template <class NextUniform>
std::vector<Rational> poisson_points(NextUniform&& next_u, const Rational& lambda, const Rational& lo,
                                     const Rational& hi, unsigned bits) {
  std::vector<Rational> pts;
  Rational t = lo;
  for (;;) {
    t += exponential_gap(next_u(), bits, lambda);
    if (!(t < hi)) return pts;
    pts.push_back(t);
  }
}

// B-bit uniforms straight from the keyed generator.
struct KeyedUniforms {
  std::uint64_t seed;
  std::uint64_t key;
  unsigned bits;
  std::uint64_t block = 0;

  std::uint64_t operator()() { return keyed_word(seed, key, block++) >> (64 - bits); }
};

}  // namespace detail

// B fair bits per gap, most significant first, disjoint blocks for successive gaps.
inline PointWindow bits_to_poisson(BitStream fair, const Rational& lambda, const Rational& lo, const Rational& hi,
                                   unsigned bits = kDefaultGapBits) {
  if (lambda.sign() <= 0) throw InvalidArgument("intensity must be positive");
  if (!(lo < hi)) throw InvalidArgument("window needs lo < hi");
  auto next_u = [&]() {
    std::uint64_t u = 0;
    for (unsigned i = 0; i < bits; ++i) u = (u << 1) | fair.next();
    return u;
  };
  return {lo, hi, detail::poisson_points(next_u, lambda, lo, hi, bits), lambda};
}

inline PointWindow sample_poisson(const Rational& lo, const Rational& hi, const Rational& lambda, std::uint64_t seed,
                                  unsigned bits = kDefaultGapBits) {
  if (lambda.sign() <= 0) throw InvalidArgument("intensity must be positive");
  if (!(lo < hi)) throw InvalidArgument("window needs lo < hi");
  if (bits == 0 || bits > 62) throw InvalidArgument("gap resolution must be between 1 and 62 bits");
  detail::KeyedUniforms u{derive_seed(seed, 0x706f6973ULL), 0, bits};
  return {lo, hi, detail::poisson_points(u, lambda, lo, hi, bits), lambda};
}

struct ContExtraction {
  Bit value = 0;
  Bit a = 0;
  Bit b = 0;
  std::uint64_t window_count = 0;
  Rational above;  // first point > r
  Rational below;  // last point < -r
};

namespace detail {

inline ContExtraction finish_cont(std::uint64_t count, Rational above, Rational below) {
  ContExtraction e;
  e.window_count = count;
  e.a = static_cast<Bit>(count % 2);
  e.b = static_cast<Bit>((above + below).sign() > 0);
  e.value = static_cast<Bit>(e.a ^ e.b);
  e.above = std::move(above);
  e.below = std::move(below);
  return e;
}

inline std::int64_t floor_int(const Rational& x) {
  mpz_class f;
  mpz_fdiv_q(f.get_mpz_t(), x.get().get_num_mpz_t(), x.get().get_den_mpz_t());
  return f.get_si();
}

}  // namespace detail

// A process on the real line known unit by unit: unit(t) lists the offsets in
// [0,1) of the points in [t, t+1), increasing.
template <class Process>
  requires requires(Process& p, std::int64_t t) { p.unit(t); }
ContExtraction cont_extract(Process& x, const Rational& r, std::size_t tail_budget = kDefaultTailBudget) {
  if (r.sign() <= 0) throw InvalidArgument("cont_extract: r must be positive");
  const Rational neg_r = -r;
  const std::int64_t t_lo = detail::floor_int(neg_r), t_hi = detail::floor_int(r);
  std::uint64_t count = 0;
  std::optional<Rational> above, below;
  for (std::int64_t t = t_lo; t <= t_hi; ++t) {
    for (const Rational& off : x.unit(t)) {
      Rational p = off + Rational(t);
      if (p < neg_r) below = p;
      else if (p > r) {
        if (!above) above = p;
      } else {
        ++count;
      }
    }
  }
  for (std::size_t step = 1; !above; ++step) {
    if (step > tail_budget) throw BudgetExceeded("cont_extract: no point found above r within the tail budget");
    const auto& pts = x.unit(t_hi + static_cast<std::int64_t>(step));
    if (!pts.empty()) above = pts.front() + Rational(t_hi + static_cast<std::int64_t>(step));
  }
  for (std::size_t step = 1; !below; ++step) {
    if (step > tail_budget) throw BudgetExceeded("cont_extract: no point found below -r within the tail budget");
    const auto& pts = x.unit(t_lo - static_cast<std::int64_t>(step));
    if (!pts.empty()) below = pts.back() + Rational(t_lo - static_cast<std::int64_t>(step));
  }
  return detail::finish_cont(count, std::move(*above), std::move(*below));
}

// Same extractor on a finite realization; the window must reach past both sides.
inline ContExtraction cont_extract(const PointWindow& w, const Rational& r) {
  w.validate();
  if (r.sign() <= 0) throw InvalidArgument("cont_extract: r must be positive");
  std::uint64_t count = 0;
  std::optional<Rational> above, below;
  for (const auto& p : w.points) {
    if (p < -r) below = p;
    else if (p > r) {
      if (!above) above = p;
    } else {
      ++count;
    }
  }
  if (!above || !below) throw OutOfWindow("cont_extract: the window holds no point beyond " + std::string(above ? "-r" : "r"));
  return detail::finish_cont(count, std::move(*above), std::move(*below));
}

struct ContParams {
  Rational lambda;
  Rational lambda_prime;
  Rational rho;  // lambda / lambda', the chance a merged point is an input point
  Rational epsilon;
  Rational r;
  std::uint64_t ell_prime = 1;
  Rational tail_bound;  // certified upper bound on P(Poisson(2 r lambda') < ell_prime)

  Rational bias_base() const { return abs(Rational(1) - Rational(2) * rho); }

  std::string serialize() const {
    std::ostringstream os;
    os << "lambda=" << lambda.str() << "\n"
       << "lambda_prime=" << lambda_prime.str() << "\n"
       << "epsilon=" << epsilon.str() << "\n"
       << "r=" << r.str() << "\n"
       << "ell_prime=" << ell_prime << "\n"
       << "tail_bound=" << tail_bound.str() << "\n";
    return os.str();
  }
};

inline constexpr long kRadiusGrid = 16;

// Upper bound on P(Poisson(mu) < ell): the partial sum over a partial sum of e^mu.
inline Rational poisson_lower_tail_bound(const Rational& mu, std::uint64_t ell) {
  if (mu.sign() < 0) throw InvalidArgument("Poisson mean must be non-negative");
  if (ell == 0) return Rational(0);
  std::uint64_t terms = std::max<std::uint64_t>(ell, 2 * static_cast<std::uint64_t>(mu.to_double()) + 40);
  Rational term(1), head(0), total(0);
  for (std::uint64_t k = 0; k <= terms; ++k) {
    if (k > 0) term = term * mu / Rational(k);
    if (k < ell) head += term;
    total += term;
  }
  return head / total;
}

inline ContParams choose_r(const Rational& lambda, const Rational& lambda_prime, const Rational& epsilon) {
  if (lambda.sign() <= 0 || !(lambda < lambda_prime))
    throw DegenerateParameters("need 0 < lambda < lambda' (got " + lambda.str() + ", " + lambda_prime.str() + ")");
  if (epsilon.sign() <= 0 || epsilon >= Rational(1)) throw InvalidArgument("epsilon must lie in (0,1)");
  ContParams out;
  out.lambda = lambda;
  out.lambda_prime = lambda_prime;
  out.rho = lambda / lambda_prime;
  out.epsilon = epsilon;
  const Rational target = epsilon / Rational(2);
  const Rational base = out.bias_base();
  Rational power = base;
  out.ell_prime = 1;
  while (!(power < target)) {
    power *= base;
    ++out.ell_prime;
  }
  for (long j = 1;; ++j) {
    Rational r(j, kRadiusGrid);
    Rational bound = poisson_lower_tail_bound(Rational(2) * r * lambda_prime, out.ell_prime);
    if (bound < target) {
      out.r = r;
      out.tail_bound = bound;
      return out;
    }
    if (j > 1'000'000) throw BudgetExceeded("choose_r: no radius found");
  }
}

// Radii for epsilon = 2^{-m}, computed once per (lambda, lambda').
class RadiusCache {
 public:
  RadiusCache(Rational lambda, Rational lambda_prime) : lambda_(std::move(lambda)), lambda_prime_(std::move(lambda_prime)) {
    if (lambda_.sign() <= 0 || !(lambda_ < lambda_prime_))
      throw DegenerateParameters("need 0 < lambda < lambda'");
  }

  const ContParams& at(std::uint64_t m) {
    auto it = table_.find(m);
    if (it != table_.end()) return it->second;
    return table_.emplace(m, choose_r(lambda_, lambda_prime_, Rational::pow2(-static_cast<long>(m)))).first->second;
  }

 private:
  Rational lambda_;
  Rational lambda_prime_;
  std::unordered_map<std::uint64_t, ContParams> table_;
};

// Refinable enclosure of P(a xor b = 1 | merged process). Given the merged points,
// each one is an input point independently with probability rho. The first
// refinement counts the window; later ones walk the merged points outside the
// window in order of distance from it: the first input point met decides b.
template <class Process>
ConditionalLaw cont_cond_law(std::shared_ptr<Process> merged, const ContParams& params, std::uint64_t known_ones = 0,
                             std::size_t tail_budget = kDefaultTailBudget) {
  struct Pending {
    Rational distance;
    bool below;
  };
  struct State {
    std::shared_ptr<Process> merged;
    ContParams params;
    std::uint64_t known_ones;
    std::size_t tail_budget;
    bool window_read = false;
    std::uint64_t count = 0;
    std::int64_t next_above = 0;  // next unread unit on each side
    std::int64_t next_below = 0;
    std::size_t units_read = 0;
    std::vector<Pending> pending;
    Rational acc = Rational(0);
    Rational rem = Rational(1);
  };
  auto st = std::make_shared<State>();
  st->merged = std::move(merged);
  st->params = params;
  st->known_ones = known_ones;
  st->tail_budget = tail_budget;

  auto enclosure = [st]() {
    Rational alo, ahi;
    if (st->window_read) {
      alo = ahi = parity_law(st->params.rho, st->count);
    } else {
      Rational hb = pow(st->params.bias_base(), st->known_ones) / Rational(2);
      alo = Rational(1, 2) - hb;
      ahi = Rational(1, 2) + hb;
    }
    return detail::xor_range(alo, ahi, st->acc, st->acc + st->rem);
  };

  auto refine = [st, enclosure](Rational& lo, Rational& hi) {
    const Rational& r = st->params.r;
    const Rational neg_r = -r;
    auto take_unit = [&](std::int64_t t, bool window_unit) {
      for (const Rational& off : st->merged->unit(t)) {
        Rational p = off + Rational(t);
        if (p < neg_r) st->pending.push_back({neg_r - p, true});
        else if (p > r) st->pending.push_back({p - r, false});
        else if (window_unit) ++st->count;
      }
    };
    if (!st->window_read) {
      std::int64_t t_lo = detail::floor_int(neg_r), t_hi = detail::floor_int(r);
      for (std::int64_t t = t_lo; t <= t_hi; ++t) take_unit(t, true);
      st->next_above = t_hi + 1;
      st->next_below = t_lo - 1;
      st->window_read = true;
      std::tie(lo, hi) = enclosure();
      return true;
    }
    if (st->rem.is_zero()) return false;
    for (;;) {
      // unread points lie at least this far out on each side
      Rational frontier_above = Rational(st->next_above) - r;
      Rational frontier_below = neg_r - Rational(st->next_below + 1);
      const Rational& frontier = min(frontier_above, frontier_below);
      auto best = st->pending.end();
      for (auto it = st->pending.begin(); it != st->pending.end(); ++it) {
        if (it->distance > frontier) continue;
        // ties go to the point above, matching b = 0 on equal overshoots
        if (best == st->pending.end() || it->distance < best->distance ||
            (it->distance == best->distance && !it->below && best->below))
          best = it;
      }
      if (best != st->pending.end()) {
        if (best->below) st->acc += st->rem * st->params.rho;
        st->rem *= Rational(1) - st->params.rho;
        st->pending.erase(best);
        std::tie(lo, hi) = enclosure();
        return true;
      }
      if (++st->units_read > st->tail_budget) return false;
      if (frontier_above <= frontier_below) take_unit(st->next_above++, false);
      else take_unit(st->next_below--, false);
    }
  };

  auto [lo, hi] = enclosure();
  return {DyadicReal::interval(lo, hi, refine)};
}

// f(X) = X plus added points, together with the bookkeeping of one cascade.
struct PoissonConfig {
  Rational lambda = Rational(1);
  Rational lambda_prime = Rational(2);
  Rational delta = Rational(1, 32);
  std::uint64_t max_level = 0;  // 0: the smallest level meeting delta
  unsigned gap_bits = kDefaultGapBits;
  std::size_t tail_budget = kDefaultTailBudget;

  void validate() const {
    if (lambda.sign() <= 0 || !(lambda < lambda_prime))
      throw DegenerateParameters("need 0 < lambda < lambda' (got " + lambda.str() + ", " + lambda_prime.str() + ")");
    if (gap_bits == 0 || gap_bits > 61) throw InvalidArgument("gap_bits must be between 1 and 61");
    effective_max_level();
  }

  std::uint64_t effective_max_level() const {
    std::uint64_t needed = level_for_delta(delta);
    if (max_level == 0) return needed;
    if (max_level < needed)
      throw MaxLevelInsufficient("max_level " + std::to_string(max_level) + " cannot meet delta " + delta.str() +
                                 "; need at least " + std::to_string(needed));
    return max_level;
  }
};

// The input on the whole line. Unit interval m of the line is unit key z_to_n(m);
// keys past the small range come from the copies and are seeded by hash. Where a
// known window covers a unit, its points replace the seeded ones.
class InputLine {
 public:
  InputLine(std::uint64_t seed, Rational lambda, unsigned gap_bits, std::optional<PointWindow> known = std::nullopt)
      : seed_(derive_seed(seed, 0x6c696e65ULL)), lambda_(std::move(lambda)), bits_(gap_bits), known_(std::move(known)) {
    if (known_) known_->validate();
  }

  const std::vector<Rational>& unit(const Index& key) {
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    detail::KeyedUniforms u{seed_, key.hash(), bits_};
    std::vector<Rational> pts = detail::poisson_points(u, lambda_, Rational(0), Rational(1), bits_);
    if (known_ && key.is_small()) pts = apply_known(key.value(), std::move(pts));
    return memo_.emplace(key, std::move(pts)).first->second;
  }

  const Rational& lambda() const { return lambda_; }

 private:
  std::vector<Rational> apply_known(std::uint64_t key, std::vector<Rational> seeded) const {
    const Rational m(n_to_z(key));
    const Rational lo = known_->lo - m, hi = known_->hi - m;  // known part of [0,1) is [lo, hi]
    if (!(lo < Rational(1)) || !(hi > Rational(0))) return seeded;
    std::vector<Rational> out;
    for (auto& p : seeded)
      if (p < lo || p > hi) out.push_back(std::move(p));
    for (const auto& p : known_->points) {
      Rational off = p - m;
      if (off.sign() >= 0 && off < Rational(1)) out.push_back(std::move(off));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::uint64_t seed_;
  Rational lambda_;
  unsigned bits_;
  std::optional<PointWindow> known_;
  std::unordered_map<Index, std::vector<Rational>, IndexHash> memo_;
};

inline std::vector<Rational> merge_sorted(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  std::vector<Rational> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Copy (e, J) of the line: its unit t is input unit pair(e, pair(J, z_to_n(t))).
// Level-e coordinate c = pair(J, z_to_n(t)) carries Y^e_c, the added points, which
// are built from fair bits W^{e+1}_{pair(1, pair(c, s))}; Z^e_c = W^{e+1}_{pair(2, c)}.
class PoissonCascade {
 public:
  PoissonCascade(std::shared_ptr<InputLine> line, const PoissonConfig& config, std::uint64_t truncation)
      : line_(std::move(line)),
        config_(config),
        radii_(shared_radii(config.lambda, config.lambda_prime)),
        truncation_(truncation) {}
  PoissonCascade(const PoissonCascade&) = delete;
  PoissonCascade& operator=(const PoissonCascade&) = delete;

  const ContParams& params(std::uint64_t e, const Index& j) { return radii_->at(e + j.code_length() - 1); }

  static Index coordinate(const Index& j, std::int64_t t) { return pair(j, Index(z_to_n(t))); }

  const std::vector<Rational>& x_unit(std::uint64_t e, const Index& c) { return line_->unit(pair(Index(e), c)); }

  const ContExtraction& uncorrected(std::uint64_t e, const Index& j) {
    Index key = pair(Index(e), j);
    auto it = extracted_.find(key);
    if (it != extracted_.end()) return it->second;
    XCopy copy{this, e, j};
    return extracted_.emplace(key, cont_extract(copy, params(e, j).r, config_.tail_budget)).first->second;
  }

  Bit w(std::uint64_t e, const Index& j) {
    const ContExtraction& ex = uncorrected(e, j);
    if (e > truncation_) return ex.value;
    Index key = pair(Index(e), j);
    auto it = corrected_.find(key);
    if (it != corrected_.end()) return it->second;
    const Bit observed = ex.value;
    const std::uint64_t ones = ex.window_count;
    const ContParams& cp = params(e, j);
    BitStream z_row = BitStream::from_function([this, e, j](const Index& t) { return z(e, pair(j, t)); });
    auto make_law = [&]() {
      return cont_cond_law(std::make_shared<MergedCopy>(MergedCopy{this, e, j}), cp, ones, config_.tail_budget);
    };
    Rational half_bias = pow(cp.bias_base(), ones) / Rational(2);
    CorrectionRecord rec = decide_correction(observed, half_bias, make_law, z_row);
    ++corrected_count_[e];
    if (rec.fired) fired_.push_back({e, j});
    Bit v = static_cast<Bit>(observed ^ rec.fired);
    corrected_.emplace(key, v);
    return v;
  }

  Bit z(std::uint64_t e, const Index& c) { return w(e + 1, pair(Index(2), c)); }

  // Added points of level-e coordinate c, as offsets in [0,1).
  const std::vector<Rational>& y_unit(std::uint64_t e, const Index& c) {
    Index key = pair(Index(e), c);
    auto it = y_.find(key);
    if (it != y_.end()) return it->second;
    BitStream fair = BitStream::from_function([this, e, c](const Index& s) { return w(e + 1, pair(Index(1), pair(c, s))); });
    // one bit finer than the input, so the two gap grids share no value and the first
    // added point of a unit cannot sit on the first input point
    PointWindow pw =
        bits_to_poisson(fair, config_.lambda_prime - config_.lambda, Rational(0), Rational(1), config_.gap_bits + 1);
    return y_.emplace(key, std::move(pw.points)).first->second;
  }

  const std::vector<ChangeEvent>& fired() const { return fired_; }
  const std::map<std::uint64_t, std::uint64_t>& corrected_counts() const { return corrected_count_; }

 private:
  struct XCopy {
    PoissonCascade* self;
    std::uint64_t e;
    Index j;
    const std::vector<Rational>& unit(std::int64_t t) { return self->x_unit(e, coordinate(j, t)); }
  };

  struct MergedCopy {
    PoissonCascade* self;
    std::uint64_t e;
    Index j;
    std::unordered_map<std::int64_t, std::vector<Rational>> memo;
    const std::vector<Rational>& unit(std::int64_t t) {
      auto it = memo.find(t);
      if (it != memo.end()) return it->second;
      Index c = coordinate(j, t);
      return memo.emplace(t, merge_sorted(self->x_unit(e, c), self->y_unit(e, c))).first->second;
    }
  };

  static std::shared_ptr<RadiusCache> shared_radii(const Rational& lambda, const Rational& lambda_prime) {
    thread_local std::unordered_map<std::string, std::shared_ptr<RadiusCache>> caches;
    auto& slot = caches[lambda.str() + " " + lambda_prime.str()];
    if (!slot) slot = std::make_shared<RadiusCache>(lambda, lambda_prime);
    return slot;
  }

  std::shared_ptr<InputLine> line_;
  PoissonConfig config_;
  std::shared_ptr<RadiusCache> radii_;
  std::uint64_t truncation_;
  std::unordered_map<Index, ContExtraction, IndexHash> extracted_;
  std::unordered_map<Index, Bit, IndexHash> corrected_;
  std::unordered_map<Index, std::vector<Rational>, IndexHash> y_;
  std::vector<ChangeEvent> fired_;
  std::map<std::uint64_t, std::uint64_t> corrected_count_;
};

// Unit interval m of the line is coordinate unpair(z_to_n(m)) = (level, c). The
// output there is the input plus Y^level_c, from the cascade truncated at
// max_level + 1.
class PoissonThickener {
 public:
  PoissonThickener(std::optional<PointWindow> input, std::uint64_t seed, PoissonConfig config)
      : config_(std::move(config)) {
    config_.validate();
    top_ = config_.effective_max_level();
    if (input && input->intensity != config_.lambda)
      throw InvalidArgument("input intensity " + input->intensity.str() + " differs from lambda " + config_.lambda.str());
    line_ = std::make_shared<InputLine>(seed, config_.lambda, config_.gap_bits, std::move(input));
    cascade_ = std::make_unique<PoissonCascade>(line_, config_, top_ + 1);
  }

  const std::vector<Rational>& input_unit(std::int64_t m) { return line_->unit(Index(z_to_n(m))); }

  // Output points in [m, m+1) as offsets.
  const std::vector<Rational>& output_unit(std::int64_t m) {
    auto it = out_.find(m);
    if (it != out_.end()) return it->second;
    auto [level, c] = unpair(z_to_n(m));
    if (level > top_)
      throw MaxLevelInsufficient("unit " + std::to_string(m) + " sits at level " + std::to_string(level) +
                                 " above max_level " + std::to_string(top_));
    const auto& x = input_unit(m);
    const auto& y = cascade_->y_unit(level, Index(c));
    std::vector<Rational> merged = merge_sorted(x, y);
    for (std::size_t i = 1; i < merged.size(); ++i)
      if (!(merged[i - 1] < merged[i])) throw Error("added point coincides with an input point");
    return out_.emplace(m, std::move(merged)).first->second;
  }

  PointWindow window(const Rational& lo, const Rational& hi, bool output) {
    if (!(lo < hi)) throw InvalidArgument("window needs lo < hi");
    PointWindow w{lo, hi, {}, output ? config_.lambda_prime : config_.lambda};
    std::int64_t m0 = detail::floor_int(lo), m1 = detail::floor_int(hi);
    for (std::int64_t m = m0; m <= m1; ++m) {
      for (const auto& off : output ? output_unit(m) : input_unit(m)) {
        Rational p = off + Rational(m);
        if (p >= lo && p <= hi) w.points.push_back(std::move(p));
      }
    }
    return w;
  }

  StabilizationCertificate certificate() const {
    StabilizationCertificate cert;
    for (const auto& ev : cascade_->fired()) cert.change_events.push_back({ev.level - 1, ev.coordinate});
    std::sort(cert.change_events.begin(), cert.change_events.end(), [](const ChangeEvent& a, const ChangeEvent& b) {
      if (a.level != b.level) return a.level < b.level;
      return a.coordinate.str() < b.coordinate.str();
    });
    cert.stabilized_at = top_;
    cert.residual_failure_bound = Rational::pow2(-static_cast<long>(top_ + 1));
    return cert;
  }

  PoissonCascade& cascade() { return *cascade_; }
  std::uint64_t max_level() const { return top_; }

 private:
  PoissonConfig config_;
  std::uint64_t top_ = 0;
  std::shared_ptr<InputLine> line_;
  std::unique_ptr<PoissonCascade> cascade_;
  std::unordered_map<std::int64_t, std::vector<Rational>> out_;
};

struct PoissonResult {
  PointWindow input;
  PointWindow output;
  StabilizationCertificate certificate;
};

// x fixes the input on its window; the rest of the line comes from the seed.
inline PoissonResult thicken_poisson(const PointWindow& x, const Rational& lambda, const Rational& lambda_prime,
                                     const Rational& delta, std::uint64_t seed, PoissonConfig config = {}) {
  config.lambda = lambda;
  config.lambda_prime = lambda_prime;
  config.delta = delta;
  PoissonThickener th(x, seed, config);
  PoissonResult out{th.window(x.lo, x.hi, false), th.window(x.lo, x.hi, true), {}};
  for (const auto& p : out.input.points)
    if (!out.output.contains(p)) throw Error("superset property violated at " + p.str());
  out.certificate = th.certificate();
  return out;
}

}  // namespace thicken
