#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thicken/corrector.hpp"
#include "thicken/distinguisher.hpp"
#include "thicken/errors.hpp"
#include "thicken/extractor.hpp"
#include "thicken/lab/enumerate.hpp"
#include "thicken/lab/report.hpp"
#include "thicken/lab/stats.hpp"
#include "thicken/poisson.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"
#include "thicken/thickener.hpp"

namespace thicken::lab {

namespace detail {

inline std::string bits_label(std::uint64_t code, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(((code >> i) & 1) ? '1' : '0');
  return s;
}

inline std::vector<Rational> repeat(const Rational& v, std::size_t n) { return std::vector<Rational>(n, v); }

inline bool within_sigmas(double observed, double target, double sigma, double k = 3) {
  return std::abs(observed - target) <= k * sigma;
}

// Poisson(mu) pmf in floating point, for binning chi-square cells.
inline std::vector<double> poisson_pmf(double mu, std::size_t upto) {
  std::vector<double> out;
  double term = std::exp(-mu);
  for (std::size_t k = 0; k <= upto; ++k) {
    out.push_back(term);
    term *= mu / static_cast<double>(k + 1);
  }
  return out;
}

}  // namespace detail

// Pearson goodness of fit against floating point cell probabilities.
inline TestResult chi_square_gof(const std::vector<std::uint64_t>& observed, const std::vector<double>& probs) {
  if (observed.size() != probs.size() || observed.size() < 2)
    throw LengthMismatch("chi-square: need matching cell lists with at least two cells");
  std::uint64_t n = 0;
  for (auto o : observed) n += o;
  if (n == 0) throw InsufficientSamples("chi-square: no samples");
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double e = static_cast<double>(n) * probs[i];
    if (e < kMinExpected)
      throw SparseCells("chi-square: cell " + std::to_string(i) + " expects " + std::to_string(e) + " < 5");
    double d = static_cast<double>(observed[i]) - e;
    stat += d * d / e;
  }
  double df = static_cast<double>(observed.size() - 1);
  return {stat, df, chi_square_tail(stat, df), n};
}

inline nlohmann::ordered_json test_json(const TestResult& t) {
  return {{"statistic", t.statistic}, {"df", t.df}, {"p_value", t.p_value}, {"n", t.n}};
}

// --- exact corrector law on the enumerable regime -----------------------------

// Merged realizations: a window of k bits, then a block of `pairs` scan pairs that
// repeats forever. The law of f given such a realization is exact: the window by
// enumeration, the scan by one block and a geometric series. The corrector's
// firing law is computed from the implementation over every u_bits prefix of U;
// a prefix the implementation cannot decide contributes the exact measure of
// {U > 1/(2 p_c)} inside it.
inline ExperimentReport corrector_exact(const ExperimentSpec& spec) {
  spec.allow({"p", "pprime", "k", "pairs", "u_bits", "seed"});
  const Rational p = spec.rational("p", Rational(1, 2)), pp = spec.rational("pprime", Rational(3, 4));
  const std::uint64_t k = spec.integer("k", 2), pairs = spec.integer("pairs", 2), u_bits = spec.integer("u_bits", 6);
  if (k == 0 || k > 4 || pairs == 0 || pairs > 3 || u_bits == 0 || u_bits > 12)
    throw ConfigError(spec.line_of("k"), "corrector-exact needs k in 1..4, pairs in 1..3, u_bits in 1..12");
  const ExtractorParams params = ExtractorParams::manual(p, pp, Rational(1, 8), k, 1);
  const Rational q = params.q;
  ExperimentReport rep;
  rep.id = "corrector-exact";
  rep.config = {{"p", p.str()}, {"pprime", pp.str()}, {"k", k}, {"pairs", pairs}, {"u_bits", u_bits}};
  rep.seed = spec.integer("seed", 0);

  const std::size_t block_bits = 2 * pairs;
  std::vector<Rational> window_bias = detail::repeat(p, k);
  for (std::size_t i = 0; i < k; ++i) window_bias.push_back(q);
  std::vector<Rational> block_bias = detail::repeat(p, block_bits);
  for (std::size_t i = 0; i < block_bits; ++i) block_bias.push_back(q);

  std::uint64_t realizations = 0, undecided_prefixes = 0, decided_prefixes = 0, inconsistent = 0, off_half = 0;
  Rational worst_deviation(0);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::uint64_t mw = 0; mw < (std::uint64_t{1} << k); ++mw) {
    // x window given merged window: X_i, Y_i with max(X_i, Y_i) = m_i
    ConditionalTable xw = enumerate_conditional(
        window_bias, [&](const std::vector<Bit>& s) { return detail::bits_label(
                         [&] { std::uint64_t c = 0; for (std::size_t i = 0; i < k; ++i) c |= std::uint64_t{s[i]} << i; return c; }(), k); },
        [&](const std::vector<Bit>& s) {
          for (std::size_t i = 0; i < k; ++i)
            if ((s[i] | s[k + i]) != ((mw >> i) & 1)) return false;
          return true;
        });
    for (std::uint64_t mb = 1; mb < (std::uint64_t{1} << block_bits); ++mb) {
      ++realizations;
      // one block of the scan: stop with b = 1, stop with b = 0, or continue
      ConditionalTable blk = enumerate_conditional(
          block_bias,
          [&](const std::vector<Bit>& s) -> std::string {
            for (std::size_t j = 0; j < pairs; ++j)
              if (s[2 * j] != s[2 * j + 1]) return s[2 * j] ? "1" : "0";
            return "c";
          },
          [&](const std::vector<Bit>& s) {
            for (std::size_t i = 0; i < block_bits; ++i)
              if ((s[i] | s[block_bits + i]) != ((mb >> i) & 1)) return false;
            return true;
          });
      auto mass = [&](const std::string& o) { auto it = blk.conditional.find(o); return it == blk.conditional.end() ? Rational(0) : it->second; };
      const Rational b1 = mass("1") / (Rational(1) - mass("c"));
      Rational a1(0);
      for (const auto& [label, pr] : xw.conditional)
        if (std::count(label.begin(), label.end(), '1') % 2 == 1) a1 += pr;
      const Rational pi = a1 * (Rational(1) - b1) + (Rational(1) - a1) * b1;  // P(f = 1 | merged)

      BitStream merged = BitStream::from_function([&, mw, mb](const Index& idx) -> Bit {
        std::uint64_t i = idx.value();
        if (i <= k) return static_cast<Bit>((mw >> (i - 1)) & 1);
        if (i == k + 1) return 0;
        return static_cast<Bit>((mb >> ((i - k - 2) % block_bits)) & 1);
      });

      std::map<std::pair<Bit, std::uint64_t>, Rational> fire_memo;
      auto fire_probability = [&](Bit f, std::uint64_t ones) {
        auto key = std::make_pair(f, ones);
        if (auto it = fire_memo.find(key); it != fire_memo.end()) return it->second;
        const Rational pc = f ? pi : Rational(1) - pi;
        Rational total(0);
        const std::uint64_t prefixes = std::uint64_t{1} << u_bits;
        for (std::uint64_t n = 0; n < prefixes; ++n) {
          std::vector<Bit> bits;
          for (std::uint64_t b = u_bits; b-- > 0;) bits.push_back(static_cast<Bit>((n >> b) & 1));
          auto make_law = [&]() { return cond_law_f(merged.fork(), params, ones); };
          try {
            CorrectionRecord rec =
                decide_correction(f, extraction_half_bias(params, ones), make_law, BitStream::recorded(bits));
            ++decided_prefixes;
            // the certificate must agree with the exact threshold 1/(2 p_c)
            bool ok = rec.verify() && (rec.fired ? rec.u_lo * pc > Rational(1, 2) : rec.u_hi * pc <= Rational(1, 2));
            if (!ok) ++inconsistent;
            if (rec.fired) total += Rational(1);
          } catch (const StreamExhausted&) {
            ++undecided_prefixes;
            Rational lo = Rational::dyadic(mpz_class(n), u_bits), hi = Rational::dyadic(mpz_class(n + 1), u_bits);
            if (pc.sign() > 0) {
              Rational tau = Rational(1) / (Rational(2) * pc);
              Rational above = hi - max(lo, min(hi, tau));
              total += above * Rational::pow2(static_cast<long>(u_bits));
            }
          }
        }
        Rational out = total / Rational::pow2(static_cast<long>(u_bits));
        fire_memo.emplace(key, out);
        return out;
      };

      Rational p_out(0);  // P(f'' = 1 | merged)
      for (const auto& [label, px] : xw.conditional) {
        const std::uint64_t ones = static_cast<std::uint64_t>(std::count(label.begin(), label.end(), '1'));
        const Bit a = static_cast<Bit>(ones % 2);
        for (Bit bv : {Bit{0}, Bit{1}}) {
          Rational pb = bv ? b1 : Rational(1) - b1;
          if (pb.is_zero()) continue;
          Bit f = static_cast<Bit>(a ^ bv);
          Rational fire = fire_probability(f, ones);
          p_out += px * pb * (f ? Rational(1) - fire : fire);
        }
      }
      Rational dev = abs(p_out - Rational(1, 2));
      if (!dev.is_zero()) ++off_half;
      worst_deviation = max(worst_deviation, dev);
      rows.push_back({{"merged", detail::bits_label(mw, k) + "|" + detail::bits_label(mb, block_bits)},
                      {"p_f", pi.str()},
                      {"p_out", p_out.str()}});
    }
  }
  rep.samples = realizations;
  rep.statistics["realizations"] = realizations;
  rep.statistics["decided_prefixes"] = decided_prefixes;
  rep.statistics["undecided_prefixes"] = undecided_prefixes;
  rep.statistics["inconsistent_certificates"] = inconsistent;
  rep.statistics["realizations_off_half"] = off_half;
  rep.statistics["max_abs_deviation"] = worst_deviation.str();
  rep.statistics["laws"] = rows;
  rep.criterion("exact_half_every_realization", off_half == 0 && inconsistent == 0);
  return rep;
}

// --- corrector firing rate -----------------------------------------------------

inline ExperimentReport corrector_rate(const ExperimentSpec& spec, std::ostream* csv = nullptr) {
  spec.allow({"p", "pprime", "epsilon", "samples", "seed"});
  const Rational p = spec.rational("p", Rational(1, 2)), pp = spec.rational("pprime", Rational(3, 4));
  const std::vector<Rational> eps_list = spec.rationals("epsilon", {Rational(1, 8), Rational(1, 16)});
  const std::uint64_t n = spec.integer("samples", 1'000'000), seed = spec.integer("seed", 42);
  if (n == 0) throw ConfigError(spec.line_of("samples"), "samples must be positive");
  ExperimentReport rep;
  rep.id = "corrector-rate";
  nlohmann::ordered_json eps_json = nlohmann::ordered_json::array();
  for (const auto& e : eps_list) eps_json.push_back(e.str());
  rep.config = {{"p", p.str()}, {"pprime", pp.str()}, {"epsilon", eps_json}};
  rep.seed = seed;
  rep.samples = n;
  if (csv) *csv << "epsilon,run,extracted,value," << CorrectionRecord::csv_header() << "\n";
  for (const auto& eps : eps_list) {
    const ExtractorParams params = choose_params(p, pp, eps);
    std::uint64_t fired = 0, ones = 0, u_bits = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint64_t s = seed + i;
      BitStream x = BitStream::seeded(derive_seed(s, 1), p), y = BitStream::seeded(derive_seed(s, 2), params.q),
                z = BitStream::seeded(derive_seed(s, 3));
      CorrectedBit cb = corrected_extract(x, y, z, params);
      fired += cb.record.fired;
      ones += cb.value;
      u_bits += cb.record.u_bits_consumed;
      if (csv) *csv << eps.str() << "," << i << "," << int(cb.extracted) << "," << int(cb.value) << "," << cb.record.csv_row() << "\n";
    }
    const double rate = static_cast<double>(fired) / static_cast<double>(n);
    const double e = eps.to_double();
    const double sigma = binomial_sigma(e, n);
    nlohmann::ordered_json st;
    st["k"] = params.k;
    st["ell_prime"] = params.ell_prime;
    st["fired"] = fired;
    st["firing_rate"] = rate;
    st["bound"] = e + 3 * sigma;
    st["output_mean"] = static_cast<double>(ones) / static_cast<double>(n);
    st["mean_u_bits"] = static_cast<double>(u_bits) / static_cast<double>(n);
    rep.statistics["epsilon=" + eps.str()] = st;
    rep.criterion("firing_rate_below_eps_plus_3sigma@" + eps.str(), rate < e + 3 * sigma);
  }
  return rep;
}

// --- epsilon-extractor TV bound -----------------------------------------------

// E_m |P(f=1|m) - 1/2| over the merged process, bounded from above by enumerating
// the window and `pairs` scan pairs: every longer realization shares its prefix's
// enclosure of P(f=1|m).
inline ExperimentReport extractor_tv(const ExperimentSpec& spec) {
  spec.allow({"p", "pprime", "epsilon", "pairs", "seed"});
  const Rational p = spec.rational("p", Rational(1, 2)), pp = spec.rational("pprime", Rational(3, 4));
  const Rational eps = spec.rational("epsilon", Rational(1, 10));
  const std::uint64_t pairs = spec.integer("pairs", 4);
  ExtractorParams params = choose_params(p, pp, eps);
  if (params.k > 6) throw ConfigError(spec.line_of("epsilon"), "window k = " + std::to_string(params.k) + " is above the enumerable 6");
  if (pairs == 0 || pairs > 5) throw ConfigError(spec.line_of("pairs"), "pairs must lie in 1..5");
  ExperimentReport rep;
  rep.id = "extractor-tv";
  rep.config = {{"p", p.str()}, {"pprime", pp.str()}, {"epsilon", eps.str()}, {"pairs", pairs}};
  rep.seed = spec.integer("seed", 0);
  const std::size_t k = params.k, scan_bits = 2 * pairs;
  ExtractorParams truncated = params;
  truncated.pair_budget = pairs;

  // implementation bound through cond_law_f
  Rational impl_bound(0);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << (k + scan_bits)); ++code) {
    std::vector<Bit> bits(k + 1 + scan_bits, 0);
    Rational pm(1);
    for (std::size_t i = 0; i < k + scan_bits; ++i) {
      Bit b = static_cast<Bit>((code >> i) & 1);
      bits[i < k ? i : i + 1] = b;
      pm *= b ? pp : Rational(1) - pp;
    }
    ConditionalLaw law = cond_law_f(BitStream::recorded(bits), truncated);
    for (int guard = 0; guard < 64 && law.prob_one.refine(); ++guard) {
    }
    const Rational half(1, 2);
    impl_bound += pm * max(abs(law.prob_one.lo() - half), abs(law.prob_one.hi() - half));
  }

  // oracle: E TV = 2 E|alpha_a| E|alpha_b| with a and b independent given m
  Rational e_alpha_a(0);
  std::vector<Rational> win_bias = detail::repeat(p, k);
  for (std::size_t i = 0; i < k; ++i) win_bias.push_back(params.q);
  for (std::uint64_t mw = 0; mw < (std::uint64_t{1} << k); ++mw) {
    Rational pm(1);
    for (std::size_t i = 0; i < k; ++i) pm *= ((mw >> i) & 1) ? pp : Rational(1) - pp;
    ConditionalTable t = enumerate_conditional(
        win_bias,
        [&](const std::vector<Bit>& s) {
          Bit a = 0;
          for (std::size_t i = 0; i < k; ++i) a ^= s[i];
          return std::string(a ? "1" : "0");
        },
        [&](const std::vector<Bit>& s) {
          for (std::size_t i = 0; i < k; ++i)
            if ((s[i] | s[k + i]) != ((mw >> i) & 1)) return false;
          return true;
        });
    auto it = t.conditional.find("1");
    Rational a1 = it == t.conditional.end() ? Rational(0) : it->second;
    e_alpha_a += pm * abs(a1 - Rational(1, 2));
  }
  // per-pair law of (stop with 1, stop with 0, continue) given the merged pair
  std::vector<std::array<Rational, 3>> pair_law(4);
  for (std::uint64_t mp = 0; mp < 4; ++mp) {
    ConditionalTable t = enumerate_conditional(
        {p, p, params.q, params.q},
        [](const std::vector<Bit>& s) -> std::string { return s[0] != s[1] ? (s[0] ? "1" : "0") : "c"; },
        [&](const std::vector<Bit>& s) { return (s[0] | s[2]) == (mp & 1) && (s[1] | s[3]) == ((mp >> 1) & 1); });
    for (int o = 0; o < 3; ++o) {
      auto it = t.conditional.find(o == 0 ? "1" : o == 1 ? "0" : "c");
      pair_law[mp][o] = it == t.conditional.end() ? Rational(0) : it->second;
    }
  }
  Rational e_alpha_b_upper(0);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << scan_bits); ++code) {
    Rational pm(1), acc(0), rem(1);
    for (std::size_t j = 0; j < pairs; ++j) {
      std::uint64_t mp = (code >> (2 * j)) & 3;
      pm *= (((mp & 1) ? pp : Rational(1) - pp) * ((mp & 2) ? pp : Rational(1) - pp));
      acc += rem * pair_law[mp][0];
      rem *= pair_law[mp][2];
    }
    const Rational half(1, 2);
    e_alpha_b_upper += pm * max(abs(acc - half), abs(acc + rem - half));
  }
  const Rational oracle_bound = Rational(2) * e_alpha_a * e_alpha_b_upper;
  rep.samples = std::uint64_t{1} << (k + scan_bits);
  rep.statistics["k"] = params.k;
  rep.statistics["ell_prime"] = params.ell_prime;
  rep.statistics["expected_abs_alpha_a"] = e_alpha_a.str();
  rep.statistics["expected_abs_alpha_b_upper"] = e_alpha_b_upper.str();
  rep.statistics["oracle_tv_bound"] = oracle_bound.str();
  rep.statistics["implementation_tv_bound"] = impl_bound.str();
  rep.statistics["implementation_tv_bound_float"] = impl_bound.to_double();
  rep.criterion("expected_tv_below_epsilon", impl_bound < eps && oracle_bound < eps);
  return rep;
}

// --- conditional parity law spot check ------------------------------------------

inline ExperimentReport bias_spot(const ExperimentSpec& spec) {
  spec.allow({"p", "pprime", "ell", "seed"});
  const Rational p = spec.rational("p", Rational(1, 2)), pp = spec.rational("pprime", Rational(3, 4));
  const std::uint64_t ell = spec.integer("ell", 2);
  if (ell == 0 || ell > 20) throw ConfigError(spec.line_of("ell"), "ell must lie in 1..20");
  const ExtractorParams params = ExtractorParams::manual(p, pp, Rational(1, 8), ell, 1);
  ExperimentReport rep;
  rep.id = "bias-spot";
  rep.config = {{"p", p.str()}, {"pprime", pp.str()}, {"ell", ell}};
  rep.seed = spec.integer("seed", 0);
  rep.samples = 1;
  std::vector<Bit> ones(ell, 1);
  const Rational closed = cond_law_a(ones, params).prob_one.lo();
  ConditionalTable t = enumerate_conditional(detail::repeat(params.r, ell), [](const std::vector<Bit>& s) {
    Bit a = 0;
    for (Bit b : s) a ^= b;
    return std::string(a ? "1" : "0");
  });
  const Rational enumerated = t.conditional.at("1");
  rep.statistics["r"] = params.r.str();
  rep.statistics["cond_law_a"] = closed.str();
  rep.statistics["enumerated"] = enumerated.str();
  rep.statistics["tv_to_fair"] = tv_exact(bernoulli_law(closed), bernoulli_law(Rational(1, 2))).str();
  rep.criterion("closed_form_equals_enumeration", closed == enumerated);
  return rep;
}

// --- finite-window no-extractor search -------------------------------------------

inline ExperimentReport no_extractor(const ExperimentSpec& spec) {
  spec.allow({"windows", "pairs_pq", "p", "q", "seed"});
  std::vector<std::pair<Rational, Rational>> pq = {
      {Rational(1, 2), Rational(1, 3)}, {Rational(1, 3), Rational(1, 4)}, {Rational(2, 3), Rational(1, 2)}};
  if (spec.has("p") || spec.has("q")) pq = {{spec.rational("p", Rational(1, 2)), spec.rational("q", Rational(1, 3))}};
  const std::uint64_t max_window = spec.integer("windows", 3);
  if (max_window > 4) throw ConfigError(spec.line_of("windows"), "exhaustive search only up to window 4");
  ExperimentReport rep;
  rep.id = "no-extractor";
  nlohmann::ordered_json pq_json = nlohmann::ordered_json::array();
  for (const auto& [p, q] : pq) pq_json.push_back({p.str(), q.str()});
  rep.config = {{"windows", max_window}, {"p_q", pq_json}};
  rep.seed = spec.integer("seed", 0);
  std::uint64_t found_total = 0, searched = 0;
  for (const auto& [p, q] : pq) {
    for (unsigned w = 0; w <= max_window; ++w) {
      auto found = no_extractor_search(w, p, q);
      searched += std::uint64_t{1} << (std::uint64_t{1} << w);
      found_total += found.size();
      rep.statistics["p=" + p.str() + ",q=" + q.str() + ",window=" + std::to_string(w)] = found.size();
    }
  }
  rep.samples = searched;
  rep.statistics["functions_searched"] = searched;
  rep.criterion("no_exact_extractor_found", found_total == 0);
  return rep;
}

// --- epsilon-extractor Monte Carlo fairness -----------------------------------------

inline ExperimentReport extract_fairness(const ExperimentSpec& spec, std::ostream* csv = nullptr) {
  spec.allow({"p", "pprime", "epsilon", "samples", "seed"});
  const Rational p = spec.rational("p", Rational(1, 2)), pp = spec.rational("pprime", Rational(3, 4));
  const Rational eps = spec.rational("epsilon", Rational(1, 10));
  const std::uint64_t n = spec.integer("samples", 100'000), seed = spec.integer("seed", 42);
  if (n == 0) throw ConfigError(spec.line_of("samples"), "samples must be positive");
  const ExtractorParams params = choose_params(p, pp, eps);
  ExperimentReport rep;
  rep.id = "extract";
  rep.config = {{"p", p.str()}, {"pprime", pp.str()}, {"epsilon", eps.str()}};
  rep.seed = seed;
  rep.samples = n;
  if (csv) *csv << "run,value,parity,vn,stop_index\n";
  std::uint64_t ones = 0, stop_total = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    BitStream x = BitStream::seeded(derive_seed(seed + i, 1), p);
    Extraction e = extract(x, params);
    ones += e.value;
    stop_total += e.stop_index;
    if (csv) *csv << i << "," << int(e.value) << "," << int(e.parity) << "," << int(e.vn) << "," << e.stop_index << "\n";
  }
  const double mean = static_cast<double>(ones) / static_cast<double>(n);
  rep.statistics["params"] = params.serialize();
  rep.statistics["mean"] = mean;
  rep.statistics["mean_stop_pair"] = static_cast<double>(stop_total) / static_cast<double>(n);
  rep.criterion("fair_within_3sigma", detail::within_sigmas(mean, 0.5, binomial_sigma(0.5, n)));
  return rep;
}

// --- discrete thickening --------------------------------------------------------

inline ExperimentReport thicken_experiment(const ExperimentSpec& spec, std::ostream* csv = nullptr) {
  spec.allow({"p", "pprime", "delta", "max_level", "samples", "seed", "coords", "extra"});
  ThickenConfig cfg;
  cfg.p = spec.rational("p", Rational(1, 2));
  cfg.p_prime = spec.rational("pprime", Rational(3, 4));
  cfg.delta = spec.rational("delta", Rational(1, 32));
  cfg.max_level = spec.integer("max_level", 0);
  const std::uint64_t n = spec.integer("samples", 100'000), seed = spec.integer("seed", 42);
  const std::uint64_t coords = spec.integer("coords", 8);
  cfg.extra_count = spec.integer("extra", 2);
  if (n == 0) throw ConfigError(spec.line_of("samples"), "samples must be positive");
  if (coords < 2 || coords > 64) throw ConfigError(spec.line_of("coords"), "coords must lie in 2..64");
  if (cfg.extra_count == 0 || cfg.extra_count > 8) throw ConfigError(spec.line_of("extra"), "extra must lie in 1..8");
  for (std::uint64_t c = 1; c <= coords; ++c) {
    auto [level, j] = unpair(c);
    cfg.coords.push_back({level, Index(j)});
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(spec.line_of("delta"), e.what());
  }
  const std::uint64_t top = cfg.effective_max_level();
  ExperimentReport rep;
  rep.id = "thicken";
  rep.config = {{"p", cfg.p.str()},       {"pprime", cfg.p_prime.str()}, {"delta", cfg.delta.str()},
                {"max_level", top},       {"coords", coords},            {"extra", cfg.extra_count}};
  rep.seed = seed;
  rep.samples = n;

  const std::size_t m = coords, ex = cfg.extra_count;
  std::vector<std::uint64_t> ones(m, 0), extra_ones(ex, 0);
  std::vector<std::vector<std::array<std::uint64_t, 4>>> joint(m, std::vector<std::array<std::uint64_t, 4>>(m));
  std::vector<std::vector<std::array<std::uint64_t, 4>>> extra_joint(ex, std::vector<std::array<std::uint64_t, 4>>(m));
  std::vector<std::array<std::size_t, 3>> triples;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b)
      for (std::size_t c = b + 1; c < m; ++c) triples.push_back({a, b, c});
  std::vector<std::array<std::uint64_t, 8>> triple_counts(triples.size());
  std::map<std::uint64_t, std::uint64_t> runs_with_event;
  std::map<std::uint64_t, double> corrected_total;
  std::uint64_t violations = 0;
  if (csv) *csv << "run,inputs,outputs,extra,change_levels\n";
  for (std::uint64_t i = 0; i < n; ++i) {
    ThickenResult r;
    try {
      r = stabilized_thicken(split_grid(BitStream::seeded(seed + i, cfg.p)), cfg);
    } catch (const Error& e) {
      if (std::string(e.what()).find("monotonicity") == std::string::npos) throw;
      ++violations;
      continue;
    }
    for (std::size_t a = 0; a < m; ++a) {
      if (r.values[a] < r.inputs[a]) ++violations;
      ones[a] += r.values[a];
      for (std::size_t b = a + 1; b < m; ++b) ++joint[a][b][2 * r.values[a] + r.values[b]];
      for (std::size_t e = 0; e < ex; ++e) ++extra_joint[e][a][2 * r.extra[e] + r.values[a]];
    }
    for (std::size_t t = 0; t < triples.size(); ++t) {
      const auto& [a, b, c] = triples[t];
      ++triple_counts[t][4 * r.values[a] + 2 * r.values[b] + r.values[c]];
    }
    for (std::size_t e = 0; e < ex; ++e) extra_ones[e] += r.extra[e];
    std::set<std::uint64_t> levels;
    for (const auto& ev : r.certificate.change_events) levels.insert(ev.level);
    for (auto l : levels) ++runs_with_event[l];
    for (const auto& [l, c] : r.corrected_per_level) corrected_total[l] += static_cast<double>(c);
    if (csv) {
      std::string in, out, xb, lv;
      for (Bit b : r.inputs) in.push_back(b ? '1' : '0');
      for (Bit b : r.values) out.push_back(b ? '1' : '0');
      for (Bit b : r.extra) xb.push_back(b ? '1' : '0');
      for (auto l : levels) lv += (lv.empty() ? "" : ";") + std::to_string(l);
      *csv << i << "," << in << "," << out << "," << xb << "," << lv << "\n";
    }
  }
  const double nn = static_cast<double>(n);
  const double target = cfg.p_prime.to_double(), sigma = binomial_sigma(target, n);
  bool marginals_ok = true;
  nlohmann::ordered_json marg = nlohmann::ordered_json::array();
  for (std::size_t a = 0; a < m; ++a) {
    double f = static_cast<double>(ones[a]) / nn;
    marg.push_back(f);
    marginals_ok = marginals_ok && detail::within_sigmas(f, target, sigma);
  }
  rep.statistics["marginals"] = marg;
  rep.statistics["marginal_sigma"] = sigma;

  const std::size_t pair_tests = m * (m - 1) / 2;
  const double alpha_pairs = bonferroni(kSignificance, pair_tests);
  double min_p = 1;
  bool pairs_ok = true;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const auto& c = joint[a][b];
      TestResult t = chi_square_independence({{c[0], c[1]}, {c[2], c[3]}});
      min_p = std::min(min_p, t.p_value);
      pairs_ok = pairs_ok && t.p_value > alpha_pairs;
    }
  }
  rep.statistics["pairwise_tests"] = pair_tests;
  rep.statistics["pairwise_alpha"] = alpha_pairs;
  rep.statistics["pairwise_min_p"] = min_p;
  // triples against the product of Bernoulli(p') marginals
  const double alpha_triples = bonferroni(kSignificance, triples.size());
  const FiniteLaw target_law = bernoulli_law(cfg.p_prime);
  std::vector<double> triple_probs;
  for (int cell = 0; cell < 8; ++cell) {
    Rational pr(1);
    for (int bit = 2; bit >= 0; --bit) pr *= target_law.at(((cell >> bit) & 1) ? "1" : "0");
    triple_probs.push_back(pr.to_double());
  }
  double min_pt = 1;
  bool triples_ok = true;
  for (const auto& c : triple_counts) {
    TestResult t = chi_square_gof(std::vector<std::uint64_t>(c.begin(), c.end()), triple_probs);
    min_pt = std::min(min_pt, t.p_value);
    triples_ok = triples_ok && t.p_value > alpha_triples;
  }
  rep.statistics["triple_tests"] = triples.size();
  rep.statistics["triple_alpha"] = alpha_triples;
  rep.statistics["triple_min_p"] = min_pt;
  rep.statistics["monotonicity_violations"] = violations;

  nlohmann::ordered_json change = nlohmann::ordered_json::object();
  bool stabilization_ok = top >= 4;
  for (std::uint64_t level = 2; level <= 4; ++level) {
    const double bound = std::ldexp(1.0, -static_cast<int>(level + 1));
    const double freq = static_cast<double>(runs_with_event[level]) / nn;
    const double lim = bound + 3 * binomial_sigma(bound, n);
    change[std::to_string(level)] = {{"frequency", freq}, {"limit", lim}};
    stabilization_ok = stabilization_ok && freq < lim;
  }
  rep.statistics["change_event_frequency"] = change;
  if (top < 4) rep.notes.push_back("max_level below 4: change events at level 4 are not observable");
  nlohmann::ordered_json corr = nlohmann::ordered_json::object();
  for (const auto& [l, c] : corrected_total) corr[std::to_string(l)] = c / nn;
  rep.statistics["mean_corrected_nodes_per_level"] = corr;

  const std::size_t extra_tests = ex * m;
  const double alpha_extra = bonferroni(kSignificance, extra_tests);
  double min_pe = 1;
  bool extra_ok = true;
  for (std::size_t e = 0; e < ex; ++e) {
    for (std::size_t a = 0; a < m; ++a) {
      const auto& c = extra_joint[e][a];
      TestResult t = chi_square_independence({{c[0], c[1]}, {c[2], c[3]}});
      min_pe = std::min(min_pe, t.p_value);
      extra_ok = extra_ok && t.p_value > alpha_extra;
    }
  }
  nlohmann::ordered_json extra_means = nlohmann::ordered_json::array();
  for (auto o : extra_ones) extra_means.push_back(static_cast<double>(o) / nn);
  rep.statistics["extra_means"] = extra_means;
  rep.statistics["extra_tests"] = extra_tests;
  rep.statistics["extra_alpha"] = alpha_extra;
  rep.statistics["extra_min_p"] = min_pe;

  rep.criterion("marginals_within_3sigma", marginals_ok);
  rep.criterion("pairwise_independence", pairs_ok);
  rep.criterion("triple_independence", triples_ok);
  rep.criterion("monotonicity", violations == 0);
  rep.criterion("stabilization_bound", stabilization_ok);
  rep.criterion("extra_bits_independent", extra_ok);
  return rep;
}

// --- Poisson thickening ------------------------------------------------------------

inline ExperimentReport poisson_experiment(const ExperimentSpec& spec, std::ostream* csv = nullptr) {
  spec.allow({"lambda", "lambdaprime", "delta", "max_level", "gap_bits", "samples", "seed", "window"});
  PoissonConfig cfg;
  cfg.lambda = spec.rational("lambda", Rational(1));
  cfg.lambda_prime = spec.rational("lambdaprime", Rational(2));
  cfg.delta = spec.rational("delta", Rational(1, 32));
  cfg.max_level = spec.integer("max_level", 0);
  cfg.gap_bits = static_cast<unsigned>(spec.integer("gap_bits", kDefaultGapBits));
  const Rational window = spec.rational("window", Rational(3, 2));
  const std::uint64_t n = spec.integer("samples", 100'000), seed = spec.integer("seed", 42);
  if (n == 0) throw ConfigError(spec.line_of("samples"), "samples must be positive");
  if (window.sign() <= 0) throw ConfigError(spec.line_of("window"), "window must be positive");
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(spec.line_of("lambda"), e.what());
  }
  ExperimentReport rep;
  rep.id = "thicken-poisson";
  rep.config = {{"lambda", cfg.lambda.str()},   {"lambdaprime", cfg.lambda_prime.str()},
                {"delta", cfg.delta.str()},     {"max_level", cfg.effective_max_level()},
                {"gap_bits", cfg.gap_bits},     {"window", window.str()}};
  rep.seed = seed;
  rep.samples = n;
  const double mass = (cfg.lambda_prime * window).to_double();
  const std::int64_t last_unit = thicken::detail::floor_int(window);
  std::vector<std::uint64_t> counts;
  std::vector<Rational> gaps;
  gaps.reserve(n);
  std::uint64_t violations = 0, missing_gaps = 0, events = 0;
  double sum = 0, sum2 = 0;
  if (csv) *csv << "run,count,first_gap,added_points\n";
  for (std::uint64_t i = 0; i < n; ++i) {
    PoissonThickener th(std::nullopt, seed + i, cfg);
    std::uint64_t count = 0, added = 0;
    for (std::int64_t u = 0; u <= last_unit; ++u) {
      const auto& in = th.input_unit(u);
      const auto& out = th.output_unit(u);
      if (!std::includes(out.begin(), out.end(), in.begin(), in.end())) ++violations;
      added += out.size() - in.size();
      for (const auto& off : out)
        if (off + Rational(u) < window) ++count;
    }
    std::optional<Rational> gap;
    try {
      for (std::int64_t u = 0; !gap; ++u) {
        const auto& out = th.output_unit(u);
        if (!out.empty()) gap = out.front() + Rational(u);
      }
    } catch (const MaxLevelInsufficient&) {
      ++missing_gaps;
    }
    if (gap) gaps.push_back(*gap);
    events += th.certificate().change_events.size();
    if (counts.size() <= count) counts.resize(count + 1, 0);
    ++counts[count];
    sum += static_cast<double>(count);
    sum2 += static_cast<double>(count) * static_cast<double>(count);
    if (csv) *csv << i << "," << count << "," << (gap ? gap->str() : "") << "," << added << "\n";
  }
  // cells 0..K-1 and a tail cell, each expecting at least five
  std::vector<double> pmf = detail::poisson_pmf(mass, counts.size() + 64);
  const double nn = static_cast<double>(n);
  std::size_t cells = 1;
  double tail = 1 - pmf[0];
  while (nn * pmf[cells] >= kMinExpected && nn * (tail - pmf[cells]) >= kMinExpected) {
    tail -= pmf[cells];
    ++cells;
  }
  std::vector<std::uint64_t> obs(cells + 1, 0);
  std::vector<double> probs(pmf.begin(), pmf.begin() + static_cast<std::ptrdiff_t>(cells));
  probs.push_back(tail);
  for (std::size_t c = 0; c < counts.size(); ++c) obs[std::min(c, cells)] += counts[c];
  TestResult chi = chi_square_gof(obs, probs);
  TestResult ks = ks_exponential(gaps, cfg.lambda_prime);
  const double mean = sum / nn;
  rep.statistics["count_mean"] = mean;
  rep.statistics["count_variance"] = sum2 / nn - mean * mean;
  rep.statistics["count_target_mean"] = mass;
  rep.statistics["count_chi_square"] = test_json(chi);
  rep.statistics["gap_ks"] = test_json(ks);
  rep.statistics["superset_violations"] = violations;
  rep.statistics["runs_without_gap"] = missing_gaps;
  rep.statistics["change_events"] = events;
  rep.criterion("superset", violations == 0);
  rep.criterion("count_chi_square", chi.p_value > kSignificance);
  rep.criterion("interarrival_ks", missing_gaps == 0 && ks.p_value > kSignificance);
  return rep;
}

// --- distinguisher ---------------------------------------------------------------------

inline ExperimentReport distinguish_experiment(const ExperimentSpec& spec) {
  spec.allow({"lambda", "lambdaprime", "epsilon", "r", "L", "samples", "training", "seed", "candidate"});
  EventConfig cfg;
  try {
    cfg = EventConfig::make(spec.rational("epsilon", Rational(1, 8)), spec.rational("r", Rational(2)), spec.integer("L", 512));
    cfg.lambda = spec.rational("lambda", Rational(1));
    cfg.lambda_prime = spec.rational("lambdaprime", Rational(2));
    cfg.training_samples = spec.integer("training", kMinTrainingSamples);
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(spec.line_of("epsilon"), e.what());
  }
  const std::string name = spec.text("candidate", "unit-offset");
  CandidateThickening cand;
  if (name == "unit-offset") cand = unit_offset_candidate();
  else if (name == "empty") cand = empty_candidate();
  else throw ConfigError(spec.line_of("candidate"), "unknown candidate '" + name + "'");
  const std::uint64_t n = spec.integer("samples", 10'000), seed = spec.integer("seed", 42);
  DistinguishReport d;
  try {
    d = test_E(cand, cfg, n, seed);
  } catch (const InsufficientSamples& e) {
    throw ConfigError(spec.line_of("samples"), e.what());
  }
  ExperimentReport rep;
  rep.id = "distinguish";
  rep.config = cfg.to_json();
  rep.config["candidate"] = name;
  rep.seed = seed;
  rep.samples = n;
  rep.statistics = d.to_json();
  rep.statistics.erase("config");
  rep.statistics.erase("seed");
  rep.statistics.erase("n_samples");
  if (!d.family.success) rep.notes.push_back("no epsilon/4 window approximation found at this r");
  if (d.log2_z_ceiling >= 0) rep.notes.push_back("the ceiling on P(E(Z1,Z2)) exceeds 1 at this L and epsilon");
  rep.criterion("wilson_intervals_disjoint", d.distinguished);
  rep.criterion("z_estimate_below_ceiling", d.ceiling_respected);
  return rep;
}

// --- calibration of the statistical tests ---------------------------------------------

inline ExperimentReport calibrate(const ExperimentSpec& spec) {
  spec.allow({"reps", "samples", "seed"});
  const std::uint64_t reps = spec.integer("reps", 100), n = spec.integer("samples", 1000), seed = spec.integer("seed", 42);
  if (reps == 0 || n < kMinKsSamples) throw ConfigError(spec.line_of("samples"), "need reps > 0 and samples >= 100");
  ExperimentReport rep;
  rep.id = "calibrate";
  rep.config = {{"reps", reps}};
  rep.seed = seed;
  rep.samples = n;
  const FiniteLaw fair = bernoulli_law(Rational(1, 2));
  std::uint64_t chi_pass = 0, ks_pass = 0;
  for (std::uint64_t i = 0; i < reps; ++i) {
    std::vector<std::vector<std::string>> samples;
    thicken::detail::KeyedUniforms u{derive_seed(seed + i, 1), 0, 62};
    for (std::uint64_t j = 0; j < n; ++j) {
      std::uint64_t w = u();
      samples.push_back({(w & 1) ? "1" : "0", (w & 2) ? "1" : "0"});
    }
    if (chi_square_iid(samples, {fair, fair}).p_value > kSignificance) ++chi_pass;
    thicken::detail::KeyedUniforms g{derive_seed(seed + i, 2), 0, 32};
    std::vector<Rational> gaps;
    for (std::uint64_t j = 0; j < n; ++j) gaps.push_back(exponential_gap(g(), 32, Rational(1)));
    if (ks_exponential(gaps, Rational(1)).p_value > kSignificance) ++ks_pass;
  }
  // power: a constant sample, equal gaps, and a rate off by two
  std::vector<std::vector<std::string>> constant(1000, {"1"});
  const double p_const = chi_square_iid(constant, {fair}).p_value;
  const double p_equal = ks_exponential(std::vector<Rational>(1000, Rational(1)), Rational(1)).p_value;
  thicken::detail::KeyedUniforms g{derive_seed(seed, 3), 0, 32};
  std::vector<Rational> fast;
  for (int j = 0; j < 10000; ++j) fast.push_back(exponential_gap(g(), 32, Rational(2)));
  const double p_rate = ks_exponential(fast, Rational(1)).p_value;
  // rejections of a true null: about reps * 0.01, within three binomial sigmas
  const double expect = static_cast<double>(reps) * kSignificance;
  const double lim = expect + 3 * std::sqrt(expect * (1 - kSignificance));
  rep.statistics["chi_square_pass"] = chi_pass;
  rep.statistics["ks_pass"] = ks_pass;
  rep.statistics["rejection_limit"] = lim;
  rep.statistics["p_constant_sample"] = p_const;
  rep.statistics["p_equal_gaps"] = p_equal;
  rep.statistics["p_rate_mismatch"] = p_rate;
  rep.criterion("chi_square_calibrated", static_cast<double>(reps - chi_pass) <= lim);
  rep.criterion("ks_calibrated", static_cast<double>(reps - ks_pass) <= lim);
  rep.criterion("power", p_const < 1e-6 && p_equal < 1e-6 && p_rate < 1e-6);
  return rep;
}

// --- dispatch ------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"corrector-exact", "corrector-rate", "extractor-tv", "bias-spot",
                                                 "no-extractor",    "extract",        "thicken",      "thicken-poisson",
                                                 "distinguish",     "calibrate"};
  return names;
}

inline ExperimentReport run_spec(const ExperimentSpec& spec, std::ostream* csv = nullptr) {
  auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  const std::string& name = spec.name();
  if (name == "corrector-exact") rep = corrector_exact(spec);
  else if (name == "corrector-rate" || name == "correct") rep = corrector_rate(spec, csv);
  else if (name == "extractor-tv") rep = extractor_tv(spec);
  else if (name == "bias-spot") rep = bias_spot(spec);
  else if (name == "no-extractor" || name == "search-no-extractor") rep = no_extractor(spec);
  else if (name == "extract") rep = extract_fairness(spec, csv);
  else if (name == "thicken") rep = thicken_experiment(spec, csv);
  else if (name == "thicken-poisson") rep = poisson_experiment(spec, csv);
  else if (name == "distinguish") rep = distinguish_experiment(spec);
  else if (name == "calibrate") rep = calibrate(spec);
  else throw ConfigError(0, "unknown experiment '" + name + "'");
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline ExperimentReport run_experiment(const std::string& spec_text, std::ostream* csv = nullptr) {
  return run_spec(ExperimentSpec::parse(spec_text), csv);
}

inline ExperimentReport run_experiment_file(const std::string& path, std::ostream* csv = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read spec file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return run_experiment(ss.str(), csv);
}

}  // namespace thicken::lab
