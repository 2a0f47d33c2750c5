#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "thicken/corrector.hpp"
#include "thicken/density.hpp"
#include "thicken/errors.hpp"
#include "thicken/extractor.hpp"
#include "thicken/index.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

struct Coordinate {
  std::uint64_t level;
  Index index;
};

// Smallest N with 2^{-(N+1)} <= delta.
inline std::uint64_t level_for_delta(const Rational& delta) {
  if (delta.sign() <= 0 || delta >= Rational(1)) throw InvalidArgument("delta must lie in (0,1)");
  std::uint64_t n = 0;
  while (Rational::pow2(-static_cast<long>(n + 1)) > delta) ++n;
  return std::max<std::uint64_t>(n, 1);
}

struct ThickenConfig {
  Rational p;
  Rational p_prime;
  Rational delta = Rational(1, 1024);
  std::uint64_t max_level = 0;  // 0: the smallest level meeting delta
  std::vector<Coordinate> coords;
  std::uint64_t extra_count = 0;

  void validate() const {
    ExtractorParams::check_densities(p, p_prime);
    if (p.sign() <= 0) throw InvalidArgument("p must be positive");
    for (const auto& c : coords)
      if (c.level == 0) throw InvalidArgument("levels start at 1");
  }

  std::uint64_t effective_max_level() const {
    std::uint64_t needed = level_for_delta(delta);
    if (max_level == 0) return needed;
    if (max_level < needed)
      throw MaxLevelInsufficient("max_level " + std::to_string(max_level) + " cannot meet delta " + delta.str() +
                                 "; need at least " + std::to_string(needed));
    return max_level;
  }

  std::uint64_t min_level() const {
    std::uint64_t n0 = coords.empty() ? 1 : coords.front().level;
    for (const auto& c : coords) n0 = std::min(n0, c.level);
    return n0;
  }
};

struct ChangeEvent {
  std::uint64_t level;
  Index coordinate;
};

struct StabilizationCertificate {
  std::uint64_t stabilized_at = 0;
  std::vector<ChangeEvent> change_events;
  Rational residual_failure_bound;
};

// Row j of level e of the input grid: position t is base bit pair(e, pair(j, t)).
class GridRow {
 public:
  GridRow(BitStream base, std::uint64_t e, const Index& j)
      : base_(std::move(base)), keyed_(base_.supports_keys()), e_(e), j_(j), e_key_(Index::small_key(e)), j_key_(j.key()) {}

  Bit at(std::uint64_t t) {
    if (keyed_) return base_.at_key(Index::pair_key(e_key_, Index::pair_key(j_key_, Index::small_key(t))));
    return base_.at(pair(Index(e_), pair(j_, Index(t))));
  }

  Bit at(const Index& t) { return base_.at(pair(Index(e_), pair(j_, t))); }

 private:
  BitStream base_;
  bool keyed_;
  std::uint64_t e_;
  Index j_;
  IndexKey e_key_;
  IndexKey j_key_;
};

// Everything shared by cascades over the same input grid: extractor parameters
// and the uncorrected extractor outputs, which do not depend on the truncation.
class CascadeContext {
 public:
  CascadeContext(GridStream x, const Rational& p, const Rational& p_prime)
      : x_(std::move(x)), params_(shared_cache(p, p_prime)), q_((p_prime - p) / (Rational(1) - p)) {}

  // level-e tolerance 2^{-e}, split over coordinates J by code length
  const ExtractorParams& params(std::uint64_t e, const Index& j) { return params_->at(e + j.code_length() - 1); }

  const Extraction& uncorrected(std::uint64_t e, const Index& j) {
    Index key = pair(Index(e), j);
    auto it = uncorrected_.find(key);
    if (it != uncorrected_.end()) return it->second;
    GridRow row(x_.base(), e, j);
    return uncorrected_.emplace(key, extract(row, params(e, j))).first->second;
  }

  BitStream x_row(std::uint64_t e, const Index& j) {
    auto row = std::make_shared<GridRow>(x_.base(), e, j);
    return BitStream::from_function([row](const Index& t) { return row->at(t); });
  }

  Bit x(std::uint64_t level, const Index& c) { return x_.at(Index(level), c); }

  const BinaryExpansion& q() const { return q_; }

  // |P(f = 1 | merged) - 1/2| <= |1-2r|^ones / 2
  Rational half_bias(const ExtractorParams& params, std::uint64_t ones) {
    while (half_bias_.size() <= ones)
      half_bias_.push_back(half_bias_.empty() ? Rational(1, 2) : half_bias_.back() * params.bias_base());
    return half_bias_[ones];
  }

  std::size_t uncorrected_evaluations() const { return uncorrected_.size(); }

 private:
  // choose_params is costly and depends only on (p, p', epsilon); reuse across runs
  static std::shared_ptr<ParamsCache> shared_cache(const Rational& p, const Rational& p_prime) {
    thread_local std::unordered_map<std::string, std::shared_ptr<ParamsCache>> caches;
    auto& slot = caches[p.str() + " " + p_prime.str()];
    if (!slot) slot = std::make_shared<ParamsCache>(p, p_prime);
    return slot;
  }

  GridStream x_;
  std::shared_ptr<ParamsCache> params_;
  BinaryExpansion q_;
  std::vector<Rational> half_bias_;
  std::unordered_map<Index, Extraction, IndexHash> uncorrected_;
};

// One truncation of the recursion: the level-e vector extractor is corrected iff
// e <= truncation. Level-i outputs are read from the level-(i+1) extractor block:
// component 1 (through g) gives Y^i, component 2 gives Z^i, 3 and 4 the extra bits.
class Cascade {
 public:
  Cascade(std::shared_ptr<CascadeContext> ctx, std::uint64_t truncation)
      : ctx_(std::move(ctx)), truncation_(truncation) {}
  Cascade(const Cascade&) = delete;
  Cascade& operator=(const Cascade&) = delete;

  Bit w(std::uint64_t e, const Index& j) {
    const Extraction& ex = ctx_->uncorrected(e, j);
    if (e > truncation_) return ex.value;
    Index key = pair(Index(e), j);
    auto it = corrected_.find(key);
    if (it != corrected_.end()) return it->second;
    Extraction copy = ex;
    const ExtractorParams& params = ctx_->params(e, j);
    BitStream z_row = BitStream::from_function([this, e, j](const Index& t) { return z(e, pair(j, t)); });
    auto make_law = [&]() {
      BitStream y_row = BitStream::from_function([this, e, j](const Index& t) { return y(e, pair(j, t)); });
      return cond_law_f(merged_stream(ctx_->x_row(e, j), y_row), params, copy.window_ones);
    };
    CorrectionRecord rec = decide_correction(copy.value, ctx_->half_bias(params, copy.window_ones), make_law, z_row);
    ++corrected_count_[e];
    if (rec.fired) fired_.push_back({e, j});
    Bit v = static_cast<Bit>(copy.value ^ rec.fired);
    corrected_.emplace(key, v);
    return v;
  }

  Bit y(std::uint64_t i, const Index& c) {
    Index key = pair(Index(i), c);
    auto it = y_.find(key);
    if (it != y_.end()) return it->second;
    BitStream fair = BitStream::from_function([this, i, c](const Index& t) { return w(i + 1, pair(Index(1), pair(c, t))); });
    Bit v = bernoulli_from_fair(fair, ctx_->q()).value;
    y_.emplace(key, v);
    return v;
  }

  Bit z(std::uint64_t i, const Index& c) { return w(i + 1, pair(Index(2), c)); }

  // F^i_c = max(X^i_c, Y^i_c); Y is not evaluated when X already decides.
  Bit f(std::uint64_t i, const Index& c) { return ctx_->x(i, c) ? Bit{1} : y(i, c); }

  // Extra fair bit number n (n >= 1) read at level i: components 3 and 4 alternate.
  Bit extra(std::uint64_t i, std::uint64_t n) {
    std::uint64_t component = n % 2 == 1 ? 3 : 4;
    return w(i + 1, pair(Index(component), Index((n + 1) / 2)));
  }

  // Corrector firings; a firing at level e is a change between truncations e-1 and e.
  const std::vector<ChangeEvent>& fired() const { return fired_; }
  const std::map<std::uint64_t, std::uint64_t>& corrected_counts() const { return corrected_count_; }
  std::uint64_t truncation() const { return truncation_; }

 private:
  std::shared_ptr<CascadeContext> ctx_;
  std::uint64_t truncation_;
  std::unordered_map<Index, Bit, IndexHash> corrected_;
  std::unordered_map<Index, Bit, IndexHash> y_;
  std::vector<ChangeEvent> fired_;
  std::map<std::uint64_t, std::uint64_t> corrected_count_;
};

struct TruncatedValues {
  std::vector<Bit> y;
  std::vector<Bit> z;
  std::vector<Bit> f;
};

inline TruncatedValues thicken_grid_truncated(GridStream x_grid, std::uint64_t n, const ThickenConfig& config) {
  config.validate();
  std::uint64_t top = config.effective_max_level() + 1;
  if (n > top) throw InvalidArgument("truncation level above max_level + 1");
  auto ctx = std::make_shared<CascadeContext>(x_grid, config.p, config.p_prime);
  Cascade cascade(ctx, n);
  TruncatedValues out;
  for (const auto& c : config.coords) {
    out.y.push_back(cascade.y(c.level, c.index));
    out.z.push_back(cascade.z(c.level, c.index));
    out.f.push_back(static_cast<Bit>(ctx->x(c.level, c.index) | out.y.back()));
  }
  return out;
}

struct ThickenResult {
  std::vector<Bit> inputs;
  std::vector<Bit> values;
  std::vector<Bit> extra;
  StabilizationCertificate certificate;
  std::map<std::uint64_t, std::uint64_t> corrected_per_level;
};

// Emits the truncation max_level+1. Later truncations differ only if a corrector
// at a level above max_level+1 fires, which has probability below
// sum_{m > max_level} 2^{-(m+1)}. Firings at lower levels are reported as change
// events: a firing at level n+1 is where truncations n and n+1 part ways.
inline ThickenResult stabilized_thicken(GridStream x_grid, const ThickenConfig& config) {
  config.validate();
  const std::uint64_t top = config.effective_max_level();
  const std::uint64_t n0 = config.min_level();
  auto ctx = std::make_shared<CascadeContext>(x_grid, config.p, config.p_prime);
  Cascade cascade(ctx, top + 1);
  ThickenResult out;
  for (const auto& c : config.coords) {
    Bit xv = ctx->x(c.level, c.index);
    Bit fv = cascade.f(c.level, c.index);
    if (fv < xv) throw Error("monotonicity violated at level " + std::to_string(c.level));
    out.inputs.push_back(xv);
    out.values.push_back(fv);
  }
  for (std::uint64_t n = 1; n <= config.extra_count; ++n) out.extra.push_back(cascade.extra(n0, n));
  for (const auto& ev : cascade.fired()) out.certificate.change_events.push_back({ev.level - 1, ev.coordinate});
  std::sort(out.certificate.change_events.begin(), out.certificate.change_events.end(),
            [](const ChangeEvent& a, const ChangeEvent& b) {
              if (a.level != b.level) return a.level < b.level;
              return a.coordinate.str() < b.coordinate.str();
            });
  out.certificate.stabilized_at = top;
  out.certificate.residual_failure_bound = Rational::pow2(-static_cast<long>(top + 1));
  out.corrected_per_level = cascade.corrected_counts();
  return out;
}

inline BitStream extra_bits(GridStream x_grid, const ThickenConfig& config) {
  if (config.extra_count == 0) throw InvalidArgument("extra_bits: extra_count must be positive");
  return BitStream::recorded(stabilized_thicken(std::move(x_grid), config).extra);
}

// A finite window [lo, lo + bits.size()) of a Z-indexed sequence.
struct SequenceWindow {
  std::int64_t lo = 0;
  std::vector<Bit> bits;

  std::int64_t hi() const { return lo + static_cast<std::int64_t>(bits.size()); }

  std::string str() const {
    std::string s;
    for (Bit b : bits) s.push_back(b ? '1' : '0');
    return s;
  }
};

struct SequenceResult {
  SequenceWindow output;
  StabilizationCertificate certificate;
};

// Z index i is base position z_to_n(i); base position n is grid cell unpair(n).
// The window fixes the input there; everything else comes from the seeded stream.
inline SequenceResult thicken_sequence(const SequenceWindow& input, std::uint64_t seed, ThickenConfig config) {
  std::unordered_map<std::uint64_t, Bit> fixed;
  config.coords.clear();
  for (std::size_t k = 0; k < input.bits.size(); ++k) {
    std::uint64_t n = z_to_n(input.lo + static_cast<std::int64_t>(k));
    fixed.emplace(n, input.bits[k]);
    auto [level, c] = unpair(n);
    config.coords.push_back({level, Index(c)});
  }
  BitStream base = BitStream::overlay(BitStream::seeded(seed, config.p), std::move(fixed));
  ThickenResult r = stabilized_thicken(split_grid(base), config);
  return {{input.lo, r.values}, r.certificate};
}

inline nlohmann::ordered_json certificate_json(const StabilizationCertificate& c) {
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const auto& e : c.change_events) events.push_back({{"level", e.level}, {"coordinate", e.coordinate.str()}});
  return {{"stabilized_at", c.stabilized_at},
          {"residual_failure_bound", c.residual_failure_bound.str()},
          {"change_events", events}};
}

}  // namespace thicken
