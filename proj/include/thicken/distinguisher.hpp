#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "thicken/errors.hpp"
#include "thicken/lab/stats.hpp"
#include "thicken/poisson.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

// A finite-window candidate: an added point at y depends on the input within
// [y - window_radius, y + window_radius]. apply returns the added points it can
// determine, i.e. those in [lo + radius, hi - radius].
struct CandidateThickening {
  std::string name;
  Rational window_radius;
  std::function<std::vector<Rational>(const PointWindow&)> apply;
};

// Adds x + 1 for every input point x.
inline CandidateThickening unit_offset_candidate() {
  return {"unit-offset", Rational(1), [](const PointWindow& x) {
            std::vector<Rational> out;
            for (const auto& p : x.points) {
              Rational y = p + Rational(1);
              if (y >= x.lo + Rational(1) && y <= x.hi - Rational(1) && !x.contains(y)) out.push_back(std::move(y));
            }
            return out;
          }};
}

inline CandidateThickening empty_candidate() {
  return {"empty", Rational(0), [](const PointWindow&) { return std::vector<Rational>{}; }};
}

inline constexpr std::uint64_t kMinTrainingSamples = 10'000;
inline constexpr std::uint64_t kMinDistinguishSamples = 10'000;

struct EventConfig {
  Rational epsilon = Rational(1, 8);
  Rational r = Rational(2);
  std::uint64_t L = 512;
  Rational b_max;  // 5 L epsilon
  Rational d_min;  // L epsilon / 8
  Rational lambda = Rational(1);
  Rational lambda_prime = Rational(2);
  std::uint64_t training_samples = kMinTrainingSamples;
  double confidence = 0.99;

  static EventConfig make(const Rational& epsilon, const Rational& r, std::uint64_t L) {
    EventConfig c;
    c.epsilon = epsilon;
    c.r = r;
    c.L = L;
    c.b_max = Rational(5) * Rational(L) * epsilon;
    c.d_min = Rational(L) * epsilon / Rational(8);
    c.validate();
    return c;
  }

  std::uint64_t m() const { return epsilon.denominator().get_ui(); }
  Rational cell() const { return epsilon / Rational(4); }

  void validate() const {
    if (epsilon.sign() <= 0 || epsilon.numerator() != 1) throw InvalidArgument("epsilon must be 1/m for an integer m");
    if (r.sign() <= 0) throw InvalidArgument("approximation radius must be positive");
    if (!(r / cell()).is_integer()) throw InvalidArgument("radius must be a multiple of epsilon/4");
    if (L == 0) throw InvalidArgument("L must be positive");
    if (lambda.sign() <= 0 || !(lambda < lambda_prime)) throw DegenerateParameters("need 0 < lambda < lambda'");
  }

  nlohmann::ordered_json to_json() const {
    return {{"epsilon", epsilon.str()}, {"r", r.str()},         {"L", L},
            {"b_max", b_max.str()},     {"d_min", d_min.str()}, {"lambda", lambda.str()},
            {"lambda_prime", lambda_prime.str()}, {"training_samples", training_samples}};
  }
};

// u has a point in [t, t + epsilon]
inline bool event_A(const PointWindow& u, const Rational& t, const Rational& epsilon) {
  if (t < u.lo || t + epsilon > u.hi) throw OutOfWindow("event_A: [t, t+epsilon] leaves the window");
  return u.count_in(t, t + epsilon) > 0 || u.contains(t + epsilon);
}

namespace detail {

// Occupancy of the grid origin + k w, k in [0, cells): cell k is [origin + k w,
// origin + (k+1) w); node k is the single point origin + k w.
struct GridOccupancy {
  std::vector<std::uint8_t> cell;
  std::vector<std::uint8_t> node;

  GridOccupancy(const std::vector<Rational>& points, const Rational& origin, const Rational& w, std::int64_t cells)
      : cell(static_cast<std::size_t>(cells), 0), node(static_cast<std::size_t>(cells) + 1, 0) {
    for (const auto& p : points) {
      Rational q = (p - origin) / w;
      std::int64_t k = floor_int(q);
      if (k < 0 || k >= cells) {
        if (k == cells && q.is_integer()) node[static_cast<std::size_t>(k)] = 1;
        continue;
      }
      cell[static_cast<std::size_t>(k)] = 1;
      if (q.is_integer()) node[static_cast<std::size_t>(k)] = 1;
    }
  }

  bool any_cell(std::int64_t from, std::int64_t to) const {  // cells [from, to)
    for (std::int64_t k = from; k < to; ++k)
      if (cell[static_cast<std::size_t>(k)]) return true;
    return false;
  }
};

}  // namespace detail

// Learned window events: for residue i, B_{i eps + n}(X) holds iff X has a point
// in one of the selected cells of width eps/4 in [t - r, t + r], t = i eps + n.
struct BFamily {
  Rational epsilon;
  Rational r;
  std::vector<std::vector<std::int64_t>> cells;  // per residue, offsets from t - r
  std::vector<double> error;                     // measured P(B_t != A_t(f(X))) per residue
  double max_error = 0;
  bool success = false;
  std::uint64_t training_samples = 0;

  std::int64_t cells_per_window() const { return detail::floor_int(Rational(2) * r / (epsilon / Rational(4))); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json sel = nlohmann::ordered_json::array();
    for (const auto& c : cells) sel.push_back(c);
    return {{"selected_cells", sel}, {"error", error}, {"max_error", max_error}, {"success", success},
            {"training_samples", training_samples}};
  }
};

inline BFamily learn_B(const CandidateThickening& candidate, const EventConfig& config, std::uint64_t training_samples,
                       std::uint64_t seed) {
  config.validate();
  if (training_samples < kMinTrainingSamples)
    throw InsufficientSamples("learn_B: need at least 10^4 training samples, got " + std::to_string(training_samples));
  const Rational eps = config.epsilon, w = config.cell(), r = config.r, rho = candidate.window_radius;
  const std::uint64_t m = config.m();
  BFamily fam;
  fam.epsilon = eps;
  fam.r = r;
  fam.training_samples = training_samples;
  const std::int64_t cells = fam.cells_per_window();
  const std::int64_t per_eps = 4;
  // one sample covers every residue: grid origin -r, residue i starts at cell 4i
  const Rational origin = -r;
  const std::int64_t span = cells + per_eps * static_cast<std::int64_t>(m);
  const Rational lo = origin - rho, hi = origin + Rational(span) * w + rho;
  const std::uint64_t train = training_samples / 2;
  std::vector<std::vector<std::uint64_t>> occ(m, std::vector<std::uint64_t>(cells, 0)), hit(m, std::vector<std::uint64_t>(cells, 0));
  std::vector<std::uint64_t> wrong(m, 0);
  fam.cells.assign(m, {});

  auto sample = [&](std::uint64_t s, auto&& visit) {
    PointWindow x = sample_poisson(lo, hi, config.lambda, derive_seed(seed, s));
    std::vector<Rational> added = candidate.apply(x);
    detail::GridOccupancy gx(x.points, origin, w, span), gf(added, origin, w, span);
    for (std::uint64_t i = 0; i < m; ++i) {
      const std::int64_t t_cell = cells / 2 + per_eps * static_cast<std::int64_t>(i);  // t = i eps
      bool a = gf.any_cell(t_cell, t_cell + per_eps) || gf.node[static_cast<std::size_t>(t_cell + per_eps)];
      visit(i, gx, static_cast<std::int64_t>(per_eps * i), a);
    }
  };

  for (std::uint64_t s = 0; s < train; ++s) {
    sample(s, [&](std::uint64_t i, const detail::GridOccupancy& gx, std::int64_t base, bool a) {
      for (std::int64_t k = 0; k < cells; ++k) {
        if (!gx.cell[static_cast<std::size_t>(base + k)]) continue;
        ++occ[i][k];
        if (a) ++hit[i][k];
      }
    });
  }
  for (std::uint64_t i = 0; i < m; ++i)
    for (std::int64_t k = 0; k < cells; ++k)
      if (2 * hit[i][k] > occ[i][k]) fam.cells[i].push_back(k);

  for (std::uint64_t s = train; s < training_samples; ++s) {
    sample(s, [&](std::uint64_t i, const detail::GridOccupancy& gx, std::int64_t base, bool a) {
      bool b = false;
      for (std::int64_t k : fam.cells[i]) b = b || gx.cell[static_cast<std::size_t>(base + k)];
      if (a != b) ++wrong[i];
    });
  }
  const double held_out = static_cast<double>(training_samples - train);
  for (std::uint64_t i = 0; i < m; ++i) {
    fam.error.push_back(static_cast<double>(wrong[i]) / held_out);
    fam.max_error = std::max(fam.max_error, fam.error.back());
  }
  fam.success = fam.max_error < eps.to_double() / 4;
  return fam;
}

struct EventCounts {
  std::uint64_t b = 0;
  std::uint64_t d = 0;
};

namespace detail {

// Grid of width eps/4 anchored at -r covering [-r, L eps + r].
inline EventCounts count_on_grid(const GridOccupancy& gu, const GridOccupancy& gv, const BFamily& fam, std::uint64_t L) {
  EventCounts out;
  const std::int64_t half = fam.cells_per_window() / 2;
  const std::uint64_t m = fam.cells.size();
  for (std::uint64_t i = 0; i < L; ++i) {
    const std::int64_t base = 4 * static_cast<std::int64_t>(i);  // cell of t - r, t = i eps
    bool b = false;
    for (std::int64_t k : fam.cells[i % m]) b = b || gu.cell[static_cast<std::size_t>(base + k)];
    if (!b) continue;
    ++out.b;
    const std::int64_t t_cell = base + half;
    if (gv.any_cell(t_cell, t_cell + 4) || gv.node[static_cast<std::size_t>(t_cell + 4)]) ++out.d;
  }
  return out;
}

}  // namespace detail

// b = #{i < L : B_{i eps}(u)}, d = #{i < L : B_{i eps}(u) and A_{i eps}(v)}. With
// v the candidate's added points on u, d is the count c.
inline EventCounts count_events(const PointWindow& u, const PointWindow& v, const BFamily& fam, const EventConfig& config) {
  const Rational lo = -config.r, hi = Rational(config.L) * config.epsilon + config.r;
  for (const PointWindow* wnd : {&u, &v})
    if (wnd->lo > lo || wnd->hi < hi) throw CoverageError("count_events: windows must cover [-r, L eps + r]");
  if (fam.epsilon != config.epsilon || fam.r != config.r) throw InvalidArgument("count_events: event family learned for another config");
  const std::int64_t span = fam.cells_per_window() + 4 * static_cast<std::int64_t>(config.L);
  detail::GridOccupancy gu(u.points, lo, config.cell(), span), gv(v.points, lo, config.cell(), span);
  return detail::count_on_grid(gu, gv, fam, config.L);
}

struct DistinguishReport {
  EventConfig config;
  std::string candidate;
  std::uint64_t seed = 0;
  std::uint64_t n_samples = 0;
  BFamily family;
  std::uint64_t hits_Y = 0, hits_Z = 0;
  double p_hat_Y = 0, p_hat_Z = 0;
  lab::Interval ci_Y, ci_Z;
  double mean_b_Y = 0, mean_d_Y = 0, mean_b_Z = 0, mean_d_Z = 0;
  double log2_z_ceiling = 0;
  bool distinguished = false;
  bool ceiling_respected = false;

  std::string verdict() const { return distinguished ? "DISTINGUISHED" : "NOT_DISTINGUISHED"; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["config"] = config.to_json();
    j["candidate"] = candidate;
    j["seed"] = seed;
    j["n_samples"] = n_samples;
    j["p_hat_Y"] = p_hat_Y;
    j["ci_Y"] = {ci_Y.lo, ci_Y.hi};
    j["p_hat_Z"] = p_hat_Z;
    j["ci_Z"] = {ci_Z.lo, ci_Z.hi};
    j["z_ceiling"] = std::exp2(log2_z_ceiling);
    j["log2_z_ceiling"] = log2_z_ceiling;
    j["mean_b_Y"] = mean_b_Y;
    j["mean_d_Y"] = mean_d_Y;
    j["mean_b_Z"] = mean_b_Z;
    j["mean_d_Z"] = mean_d_Z;
    j["learned_events"] = family.to_json();
    j["verdict"] = verdict();
    return j;
  }
};

namespace detail {

// Each point goes to the first or second part by a fair keyed bit.
inline std::pair<std::vector<Rational>, std::vector<Rational>> fair_split(const std::vector<Rational>& pts, std::uint64_t seed) {
  std::pair<std::vector<Rational>, std::vector<Rational>> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (keyed_word(seed, i, 0) >> 63) out.second.push_back(pts[i]);
    else out.first.push_back(pts[i]);
  }
  return out;
}

}  // namespace detail

inline DistinguishReport test_E(const CandidateThickening& candidate, const EventConfig& config, std::uint64_t n_samples,
                                std::uint64_t seed) {
  config.validate();
  if (n_samples < kMinDistinguishSamples)
    throw InsufficientSamples("test_E: need at least 10^4 samples, got " + std::to_string(n_samples));
  DistinguishReport rep;
  rep.config = config;
  rep.candidate = candidate.name;
  rep.seed = seed;
  rep.n_samples = n_samples;
  rep.family = learn_B(candidate, config, config.training_samples, derive_seed(seed, 0x6c6561726eULL));
  const Rational lo = -config.r, hi = Rational(config.L) * config.epsilon + config.r;
  const Rational rho = candidate.window_radius;
  const std::int64_t span = rep.family.cells_per_window() + 4 * static_cast<std::int64_t>(config.L);
  const Rational w = config.cell();
  double sb_Y = 0, sd_Y = 0, sb_Z = 0, sd_Z = 0;
  auto event_E = [&](const EventCounts& c) { return Rational(c.b) < config.b_max && Rational(c.d) > config.d_min; };
  for (std::uint64_t s = 0; s < n_samples; ++s) {
    const std::uint64_t run = derive_seed(seed, s + 1);
    PointWindow x = sample_poisson(lo - rho, hi + rho, config.lambda, derive_seed(run, 1));
    std::vector<Rational> y = merge_sorted(x.points, candidate.apply(x));
    std::vector<Rational> y_in;
    for (auto& p : y)
      if (p >= lo && p <= hi) y_in.push_back(std::move(p));
    auto [y1, y2] = detail::fair_split(y_in, derive_seed(run, 2));
    EventCounts cy = detail::count_on_grid(detail::GridOccupancy(y1, lo, w, span), detail::GridOccupancy(y2, lo, w, span),
                                           rep.family, config.L);
    PointWindow z = sample_poisson(lo, hi, config.lambda_prime, derive_seed(run, 3));
    auto [z1, z2] = detail::fair_split(z.points, derive_seed(run, 4));
    EventCounts cz = detail::count_on_grid(detail::GridOccupancy(z1, lo, w, span), detail::GridOccupancy(z2, lo, w, span),
                                           rep.family, config.L);
    rep.hits_Y += event_E(cy);
    rep.hits_Z += event_E(cz);
    sb_Y += static_cast<double>(cy.b);
    sd_Y += static_cast<double>(cy.d);
    sb_Z += static_cast<double>(cz.b);
    sd_Z += static_cast<double>(cz.d);
  }
  const double n = static_cast<double>(n_samples);
  rep.p_hat_Y = static_cast<double>(rep.hits_Y) / n;
  rep.p_hat_Z = static_cast<double>(rep.hits_Z) / n;
  rep.ci_Y = lab::wilson_interval(rep.hits_Y, n_samples, config.confidence);
  rep.ci_Z = lab::wilson_interval(rep.hits_Z, n_samples, config.confidence);
  rep.mean_b_Y = sb_Y / n;
  rep.mean_d_Y = sd_Y / n;
  rep.mean_b_Z = sb_Z / n;
  rep.mean_d_Z = sd_Z / n;
  // 2^{5 L eps} eps^{L eps / 8}
  const double le = (Rational(config.L) * config.epsilon).to_double();
  rep.log2_z_ceiling = 5 * le + le / 8 * std::log2(config.epsilon.to_double());
  rep.distinguished = rep.ci_Y.hi < rep.ci_Z.lo || rep.ci_Z.hi < rep.ci_Y.lo;
  rep.ceiling_respected = std::log2(rep.ci_Z.hi) <= rep.log2_z_ceiling;
  return rep;
}

}  // namespace thicken
