#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thicken/errors.hpp"
#include "thicken/lab/stats.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken::lab {

inline constexpr std::size_t kMaxEnumeratedBits = 24;

struct ConditionalTable {
  FiniteLaw joint;        // P(statistic = s and condition)
  Rational condition_mass;
  FiniteLaw conditional;  // P(statistic = s | condition)
};

// Brute force over independent bits with the given biases. The statistic maps a
// state to an outcome label, the conditioning selects the states kept.
template <class Statistic, class Condition>
ConditionalTable enumerate_conditional(const std::vector<Rational>& bias, Statistic&& statistic,
                                       Condition&& conditioning) {
  if (bias.size() > kMaxEnumeratedBits)
    throw FeasibilityGuard("enumerate_conditional: " + std::to_string(bias.size()) + " bits exceed the 2^24 guard");
  for (const auto& b : bias)
    if (b.sign() < 0 || b > Rational(1)) throw InvalidArgument("enumerate_conditional: bias outside [0,1]");
  const std::size_t n = bias.size();
  ConditionalTable out;
  out.condition_mass = Rational(0);
  std::vector<Bit> state(n);
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << n); ++code) {
    Rational p(1);
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = static_cast<Bit>((code >> i) & 1);
      p *= state[i] ? bias[i] : Rational(1) - bias[i];
    }
    if (p.is_zero() || !conditioning(state)) continue;
    out.condition_mass += p;
    auto [it, fresh] = out.joint.emplace(statistic(state), p);
    if (!fresh) it->second += p;
  }
  if (out.condition_mass.is_zero()) throw EmptyConditioning("enumerate_conditional: the conditioning event is null");
  for (const auto& [s, p] : out.joint) out.conditional.emplace(s, p / out.condition_mass);
  return out;
}

template <class Statistic>
ConditionalTable enumerate_conditional(const std::vector<Rational>& bias, Statistic&& statistic) {
  return enumerate_conditional(bias, std::forward<Statistic>(statistic), [](const std::vector<Bit>&) { return true; });
}

}  // namespace thicken::lab
