#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "thicken/errors.hpp"
#include "thicken/rational.hpp"
#include "thicken/stream.hpp"

namespace thicken {

inline constexpr std::size_t kDefaultFairBudget = 4096;

struct DensityBit {
  Bit value;
  std::size_t consumed;
};

// Reads fair bits until the uniform they spell differs from q in some digit;
// returns 1 iff the uniform is below q.
inline DensityBit bernoulli_from_fair(BitStream& fair, const BinaryExpansion& q,
                                      std::size_t budget = kDefaultFairBudget) {
  for (std::size_t i = 1; i <= budget; ++i) {
    Bit u = fair.next();
    Bit d = q.digit(i);
    if (u != d) return {static_cast<Bit>(u < d), i};
  }
  throw BudgetExceeded("density transform: uniform agrees with q on " + std::to_string(budget) + " digits");
}

// Output bit j is produced from fresh fair bits following those used by bit j-1.
inline BitStream density_transform(BitStream fair, const Rational& q) {
  if (q.sign() <= 0 || q >= Rational(1)) throw InvalidArgument("density_transform: q must lie in (0,1)");
  struct State {
    BitStream fair;
    BinaryExpansion q;
    std::vector<Bit> out;
  };
  auto state = std::make_shared<State>(State{fair, BinaryExpansion(q), {}});
  return BitStream::from_function([state](const Index& j) {
    if (!j.is_small()) throw InvalidArgument("density_transform: output is sequential; index too large");
    while (state->out.size() < j.value()) state->out.push_back(bernoulli_from_fair(state->fair, state->q).value);
    return state->out[j.value() - 1];
  });
}

}  // namespace thicken
