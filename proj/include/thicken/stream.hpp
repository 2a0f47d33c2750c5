#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "thicken/errors.hpp"
#include "thicken/index.hpp"
#include "thicken/rational.hpp"

namespace thicken {

using Bit = std::uint8_t;

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return detail::mix64(detail::mix64(seed ^ 0xa0761d6478bd642fULL) + tag * 0xe7037ed1a0b428dbULL);
}

namespace detail {

// Counter-based generator: word number `block` of the stream keyed by (seed, key).
inline std::uint64_t keyed_word(std::uint64_t seed, std::uint64_t key, std::uint64_t block) {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ key);
  return mix64(h + (block + 1) * 0xd1b54a32d192ed03ULL);
}

}  // namespace detail

// Binary digits of a rational in [0,1], 64 at a time, most significant first.
// Dyadic rationals use their terminating expansion.
class BinaryExpansion {
 public:
  explicit BinaryExpansion(const Rational& q) : value_(q) {
    if (q.sign() < 0 || q > Rational(1)) throw InvalidArgument("binary expansion needs a value in [0,1]");
    rem_ = q.numerator();
    den_ = q.denominator();
  }

  const Rational& value() const { return value_; }

  std::uint64_t block(std::size_t b) const {
    while (blocks_.size() <= b) {
      if (rem_ == den_) {
        // q = 1 is 0.111...
        blocks_.push_back(~std::uint64_t{0});
        continue;
      }
      mpz_class scaled = rem_;
      mpz_mul_2exp(scaled.get_mpz_t(), scaled.get_mpz_t(), 64);
      mpz_class quot;
      mpz_fdiv_qr(quot.get_mpz_t(), rem_.get_mpz_t(), scaled.get_mpz_t(), den_.get_mpz_t());
      std::uint64_t w = 0;
      mpz_export(&w, nullptr, 1, sizeof(w), 0, 0, quot.get_mpz_t());
      blocks_.push_back(w);
    }
    return blocks_[b];
  }

  // i >= 1
  Bit digit(std::uint64_t i) const {
    std::uint64_t w = block((i - 1) / 64);
    return static_cast<Bit>((w >> (63 - (i - 1) % 64)) & 1);
  }

 private:
  Rational value_;
  mutable std::vector<std::uint64_t> blocks_;
  mutable mpz_class rem_;
  mpz_class den_;
};

class BitSource {
 public:
  virtual ~BitSource() = default;
  virtual Bit read(const Index& i) = 0;

  // Sources whose bits depend only on IndexKey can skip building symbolic indices.
  virtual bool supports_keys() const { return false; }
  virtual Bit read_key(const IndexKey&) { throw InvalidArgument("bit source does not support key access"); }
};

namespace detail {

class SeededSource final : public BitSource {
 public:
  SeededSource(std::uint64_t seed, const Rational& bias) : seed_(seed), bias_(bias) {}

  // Bit i is 1 iff the hashed uniform attached to i lies below the bias.
  Bit read(const Index& i) override { return read_key(i.key()); }

  bool supports_keys() const override { return true; }

  Bit read_key(const IndexKey& key) override {
    for (std::size_t b = 0; b < kMaxBlocks; ++b) {
      std::uint64_t w = keyed_word(seed_, key.hash, b);
      std::uint64_t q = bias_.block(b);
      if (w < q) return 1;
      if (w > q) return 0;
    }
    throw BudgetExceeded("seeded stream: uniform tied with the bias");
  }

 private:
  static constexpr std::size_t kMaxBlocks = 64;
  std::uint64_t seed_;
  BinaryExpansion bias_;
};

class RecordedSource final : public BitSource {
 public:
  explicit RecordedSource(std::vector<Bit> bits) : bits_(std::move(bits)) {}

  Bit read(const Index& i) override {
    if (!i.is_small() || i.value() > bits_.size())
      throw StreamExhausted("recorded stream of length " + std::to_string(bits_.size()) + " read at " + i.str());
    return bits_[i.value() - 1];
  }

  bool supports_keys() const override { return true; }

  Bit read_key(const IndexKey& key) override {
    if (!key.is_small() || key.value > bits_.size())
      throw StreamExhausted("recorded stream of length " + std::to_string(bits_.size()) + " overrun");
    return bits_[key.value - 1];
  }

 private:
  std::vector<Bit> bits_;
};

class FunctionSource final : public BitSource {
 public:
  FunctionSource(std::function<Bit(const Index&)> fn, bool memoize) : fn_(std::move(fn)), memoize_(memoize) {}

  Bit read(const Index& i) override {
    if (!memoize_) return fn_(i);
    auto it = memo_.find(i);
    if (it != memo_.end()) return it->second;
    Bit b = fn_(i);
    memo_.emplace(i, b);
    return b;
  }

 private:
  std::function<Bit(const Index&)> fn_;
  bool memoize_;
  std::unordered_map<Index, Bit, IndexHash> memo_;
};

class OverlaySource final : public BitSource {
 public:
  OverlaySource(std::shared_ptr<BitSource> base, std::unordered_map<std::uint64_t, Bit> fixed)
      : base_(std::move(base)), fixed_(std::move(fixed)) {}

  Bit read(const Index& i) override {
    if (i.is_small()) {
      auto it = fixed_.find(i.value());
      if (it != fixed_.end()) return it->second;
    }
    return base_->read(i);
  }

  bool supports_keys() const override { return base_->supports_keys(); }

  Bit read_key(const IndexKey& key) override {
    if (key.is_small()) {
      auto it = fixed_.find(key.value);
      if (it != fixed_.end()) return it->second;
    }
    return base_->read_key(key);
  }

 private:
  std::shared_ptr<BitSource> base_;
  std::unordered_map<std::uint64_t, Bit> fixed_;
};

}  // namespace detail

// Handle on a random-access bit source plus a sequential cursor. Copies share the
// cursor; fork() gives a fresh cursor over the same source. Positions start at 1.
class BitStream {
 public:
  static BitStream seeded(std::uint64_t seed, const Rational& bias = Rational(1, 2)) {
    if (bias.sign() <= 0 || bias >= Rational(1)) throw InvalidArgument("seeded stream bias must lie in (0,1)");
    return BitStream(std::make_shared<detail::SeededSource>(seed, bias));
  }

  static BitStream recorded(std::vector<Bit> bits) {
    for (Bit b : bits)
      if (b > 1) throw InvalidArgument("recorded stream holds a non-bit value");
    return BitStream(std::make_shared<detail::RecordedSource>(std::move(bits)));
  }

  static BitStream parse(std::string_view text) { return recorded(parse_bits(text)); }

  static BitStream from_function(std::function<Bit(const Index&)> fn, bool memoize = false) {
    return BitStream(std::make_shared<detail::FunctionSource>(std::move(fn), memoize));
  }

  // base with some small positions replaced
  static BitStream overlay(const BitStream& base, std::unordered_map<std::uint64_t, Bit> fixed) {
    for (auto& [pos, b] : fixed)
      if (pos == 0 || b > 1) throw InvalidArgument("overlay: bad position or bit");
    return BitStream(std::make_shared<detail::OverlaySource>(base.source_, std::move(fixed)));
  }

  static BitStream from_source(std::shared_ptr<BitSource> source) { return BitStream(std::move(source)); }

  static std::vector<Bit> parse_bits(std::string_view text) {
    std::vector<Bit> bits;
    bits.reserve(text.size());
    for (char c : text) {
      if (c == '0') bits.push_back(0);
      else if (c == '1') bits.push_back(1);
      else throw InvalidArgument(std::string("bit strings may only contain '0' and '1', got '") + c + "'");
    }
    return bits;
  }

  Bit at(const Index& i) {
    Bit b = source_->read(i);
    if (i.is_small()) cursor_->high_water = std::max(cursor_->high_water, i.value());
    return b;
  }

  Bit at(std::uint64_t i) { return at(Index(i)); }

  bool supports_keys() const { return source_->supports_keys(); }

  Bit at_key(const IndexKey& key) {
    Bit b = source_->read_key(key);
    if (key.is_small()) cursor_->high_water = std::max(cursor_->high_water, key.value);
    return b;
  }

  Bit next() {
    Bit b = at(cursor_->position + 1);
    ++cursor_->position;
    return b;
  }

  // Sequential cursor: the last position handed out by next().
  std::uint64_t position() const { return cursor_->position; }

  // Highest position read so far through this handle.
  std::uint64_t consumed() const { return cursor_->high_water; }

  BitStream fork() const { return BitStream(source_); }

  std::string prefix(std::uint64_t n) {
    std::string s;
    for (std::uint64_t i = 1; i <= n; ++i) s.push_back(at(i) ? '1' : '0');
    return s;
  }

 private:
  struct Cursor {
    std::uint64_t position = 0;
    std::uint64_t high_water = 0;
  };

  explicit BitStream(std::shared_ptr<BitSource> source)
      : source_(std::move(source)), cursor_(std::make_shared<Cursor>()) {}

  std::shared_ptr<BitSource> source_;
  std::shared_ptr<Cursor> cursor_;
};

// h(X)_{ij} = X_{pair(i,j)}
class GridStream {
 public:
  explicit GridStream(BitStream base) : base_(std::move(base)) {}

  Bit at(const Index& i, const Index& j) { return base_.at(pair(i, j)); }

  BitStream row(const Index& i) const {
    BitStream base = base_.fork();
    return BitStream::from_function([base, i](const Index& j) mutable { return base.at(pair(i, j)); });
  }

  BitStream& base() { return base_; }

 private:
  BitStream base_;
};

inline GridStream split_grid(BitStream base) { return GridStream(std::move(base)); }

}  // namespace thicken
