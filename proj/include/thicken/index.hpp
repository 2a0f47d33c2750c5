#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "thicken/errors.hpp"

namespace thicken {

namespace detail {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline std::uint64_t isqrt(unsigned __int128 n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<long double>(n)));
  while (static_cast<unsigned __int128>(r) * r > n) --r;
  while (static_cast<unsigned __int128>(r + 1) * (r + 1) <= n) ++r;
  return r;
}

}  // namespace detail

// Cantor diagonal order: (1,1),(1,2),(2,1),(1,3),(2,2),(3,1),...
inline std::uint64_t pair_index(std::uint64_t i, std::uint64_t j) {
  if (i == 0 || j == 0) throw InvalidArgument("pair_index: indices start at 1");
  unsigned __int128 d = static_cast<unsigned __int128>(i) + j;
  unsigned __int128 v = (d - 1) * (d - 2) / 2 + i;
  if (v > UINT64_MAX) throw InvalidArgument("pair_index: result exceeds 64 bits");
  return static_cast<std::uint64_t>(v);
}

inline std::pair<std::uint64_t, std::uint64_t> unpair(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("unpair: indices start at 1");
  // largest s with s(s+1)/2 <= n-1
  unsigned __int128 m = static_cast<unsigned __int128>(n - 1) * 8 + 1;
  std::uint64_t s = (detail::isqrt(m) - 1) / 2;
  unsigned __int128 t = static_cast<unsigned __int128>(s) * (s + 1) / 2;
  std::uint64_t i = n - static_cast<std::uint64_t>(t);
  std::uint64_t j = s + 2 - i;
  return {i, j};
}

// 0,1,-1,2,-2,... -> 1,2,3,4,5,...
inline std::uint64_t z_to_n(std::int64_t i) {
  return i > 0 ? 2 * static_cast<std::uint64_t>(i) : 1 + 2 * static_cast<std::uint64_t>(-i);
}

inline std::int64_t n_to_z(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("n_to_z: indices start at 1");
  return n % 2 == 0 ? static_cast<std::int64_t>(n / 2) : -static_cast<std::int64_t>((n - 1) / 2);
}

// Hash, code length and (when it fits) the value of an index, computable for a
// pairing without building the symbolic node.
struct IndexKey {
  std::uint64_t hash;
  std::uint64_t value;  // 0 when the index is symbolic
  unsigned code_length;

  bool is_small() const { return value != 0; }
};

// A positive integer, kept symbolic once it no longer fits comfortably in 64 bits.
// Large values are stored as their Cantor decomposition, which is unique, so equal
// numbers always share a representation (and therefore a hash).
class Index {
 public:
  static constexpr std::uint64_t kSmallLimit = std::uint64_t{1} << 62;

  Index(std::uint64_t value) : small_(value) {
    if (value == 0) throw InvalidArgument("Index: indices start at 1");
    if (value >= kSmallLimit) {
      auto [a, b] = thicken::unpair(value);
      *this = pair(Index(a), Index(b));
      return;
    }
    hash_ = small_hash(value);
    code_length_ = small_code_length(value);
  }

  static Index pair(const Index& a, const Index& b);
  std::pair<Index, Index> unpair() const;

  IndexKey key() const { return {hash_, node_ ? 0 : small_, code_length_}; }

  static IndexKey small_key(std::uint64_t value) {
    if (value == 0 || value >= kSmallLimit) return Index(value).key();
    return {small_hash(value), value, small_code_length(value)};
  }

  static IndexKey pair_key(const IndexKey& a, const IndexKey& b) {
    if (a.is_small() && b.is_small()) {
      unsigned __int128 d = static_cast<unsigned __int128>(a.value) + b.value;
      unsigned __int128 v = (d - 1) * (d - 2) / 2 + a.value;
      if (v < kSmallLimit) return small_key(static_cast<std::uint64_t>(v));
    }
    return {node_hash(a.hash, b.hash), 0, a.code_length + b.code_length};
  }

  bool is_small() const { return !node_; }

  std::uint64_t value() const {
    if (node_) throw InvalidArgument("Index: value does not fit in 64 bits");
    return small_;
  }

  std::uint64_t hash() const { return hash_; }

  // Additive prefix-code length: 2 for 1, 4 for 2, and len(a)+len(b) for pair(a,b).
  // The weights 2^-len sum to 3/8 over all positive integers.
  unsigned code_length() const { return code_length_; }

  std::string str() const;

  friend bool operator==(const Index& a, const Index& b);

 private:
  struct Node;

  Index() = default;

  Index(std::uint64_t value, unsigned code_length) : small_(value), hash_(small_hash(value)), code_length_(code_length) {}

  static std::uint64_t small_hash(std::uint64_t value) { return detail::mix64(value ^ 0x5851f42d4c957f2dULL); }

  static std::uint64_t node_hash(std::uint64_t a, std::uint64_t b) {
    return detail::mix64(a * 0x9e3779b97f4a7c15ULL ^ detail::rotl(b, 29) ^ 0x2545f4914f6cdd1dULL);
  }

  static unsigned small_code_length(std::uint64_t v) {
    static const std::vector<unsigned> table = [] {
      std::vector<unsigned> t(1 << 16);
      for (std::uint64_t n = 1; n < t.size(); ++n) {
        if (n == 1) t[n] = 2;
        else if (n == 2) t[n] = 4;
        else {
          auto [a, b] = thicken::unpair(n);
          t[n] = t[a] + t[b];
        }
      }
      return t;
    }();
    if (v < table.size()) return table[v];
    auto [a, b] = thicken::unpair(v);
    return small_code_length(a) + small_code_length(b);
  }

  std::uint64_t small_ = 0;
  std::shared_ptr<const Node> node_;
  std::uint64_t hash_ = 0;
  unsigned code_length_ = 0;
};

struct Index::Node {
  Index first;
  Index second;
};

inline Index Index::pair(const Index& a, const Index& b) {
  if (a.is_small() && b.is_small()) {
    unsigned __int128 d = static_cast<unsigned __int128>(a.small_) + b.small_;
    unsigned __int128 v = (d - 1) * (d - 2) / 2 + a.small_;
    // pair(1,1) = 1 and pair(1,2) = 2 keep their own lengths, so length is a function of the value
    if (v < kSmallLimit) return Index(static_cast<std::uint64_t>(v), small_code_length(static_cast<std::uint64_t>(v)));
  }
  Index out;
  out.node_ = std::make_shared<const Node>(Node{a, b});
  out.hash_ = node_hash(a.hash_, b.hash_);
  out.code_length_ = a.code_length_ + b.code_length_;
  return out;
}

inline std::pair<Index, Index> Index::unpair() const {
  if (node_) return {node_->first, node_->second};
  auto [a, b] = thicken::unpair(small_);
  return {Index(a), Index(b)};
}

inline std::string Index::str() const {
  if (!node_) return std::to_string(small_);
  return "<" + node_->first.str() + "," + node_->second.str() + ">";
}

inline bool operator==(const Index& a, const Index& b) {
  if (a.hash_ != b.hash_ || a.is_small() != b.is_small()) return false;
  if (a.is_small()) return a.small_ == b.small_;
  if (a.node_ == b.node_) return true;
  return a.node_->first == b.node_->first && a.node_->second == b.node_->second;
}

inline Index pair(const Index& a, const Index& b) { return Index::pair(a, b); }

struct IndexHash {
  std::size_t operator()(const Index& i) const { return static_cast<std::size_t>(i.hash()); }
};

}  // namespace thicken
