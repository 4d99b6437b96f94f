#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fcmir {

/// Fixed-length bit vector packed into 64-bit words. Bit i lives in
/// word i/64 at position i%64.
struct BitString {
  std::vector<std::uint64_t> words;
  std::uint32_t nbits = 0;

  static BitString zeros(std::uint32_t n) {
    BitString b;
    b.nbits = n;
    b.words.assign((n + 63) / 64, 0);
    return b;
  }

  bool bit(std::uint32_t i) const { return (words[i / 64] >> (i % 64)) & 1u; }

  void set_bit(std::uint32_t i, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    if (v)
      words[i / 64] |= mask;
    else
      words[i / 64] &= ~mask;
  }

  friend bool operator==(const BitString&, const BitString&) = default;
};

/// Count of differing bit positions. Lengths must match.
inline int hamming_distance(const BitString& a, const BitString& b) {
  if (a.nbits != b.nbits) throw std::invalid_argument("hamming_distance: bit length mismatch");
  int d = 0;
  for (std::size_t i = 0; i < a.words.size(); ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

}  // namespace fcmir
