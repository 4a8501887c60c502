#pragma once

// Bit-exact ripple-carry and carry-lookahead adders. The lookahead carries
// are computed by the fully expanded sum-of-products over generate/propagate
// terms, never by chaining the previous carry, which is the parallelism the
// network analogy borrows.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace clrnn {

struct BitWord {
  std::vector<std::uint8_t> bits;  // index 0 = least significant

  BitWord() = default;
  BitWord(int width, std::uint64_t value);

  int width() const { return static_cast<int>(bits.size()); }
  std::uint64_t to_u64() const;  // width <= 64
  std::string to_string() const;  // msb first
};

struct WidthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FullAdderOut {
  std::uint8_t sum;
  std::uint8_t carry;
};

FullAdderOut full_adder(std::uint8_t a, std::uint8_t b, std::uint8_t c_in);

struct AddResult {
  BitWord sum;
  std::uint8_t carry_out;
};

// Full adders chained in series; each waits for the previous carry.
AddResult ripple_add(const BitWord& a, const BitWord& b, std::uint8_t c0);

struct GenPropagate {
  BitWord generate;   // G_i = A_i & B_i
  BitWord propagate;  // P_i = A_i | B_i
};

GenPropagate cla_generate_propagate(const BitWord& a, const BitWord& b);

// C_1..C_w; each C_{i+1} is an independent function of G_0..G_i, P_0..P_i
// and C_0 only.
std::vector<std::uint8_t> cla_carries(const BitWord& g, const BitWord& p,
                                      std::uint8_t c0);

// Single-level 4-bit lookahead groups; wider words cascade the group
// carry-out into the next group's c0.
AddResult cla_add(const BitWord& a, const BitWord& b, std::uint8_t c0);

// Carry-trace table (bit index, A, B, G, P, C) for the CLI demo.
std::string cla_trace(const BitWord& a, const BitWord& b, std::uint8_t c0);

}  // namespace clrnn
