#include "clrnn/adder.hpp"

#include <algorithm>
#include <sstream>

namespace clrnn {

BitWord::BitWord(int width, std::uint64_t value) : bits(width, 0) {
  for (int i = 0; i < width && i < 64; ++i) {
    bits[i] = static_cast<std::uint8_t>((value >> i) & 1u);
  }
}

std::uint64_t BitWord::to_u64() const {
  std::uint64_t v = 0;
  for (int i = 0; i < width() && i < 64; ++i) {
    v |= static_cast<std::uint64_t>(bits[i] & 1u) << i;
  }
  return v;
}

std::string BitWord::to_string() const {
  std::string s;
  for (int i = width() - 1; i >= 0; --i) s.push_back(bits[i] ? '1' : '0');
  return s;
}

namespace {

void check_widths(const BitWord& a, const BitWord& b, const char* what) {
  if (a.width() != b.width()) {
    throw WidthError(std::string(what) + ": width mismatch " +
                     std::to_string(a.width()) + " vs " +
                     std::to_string(b.width()));
  }
}

}  // namespace

FullAdderOut full_adder(std::uint8_t a, std::uint8_t b, std::uint8_t c_in) {
  const std::uint8_t sum = (a ^ b ^ c_in) & 1u;
  const std::uint8_t carry =
      static_cast<std::uint8_t>(((a & b) | (a & c_in) | (b & c_in)) & 1u);
  return {sum, carry};
}

AddResult ripple_add(const BitWord& a, const BitWord& b, std::uint8_t c0) {
  check_widths(a, b, "ripple_add");
  AddResult r;
  r.sum.bits.resize(a.width());
  std::uint8_t carry = c0 & 1u;
  for (int i = 0; i < a.width(); ++i) {
    const FullAdderOut fa = full_adder(a.bits[i], b.bits[i], carry);
    r.sum.bits[i] = fa.sum;
    carry = fa.carry;
  }
  r.carry_out = carry;
  return r;
}

GenPropagate cla_generate_propagate(const BitWord& a, const BitWord& b) {
  check_widths(a, b, "cla_generate_propagate");
  GenPropagate gp;
  gp.generate.bits.resize(a.width());
  gp.propagate.bits.resize(a.width());
  for (int i = 0; i < a.width(); ++i) {
    gp.generate.bits[i] = a.bits[i] & b.bits[i];
    gp.propagate.bits[i] = (a.bits[i] | b.bits[i]) & 1u;
  }
  return gp;
}

std::vector<std::uint8_t> cla_carries(const BitWord& g, const BitWord& p,
                                      std::uint8_t c0) {
  check_widths(g, p, "cla_carries");
  const int w = g.width();
  std::vector<std::uint8_t> carries(w, 0);
  // C_{i+1} = G_i + P_i G_{i-1} + ... + P_i ... P_0 C_0, each term expanded
  // from scratch; no carry feeds another.
  for (int i = 0; i < w; ++i) {
    std::uint8_t c = 0;
    for (int j = i; j >= 0; --j) {
      std::uint8_t term = g.bits[j];
      for (int t = j + 1; t <= i; ++t) term &= p.bits[t];
      c |= term;
    }
    std::uint8_t thread = c0 & 1u;
    for (int t = 0; t <= i; ++t) thread &= p.bits[t];
    c |= thread;
    carries[i] = c & 1u;
  }
  return carries;
}

AddResult cla_add(const BitWord& a, const BitWord& b, std::uint8_t c0) {
  check_widths(a, b, "cla_add");
  const int w = a.width();
  AddResult r;
  r.sum.bits.resize(w);
  std::uint8_t group_c0 = c0 & 1u;
  for (int base = 0; base < w; base += 4) {
    const int gw = std::min(4, w - base);
    BitWord ga, gb;
    ga.bits.assign(a.bits.begin() + base, a.bits.begin() + base + gw);
    gb.bits.assign(b.bits.begin() + base, b.bits.begin() + base + gw);
    const GenPropagate gp = cla_generate_propagate(ga, gb);
    const auto carries = cla_carries(gp.generate, gp.propagate, group_c0);
    for (int i = 0; i < gw; ++i) {
      const std::uint8_t c_in = i == 0 ? group_c0 : carries[i - 1];
      r.sum.bits[base + i] = (ga.bits[i] ^ gb.bits[i] ^ c_in) & 1u;
    }
    group_c0 = carries[gw - 1];
  }
  r.carry_out = group_c0;
  return r;
}

std::string cla_trace(const BitWord& a, const BitWord& b, std::uint8_t c0) {
  check_widths(a, b, "cla_trace");
  const GenPropagate gp = cla_generate_propagate(a, b);
  const AddResult sum = cla_add(a, b, c0);
  // Carries in the trace come from the cascaded groups, matching the sum.
  std::vector<std::uint8_t> carries(a.width() + 1, 0);
  carries[0] = c0 & 1u;
  std::uint8_t group_c0 = c0 & 1u;
  for (int base = 0; base < a.width(); base += 4) {
    const int gw = std::min(4, a.width() - base);
    BitWord gg, pg;
    gg.bits.assign(gp.generate.bits.begin() + base,
                   gp.generate.bits.begin() + base + gw);
    pg.bits.assign(gp.propagate.bits.begin() + base,
                   gp.propagate.bits.begin() + base + gw);
    const auto c = cla_carries(gg, pg, group_c0);
    for (int i = 0; i < gw; ++i) carries[base + i + 1] = c[i];
    group_c0 = c[gw - 1];
  }
  std::ostringstream os;
  os << "bit  A B  G P  C_in S\n";
  for (int i = 0; i < a.width(); ++i) {
    os << i << "    " << int(a.bits[i]) << " " << int(b.bits[i]) << "  "
       << int(gp.generate.bits[i]) << " " << int(gp.propagate.bits[i]) << "  "
       << int(carries[i]) << "    " << int(sum.sum.bits[i]) << "\n";
  }
  os << "carry out: " << int(sum.carry_out) << "\n";
  if (a.width() < 64) {
    os << a.to_u64() << " + " << b.to_u64() << " + " << int(c0 & 1u) << " = "
       << (sum.sum.to_u64() |
           (static_cast<std::uint64_t>(sum.carry_out) << a.width()))
       << "\n";
  }
  return os.str();
}

}  // namespace clrnn
