#pragma once

// Neural building blocks: embedding, linear, dilated causal 1-D convolution
// and the receptive field formula. Dropout lives with the tensor ops.

#include <cstdint>
#include <span>

#include "clrnn/tensor.hpp"

namespace clrnn {

struct VocabularyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CausalConvSpec {
  int kernel_size = 1;
  int dilation = 1;
  int in_channels = 1;
  int out_channels = 1;

  // Zero left padding that keeps output length == input length while the
  // output at time t sees only inputs at times <= t.
  int left_padding() const { return (kernel_size - 1) * dilation; }

  void validate() const;
};

// tokens -> rows of table [V, E]; the table is trainable, backward
// scatter-adds gradient rows.
Tensor embedding_forward(Tape& tape, const Tensor& table,
                         std::span<const std::int64_t> tokens);

// x[n, i] * w[i, o] + b[o]
Tensor linear_forward(Tape& tape, const Tensor& x, const Tensor& w,
                      const Tensor& b);

// x: [batch, n, c_in] or [n, c_in]; w: [k, c_in, c_out]; b: [c_out] or
// undefined for no bias. Output matches x's layout with c_out channels.
// fuse_relu applies relu inside the same node, and shift_down emits the
// result one step later in time (row 0 zero, row n-1 dropped); both save an
// intermediate tensor on the hot path.
Tensor causal_conv1d(Tape& tape, const Tensor& x, const CausalConvSpec& spec,
                     const Tensor& w, const Tensor& b, bool fuse_relu = false,
                     bool shift_down = false);

// Span of input positions visible to one output of an l-layer stack with
// kernel size k and dilation m^i at layer i: (k-1)/(m-1) * (m^l - 1) + 1.
// m == 1 is rejected (the formula is singular there).
long receptive_field(int layers, int kernel_size, int dilation_multiple);

// Weight init used across the model: uniform +-1/sqrt(fan_in), zero bias.
Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace clrnn
