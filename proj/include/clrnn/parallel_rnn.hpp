#pragma once

// The RNN cell of o = tanh(x*W_ih + b_ih + h*W_hh + b_hh), applied three
// ways: one position at a time, to a whole sequence at once (every time row
// independent, which is what makes the model parallel), and as the classic
// step-by-step recurrence used as the timing baseline.

#include "clrnn/tensor.hpp"

namespace clrnn {

struct RNNCellParams {
  Tensor w_ih;  // [E, H]
  Tensor w_hh;  // [H, H]
  Tensor b_ih;  // [H]
  Tensor b_hh;  // [H]
};

RNNCellParams rnncell_init(int in_dim, int hidden, Rng& rng);
RNNCellParams rnncell_zeros(int in_dim, int hidden);

// x: [E] or [rows, E]; h: [H] or [rows, H] with matching rows.
Tensor rnncell_step(Tape& tape, const Tensor& x, const Tensor& h,
                    const RNNCellParams& p);

// x: [n, E] or [batch, n, E]; h must have the same time extent. Row t of
// the output equals rnncell_step(x_t, h_t) exactly.
Tensor parallel_rnn_forward(Tape& tape, const Tensor& x, const Tensor& h,
                            const RNNCellParams& p);

// The affine part before tanh; with identity weights and zero biases this
// is exactly x + h (the classic residual connection).
Tensor parallel_rnn_preactivation(Tape& tape, const Tensor& x, const Tensor& h,
                                  const RNNCellParams& p);

// Classic recurrence h_{t+1} = o_t = cell(x_t, h_t), h_0 given. x: [n, E]
// with h0 [H], or [batch, n, E] with h0 [batch, H].
Tensor serial_recurrent_forward(Tape& tape, const Tensor& x, const Tensor& h0,
                                const RNNCellParams& p);

}  // namespace clrnn
