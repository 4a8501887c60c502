#include "clrnn/layers.hpp"

#include <cmath>

#include "clrnn/kernels.hpp"
#include "clrnn/parallel.hpp"
#include "internal.hpp"

namespace clrnn {

void CausalConvSpec::validate() const {
  if (kernel_size < 1 || dilation < 1 || in_channels < 1 || out_channels < 1) {
    throw ContractError("causal conv spec fields must be positive");
  }
}

Tensor embedding_forward(Tape& tape, const Tensor& table,
                         std::span<const std::int64_t> tokens) {
  if (table.ndim() != 2) {
    throw DimensionError("embedding table must be [vocab, dim], got " +
                         shape_str(table.shape()));
  }
  const std::size_t vocab = table.dim(0), dim = table.dim(1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab) {
      throw VocabularyError("token " + std::to_string(tokens[i]) +
                            " outside vocabulary of size " +
                            std::to_string(vocab) + " at position " +
                            std::to_string(i));
    }
  }
  Tensor out =
      detail::make_uninit_tensor({tokens.size(), dim}, table.requires_grad());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double* row =
        table.st->v.data() + static_cast<std::size_t>(tokens[i]) * dim;
    std::copy(row, row + dim, out.st->v.data() + i * dim);
  }
  if (tape.recording() && out.requires_grad()) {
    auto ts = table.st, os = out.st;
    std::vector<std::int64_t> toks(tokens.begin(), tokens.end());
    tape.record(os, [ts, os, toks = std::move(toks), dim] {
      if (os->g.empty() || !ts->requires_grad) return;
      if (ts->g.empty()) ts->g.assign(ts->v.size(), 0.0);
      for (std::size_t i = 0; i < toks.size(); ++i) {
        kernels::active().axpy(
            ts->g.data() + static_cast<std::size_t>(toks[i]) * dim, 1.0,
            os->g.data() + i * dim, dim);
      }
    });
  }
  return out;
}

Tensor linear_forward(Tape& tape, const Tensor& x, const Tensor& w,
                      const Tensor& b) {
  return add_broadcast(tape, matmul(tape, x, w), b);
}

Tensor causal_conv1d(Tape& tape, const Tensor& x, const CausalConvSpec& spec,
                     const Tensor& w, const Tensor& b, bool fuse_relu,
                     bool shift_down) {
  spec.validate();
  const bool batched = x.ndim() == 3;
  if (!batched && x.ndim() != 2) {
    throw DimensionError("causal_conv1d input must be 2-D or 3-D, got " +
                         shape_str(x.shape()));
  }
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t n = batched ? x.dim(1) : x.dim(0);
  const std::size_t cin = batched ? x.dim(2) : x.dim(1);
  const std::size_t cout = static_cast<std::size_t>(spec.out_channels);
  const std::size_t k = static_cast<std::size_t>(spec.kernel_size);
  const std::size_t d = static_cast<std::size_t>(spec.dilation);
  if (n == 0) throw ContractError("causal_conv1d: empty sequence");
  if (cin != static_cast<std::size_t>(spec.in_channels)) {
    throw DimensionError("causal_conv1d: input has " + std::to_string(cin) +
                         " channels, spec expects " +
                         std::to_string(spec.in_channels));
  }
  if (w.ndim() != 3 || w.dim(0) != k || w.dim(1) != cin || w.dim(2) != cout) {
    throw DimensionError("causal_conv1d: weight shape " + shape_str(w.shape()) +
                         " does not match spec");
  }
  const bool has_bias = b.defined();
  if (has_bias && (b.ndim() != 1 || b.dim(0) != cout)) {
    throw DimensionError("causal_conv1d: bias shape " + shape_str(b.shape()));
  }

  Shape out_shape = batched ? Shape{batch, n, cout} : Shape{n, cout};
  const bool rg = x.requires_grad() || w.requires_grad() ||
                  (has_bias && b.requires_grad());
  Tensor out = detail::make_uninit_tensor(std::move(out_shape), rg);

  const auto& ops = kernels::active();
  const double* xp = x.st->v.data();
  const double* wp = w.st->v.data();
  const double* bp = has_bias ? b.st->v.data() : nullptr;
  double* op = out.st->v.data();
  // Tiny layers (few taps x channels) run inline: a parallel region costs
  // more than the whole convolution.
  const std::size_t grain = std::max<std::size_t>(
      1, 262144 / std::max<std::size_t>(1, k * cin * cout));
  if (!shift_down) {
    parallel_for(
        batch * n,
        [&](std::size_t r0, std::size_t r1) {
          ops.conv1d_causal(op, xp, wp, bp, batch, n, cin, cout, k, d, r0, r1);
          if (fuse_relu) {
            for (std::size_t i = r0 * cout; i < r1 * cout; ++i) {
              if (op[i] < 0.0) op[i] = 0.0;
            }
          }
        },
        grain);
  } else {
    // Row (b, t) of the result is the convolution at (b, t-1); row (b, 0)
    // is the zero initial state. The kernel writes one row down, clipped at
    // item boundaries.
    for (std::size_t bi = 0; bi < batch; ++bi) {
      std::fill(op + bi * n * cout, op + bi * n * cout + cout, 0.0);
    }
    parallel_for(
        batch * (n - 1),
        [&](std::size_t v0, std::size_t v1) {
          std::size_t v = v0;
          while (v < v1) {
            const std::size_t bi = v / (n - 1);
            const std::size_t t = v % (n - 1);
            const std::size_t run = std::min(v1 - v, (n - 1) - t);
            const std::size_t row = bi * n + t;
            ops.conv1d_causal(op + cout, xp, wp, bp, batch, n, cin, cout, k,
                              d, row, row + run);
            if (fuse_relu) {
              double* o = op + (row + 1) * cout;
              for (std::size_t i = 0; i < run * cout; ++i) {
                if (o[i] < 0.0) o[i] = 0.0;
              }
            }
            v += run;
          }
        },
        grain);
  }
  CLRNN_CHECK_FINITE(*out.st, "causal_conv1d");

  if (tape.recording() && rg) {
    auto xs = x.st, ws = w.st, os = out.st;
    auto bs = has_bias ? b.st : nullptr;
    tape.record(os, [xs, ws, bs, os, batch, n, cin, cout, k, d, fuse_relu,
                     shift_down] {
      if (os->g.empty()) return;
      // realign the incoming gradient to convolution positions: undo the
      // shift and mask where the fused relu clipped
      std::vector<double> masked;
      const double* g = os->g.data();
      if (fuse_relu || shift_down) {
        masked.assign(os->g.size(), 0.0);
        const double* y = os->v.data();
        const double* gg = os->g.data();
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const std::size_t last = shift_down ? n - 1 : n;
          for (std::size_t t = 0; t < last; ++t) {
            const std::size_t src = (bi * n + t + (shift_down ? 1 : 0)) * cout;
            const std::size_t dst = (bi * n + t) * cout;
            for (std::size_t c = 0; c < cout; ++c) {
              const bool live = !fuse_relu || y[src + c] > 0.0;
              masked[dst + c] = live ? gg[src + c] : 0.0;
            }
          }
        }
        g = masked.data();
      }
      // dW[q,ci,co] += sum over (b,t) x[b, t-(k-1-q)d, ci] * g[b,t,co]
      if (ws->requires_grad) {
        if (ws->g.empty()) ws->g.assign(ws->v.size(), 0.0);
        for (std::size_t bt = 0; bt < batch * n; ++bt) {
          const std::size_t bi = bt / n, t = bt % n;
          const double* grow = g + bt * cout;
          for (std::size_t q = 0; q < k; ++q) {
            const std::ptrdiff_t s =
                static_cast<std::ptrdiff_t>(t) -
                static_cast<std::ptrdiff_t>((k - 1 - q) * d);
            if (s < 0) continue;
            const double* xrow =
                xs->v.data() + (bi * n + static_cast<std::size_t>(s)) * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              kernels::active().axpy(ws->g.data() + (q * cin + ci) * cout,
                                     xrow[ci], grow, cout);
            }
          }
        }
      }
      // db[co] += sum over (b,t) g[b,t,co]
      if (bs && bs->requires_grad) {
        if (bs->g.empty()) bs->g.assign(bs->v.size(), 0.0);
        for (std::size_t bt = 0; bt < batch * n; ++bt) {
          kernels::active().axpy(bs->g.data(), 1.0, g + bt * cout, cout);
        }
      }
      // dx[b,s,ci] += sum over (q,co) w[q,ci,co] * g[b,t,co], s = t-(k-1-q)d
      if (xs->requires_grad) {
        if (xs->g.empty()) xs->g.assign(xs->v.size(), 0.0);
        // w transposed per tap to [co, ci] so the inner run is contiguous.
        std::vector<double> wt(k * cout * cin);
        for (std::size_t q = 0; q < k; ++q) {
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t co = 0; co < cout; ++co) {
              wt[(q * cout + co) * cin + ci] =
                  ws->v[(q * cin + ci) * cout + co];
            }
          }
        }
        for (std::size_t bt = 0; bt < batch * n; ++bt) {
          const std::size_t bi = bt / n, t = bt % n;
          const double* grow = g + bt * cout;
          for (std::size_t q = 0; q < k; ++q) {
            const std::ptrdiff_t s =
                static_cast<std::ptrdiff_t>(t) -
                static_cast<std::ptrdiff_t>((k - 1 - q) * d);
            if (s < 0) continue;
            double* dxrow =
                xs->g.data() + (bi * n + static_cast<std::size_t>(s)) * cin;
            for (std::size_t co = 0; co < cout; ++co) {
              kernels::active().axpy(dxrow, grow[co],
                                     wt.data() + (q * cout + co) * cin, cin);
            }
          }
        }
      }
    });
  }
  return out;
}

long receptive_field(int layers, int kernel_size, int dilation_multiple) {
  if (layers < 1) throw ContractError("receptive_field: layers must be >= 1");
  if (kernel_size < 2) {
    throw ContractError("receptive_field: kernel size must be >= 2");
  }
  if (dilation_multiple < 2) {
    throw ContractError(
        "receptive_field: dilation multiple must be >= 2 (the formula is "
        "singular at m = 1)");
  }
  long ml = 1;
  for (int i = 0; i < layers; ++i) ml *= dilation_multiple;
  // (m^l - 1) / (m - 1) is the geometric sum, always an integer.
  return (ml - 1) / (dilation_multiple - 1) *
             (static_cast<long>(kernel_size) - 1) +
         1;

}

Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

}  // namespace clrnn
