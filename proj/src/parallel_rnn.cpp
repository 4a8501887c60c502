#include "clrnn/parallel_rnn.hpp"

#include <cmath>

#include "clrnn/kernels.hpp"
#include "clrnn/layers.hpp"
#include "clrnn/parallel.hpp"
#include "internal.hpp"

namespace clrnn {

RNNCellParams rnncell_init(int in_dim, int hidden, Rng& rng) {
  RNNCellParams p;
  p.w_ih = init_weight({static_cast<std::size_t>(in_dim),
                        static_cast<std::size_t>(hidden)},
                       in_dim, rng);
  p.w_hh = init_weight({static_cast<std::size_t>(hidden),
                        static_cast<std::size_t>(hidden)},
                       hidden, rng);
  p.b_ih = Tensor::zeros({static_cast<std::size_t>(hidden)}, true);
  p.b_hh = Tensor::zeros({static_cast<std::size_t>(hidden)}, true);
  return p;
}

RNNCellParams rnncell_zeros(int in_dim, int hidden) {
  RNNCellParams p;
  p.w_ih = Tensor::zeros({static_cast<std::size_t>(in_dim),
                          static_cast<std::size_t>(hidden)});
  p.w_hh = Tensor::zeros({static_cast<std::size_t>(hidden),
                          static_cast<std::size_t>(hidden)});
  p.b_ih = Tensor::zeros({static_cast<std::size_t>(hidden)});
  p.b_hh = Tensor::zeros({static_cast<std::size_t>(hidden)});
  return p;
}

namespace {

// o = [tanh](xW_ih + b_ih + hW_hh + b_hh), fused into a single node. x and
// h are read as flat rows over their last axis, so 2-D and 3-D layouts work
// without copies; the output takes h's shape. One output tensor instead of
// a chain of intermediates is what lets the whole-sequence form beat the
// per-step loop on memory traffic.
Tensor cell_affine(Tape& tape, const Tensor& x, const Tensor& h,
                   const RNNCellParams& p, bool apply_tanh) {
  const std::size_t e = x.shape().back();
  const std::size_t hid = h.shape().back();
  const std::size_t rows = x.numel() / e;
  if (h.numel() / hid != rows || p.w_ih.dim(0) != e || p.w_ih.dim(1) != hid ||
      p.w_hh.dim(0) != hid || p.w_hh.dim(1) != hid || p.b_ih.dim(0) != hid ||
      p.b_hh.dim(0) != hid) {
    throw DimensionError("rnn cell: x " + shape_str(x.shape()) + ", h " +
                         shape_str(h.shape()) + " do not match W_ih " +
                         shape_str(p.w_ih.shape()) + ", W_hh " +
                         shape_str(p.w_hh.shape()));
  }
  const bool rg = x.requires_grad() || h.requires_grad() ||
                  p.w_ih.requires_grad() || p.w_hh.requires_grad() ||
                  p.b_ih.requires_grad() || p.b_hh.requires_grad();
  Tensor out = detail::make_uninit_tensor(h.shape(), rg);
  {
    std::vector<double> bias(hid);
    kernels::active().add(bias.data(), p.b_ih.values().data(),
                          p.b_hh.values().data(), hid);
    const double* xp = x.st->v.data();
    const double* hp = h.st->v.data();
    const double* wih = p.w_ih.st->v.data();
    const double* whh = p.w_hh.st->v.data();
    double* op = out.st->v.data();
    const auto& ops = kernels::active();
    // Whole pipeline per row block (bias, both products, tanh) so the block
    // stays cache-resident instead of streaming the full tensor four times.
    // ~256 KB of output rows per block.
    const std::size_t block = std::max<std::size_t>(16, 32768 / hid);
    parallel_for_blocks(rows, block, [&](std::size_t r0, std::size_t r1) {
      double* oc = op + r0 * hid;
      for (std::size_t r = r0; r < r1; ++r) {
        std::copy(bias.begin(), bias.end(), op + r * hid);
      }
      ops.matmul_nn(oc, xp + r0 * e, wih, r1 - r0, e, hid, true);
      ops.matmul_nn(oc, hp + r0 * hid, whh, r1 - r0, hid, hid, true);
      if (apply_tanh) {
        for (std::size_t i = r0 * hid; i < r1 * hid; ++i) {
          op[i] = std::tanh(op[i]);
        }
      }
    });
  }
  CLRNN_CHECK_FINITE(*out.st, "rnn cell");

  if (tape.recording() && rg) {
    auto xs = x.st, hs = h.st, os = out.st;
    auto wih = p.w_ih.st, whh = p.w_hh.st, bih = p.b_ih.st, bhh = p.b_hh.st;
    tape.record(os, [xs, hs, os, wih, whh, bih, bhh, rows, e, hid,
                     apply_tanh] {
      if (os->g.empty()) return;
      // gradient at the pre-activation
      std::vector<double> dpre;
      const double* g = os->g.data();
      if (apply_tanh) {
        dpre.resize(os->g.size());
        const double* y = os->v.data();
        for (std::size_t i = 0; i < dpre.size(); ++i) {
          dpre[i] = g[i] * (1.0 - y[i] * y[i]);
        }
        g = dpre.data();
      }
      if (xs->requires_grad) {
        if (xs->g.empty()) xs->g.assign(xs->v.size(), 0.0);
        const auto wt = detail::transposed(wih->v.data(), e, hid);  // [H,E]
        detail::matmul_nn_threaded(xs->g.data(), g, wt.data(), rows, hid, e,
                                   true);
      }
      if (hs->requires_grad) {
        if (hs->g.empty()) hs->g.assign(hs->v.size(), 0.0);
        const auto wt = detail::transposed(whh->v.data(), hid, hid);
        detail::matmul_nn_threaded(hs->g.data(), g, wt.data(), rows, hid, hid,
                                   true);
      }
      if (wih->requires_grad) {
        if (wih->g.empty()) wih->g.assign(wih->v.size(), 0.0);
        const auto xt = detail::transposed(xs->v.data(), rows, e);  // [E,R]
        detail::matmul_nn_threaded(wih->g.data(), xt.data(), g, e, rows, hid,
                                   true);
      }
      if (whh->requires_grad) {
        if (whh->g.empty()) whh->g.assign(whh->v.size(), 0.0);
        const auto ht = detail::transposed(hs->v.data(), rows, hid);
        detail::matmul_nn_threaded(whh->g.data(), ht.data(), g, hid, rows,
                                   hid, true);
      }
      for (auto* bias : {bih.get(), bhh.get()}) {
        if (!bias->requires_grad) continue;
        if (bias->g.empty()) bias->g.assign(bias->v.size(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          kernels::active().axpy(bias->g.data(), 1.0, g + r * hid, hid);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor rnncell_step(Tape& tape, const Tensor& x, const Tensor& h,
                    const RNNCellParams& p) {
  const bool vector_in = x.ndim() == 1;
  if (x.ndim() > 2 || h.ndim() > 2 || (x.ndim() == 1) != (h.ndim() == 1)) {
    throw DimensionError("rnncell_step: x " + shape_str(x.shape()) + " and h " +
                         shape_str(h.shape()) + " must both be [E]/[H] or "
                         "[rows, E]/[rows, H]");
  }
  Tensor xr = vector_in ? reshape(tape, x, {1, x.dim(0)}) : x;
  Tensor hr = vector_in ? reshape(tape, h, {1, h.dim(0)}) : h;
  if (xr.dim(0) != hr.dim(0)) {
    throw DimensionError("rnncell_step: row mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(h.shape()));
  }
  Tensor o = cell_affine(tape, xr, hr, p, /*apply_tanh=*/true);
  return vector_in ? reshape(tape, o, {o.dim(1)}) : o;
}

namespace {

void check_paired_sequences(const Tensor& x, const Tensor& h) {
  if (x.ndim() != h.ndim() || x.ndim() < 2 || x.ndim() > 3) {
    throw ContractError("parallel rnn: x " + shape_str(x.shape()) + " and h " +
                        shape_str(h.shape()) +
                        " must both be [n,*] or [batch,n,*]");
  }
  const bool batched = x.ndim() == 3;
  const std::size_t nx = batched ? x.dim(1) : x.dim(0);
  const std::size_t nh = batched ? h.dim(1) : h.dim(0);
  if (nx != nh || (batched && x.dim(0) != h.dim(0))) {
    throw ContractError("parallel rnn: time extent mismatch " +
                        shape_str(x.shape()) + " vs " + shape_str(h.shape()));
  }
}

}  // namespace

Tensor parallel_rnn_preactivation(Tape& tape, const Tensor& x, const Tensor& h,
                                  const RNNCellParams& p) {
  check_paired_sequences(x, h);
  return cell_affine(tape, x, h, p, /*apply_tanh=*/false);
}

Tensor parallel_rnn_forward(Tape& tape, const Tensor& x, const Tensor& h,
                            const RNNCellParams& p) {
  check_paired_sequences(x, h);
  return cell_affine(tape, x, h, p, /*apply_tanh=*/true);
}

Tensor serial_recurrent_forward(Tape& tape, const Tensor& x, const Tensor& h0,
                                const RNNCellParams& p) {
  const bool batched = x.ndim() == 3;
  if (!batched && x.ndim() != 2) {
    throw DimensionError("serial_recurrent_forward: input must be [n,E] or "
                         "[batch,n,E], got " + shape_str(x.shape()));
  }
  Tensor x3 = batched ? x : reshape(tape, x, {1, x.dim(0), x.dim(1)});
  Tensor h = h0.ndim() == 1 ? reshape(tape, h0, {1, h0.dim(0)}) : h0;
  const std::size_t b = x3.dim(0), n = x3.dim(1), e = x3.dim(2);
  if (h.ndim() != 2 || h.dim(0) != b) {
    throw DimensionError("serial_recurrent_forward: h0 shape " +
                         shape_str(h0.shape()) + " for batch " +
                         std::to_string(b));
  }
  std::vector<Tensor> outputs;
  outputs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    Tensor xt = reshape(tape, slice_time(tape, x3, t, t + 1), {b, e});
    h = rnncell_step(tape, xt, h, p);
    outputs.push_back(h);
  }
  Tensor o = stack_time(tape, outputs);
  return batched ? o : reshape(tape, o, {n, o.dim(2)});
}

}  // namespace clrnn
