#include "clrnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "clrnn/kernels.hpp"
#include "clrnn/parallel.hpp"
#include "internal.hpp"

namespace clrnn {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

Tensor make_tensor(Shape shape, bool requires_grad) {
  Tensor t;
  t.st = std::make_shared<TensorStorage>();
  t.st->shape = std::move(shape);
  t.st->v.assign(shape_numel(t.st->shape), 0.0);
  t.st->requires_grad = requires_grad;
  return t;
}

bool grad_ready(const TensorStorage& s) { return !s.g.empty(); }

void accumulate(TensorStorage& s, std::span<const double> delta) {
  if (s.g.empty()) s.g.assign(s.v.size(), 0.0);
  kernels::active().axpy(s.g.data(), 1.0, delta.data(), delta.size());
}

using detail::matmul_nn_threaded;
using detail::transposed;

}  // namespace

namespace detail {

void matmul_nn_threaded(double* c, const double* a, const double* b,
                        std::size_t m, std::size_t k, std::size_t n,
                        bool acc) {
  const auto& ops = kernels::active();
  const std::size_t flops_per_row = std::max<std::size_t>(1, k * n);
  const std::size_t grain = std::max<std::size_t>(1, 32768 / flops_per_row);
  parallel_for(
      m,
      [&](std::size_t r0, std::size_t r1) {
        ops.matmul_nn(c + r0 * n, a + r0 * k, b, r1 - r0, k, n, acc);
      },
      grain);
}

Tensor make_uninit_tensor(Shape shape, bool requires_grad) {
  Tensor t;
  t.st = std::make_shared<TensorStorage>();
  const std::size_t n = shape_numel(shape);
  t.st->shape = std::move(shape);
  t.st->v.resize(n);  // no zero fill; caller overwrites every element
  t.st->requires_grad = requires_grad;
  return t;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return make_tensor(std::move(shape), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = make_tensor(std::move(shape), requires_grad);
  std::fill(t.st->v.begin(), t.st->v.end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
  }
  Tensor t;
  t.st = std::make_shared<TensorStorage>();
  t.st->shape = std::move(shape);
  t.st->v.assign(values.begin(), values.end());
  t.st->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  Tensor t = detail::make_uninit_tensor(std::move(shape), requires_grad);
  for (double& x : t.st->v) x = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (!st || st->v.size() != 1) {
    throw ContractError("item() requires a scalar tensor, got " +
                        (st ? shape_str(st->shape) : std::string("null")));
  }
  return st->v[0];
}

void Tensor::ensure_grad() {
  if (st->g.empty()) st->g.assign(st->v.size(), 0.0);
}

void Tensor::zero_grad() {
  std::fill(st->g.begin(), st->g.end(), 0.0);
}

void Tape::record(std::shared_ptr<TensorStorage> out,
                  std::function<void()> fn) {
  if (recording_) nodes_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape())
                                        : std::string("null")));
  }
  // Intermediate grads are per-traversal scratch; leaves keep accumulating.
  for (auto& node : nodes_) {
    if (!node.out->g.empty()) {
      std::fill(node.out->g.begin(), node.out->g.end(), 0.0);
    }
  }
  if (loss.st->g.empty()) loss.st->g.assign(1, 0.0);
  loss.st->g[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->fn();
  }
#ifndef NDEBUG
  for (auto& node : nodes_) {
    for (double g : node.out->g) {
      if (!std::isfinite(g)) {
        throw ContractError("non-finite gradient after backward");
      }
    }
  }
#endif
}

// ---- matmul ---------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = detail::make_uninit_tensor(
      {m, n}, a.requires_grad() || b.requires_grad());
  matmul_nn_threaded(out.st->v.data(), a.st->v.data(), b.st->v.data(), m, k, n,
                  false);
  CLRNN_CHECK_FINITE(*out.st, "matmul");
  if (tape.recording() && out.requires_grad()) {
    auto as = a.st, bs = b.st, os = out.st;
    tape.record(os, [as, bs, os, m, k, n] {
      if (!grad_ready(*os)) return;
      const double* g = os->g.data();
      if (as->requires_grad) {
        // dA += G * B^T
        as->g.resize(as->v.size(), 0.0);
        const auto bt = transposed(bs->v.data(), k, n);  // [n,k]
        matmul_nn_threaded(as->g.data(), g, bt.data(), m, n, k, true);
      }
      if (bs->requires_grad) {
        // dB += A^T * G
        bs->g.resize(bs->v.size(), 0.0);
        const auto at = transposed(as->v.data(), m, k);  // [k,m]
        matmul_nn_threaded(bs->g.data(), at.data(), g, k, m, n, true);
      }
    });
  }
  return out;
}

// ---- add_broadcast ----------------------------------------------------------

Tensor add_broadcast(Tape& tape, const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw DimensionError("add_broadcast: " + shape_str(bs) +
                         " is not a suffix of " + shape_str(as));
  }
  const std::size_t bn = b.numel();
  const std::size_t lead = a.numel() / std::max<std::size_t>(1, bn);
  Tensor out =
      detail::make_uninit_tensor(as, a.requires_grad() || b.requires_grad());
  const auto& ops = kernels::active();
  parallel_for(
      lead,
      [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
          ops.add(out.st->v.data() + i * bn, a.st->v.data() + i * bn,
                  b.st->v.data(), bn);
        }
      },
      std::max<std::size_t>(1, 4096 / std::max<std::size_t>(1, bn)));
  CLRNN_CHECK_FINITE(*out.st, "add_broadcast");
  if (tape.recording() && out.requires_grad()) {
    auto ast = a.st, bst = b.st, ost = out.st;
    tape.record(ost, [ast, bst, ost, lead, bn] {
      if (!grad_ready(*ost)) return;
      if (ast->requires_grad) accumulate(*ast, ost->g);
      if (bst->requires_grad) {
        if (bst->g.empty()) bst->g.assign(bst->v.size(), 0.0);
        for (std::size_t i = 0; i < lead; ++i) {
          kernels::active().axpy(bst->g.data(), 1.0, ost->g.data() + i * bn,
                                 bn);
        }
      }
    });
  }
  return out;
}

// ---- elementwise ------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(Tape& tape, const Tensor& a, [[maybe_unused]] const char* name,
                Fwd fwd, Bwd bwd) {
  Tensor out = detail::make_uninit_tensor(a.shape(), a.requires_grad());
  const double* x = a.st->v.data();
  double* y = out.st->v.data();
  parallel_for(
      a.numel(),
      [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) y[i] = fwd(x[i]);
      },
      8192);
  CLRNN_CHECK_FINITE(*out.st, name);
  if (tape.recording() && out.requires_grad()) {
    auto ast = a.st, ost = out.st;
    tape.record(ost, [ast, ost, bwd] {
      if (!grad_ready(*ost)) return;
      if (!ast->requires_grad) return;
      if (ast->g.empty()) ast->g.assign(ast->v.size(), 0.0);
      double* dx = ast->g.data();
      const double* dy = ost->g.data();
      const double* xv = ast->v.data();
      const double* yv = ost->v.data();
      parallel_for(
          ast->v.size(),
          [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
              dx[i] += dy[i] * bwd(xv[i], yv[i]);
            }
          },
          8192);
    });
  }
  return out;
}

}  // namespace

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---- log_softmax ------------------------------------------------------------

Tensor log_softmax(Tape& tape, const Tensor& a) {
  if (a.ndim() < 1 || a.shape().back() < 1) {
    throw DimensionError("log_softmax needs a non-empty last axis, got " +
                         shape_str(a.shape()));
  }
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  Tensor out = detail::make_uninit_tensor(a.shape(), a.requires_grad());
  const double* x = a.st->v.data();
  double* y = out.st->v.data();
  parallel_for(
      rows,
      [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
          const double* xr = x + r * c;
          double* yr = y + r * c;
          double mx = xr[0];
          for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
          double se = 0.0;
          for (std::size_t j = 0; j < c; ++j) se += std::exp(xr[j] - mx);
          const double lse = std::log(se);
          for (std::size_t j = 0; j < c; ++j) yr[j] = xr[j] - mx - lse;
        }
      },
      std::max<std::size_t>(1, 2048 / c));
  CLRNN_CHECK_FINITE(*out.st, "log_softmax");
  if (tape.recording() && out.requires_grad()) {
    auto ast = a.st, ost = out.st;
    tape.record(ost, [ast, ost, rows, c] {
      if (!grad_ready(*ost) || !ast->requires_grad) return;
      if (ast->g.empty()) ast->g.assign(ast->v.size(), 0.0);
      double* dx = ast->g.data();
      const double* dy = ost->g.data();
      const double* yv = ost->v.data();
      parallel_for(
          rows,
          [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
              const double* dyr = dy + r * c;
              const double* yr = yv + r * c;
              double gsum = 0.0;
              for (std::size_t j = 0; j < c; ++j) gsum += dyr[j];
              double* dxr = dx + r * c;
              for (std::size_t j = 0; j < c; ++j) {
                dxr[j] += dyr[j] - std::exp(yr[j]) * gsum;
              }
            }
          },
          std::max<std::size_t>(1, 2048 / c));
    });
  }
  return out;
}

// ---- cross_entropy ----------------------------------------------------------

Tensor cross_entropy(Tape& tape, const Tensor& log_probs,
                     std::span<const std::int64_t> targets,
                     std::span<const std::uint8_t> mask) {
  if (log_probs.ndim() != 2) {
    throw DimensionError("cross_entropy expects [rows, classes], got " +
                         shape_str(log_probs.shape()));
  }
  const std::size_t n = log_probs.dim(0), c = log_probs.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
  }
  if (!mask.empty() && mask.size() != n) {
    throw DimensionError("cross_entropy: mask size mismatch");
  }
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const std::int64_t t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw IndexError("cross_entropy: target " + std::to_string(t) +
                       " out of range [0," + std::to_string(c) + ") at row " +
                       std::to_string(i));
    }
    total -= log_probs.at(i * c + static_cast<std::size_t>(t));
    ++count;
  }
  if (count == 0) throw ContractError("cross_entropy: every row is masked");
  Tensor out = Tensor::from({1}, {total / static_cast<double>(count)},
                            log_probs.requires_grad());
  if (tape.recording() && out.requires_grad()) {
    auto lps = log_probs.st, ost = out.st;
    std::vector<std::int64_t> tgt(targets.begin(), targets.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    tape.record(ost, [lps, ost, tgt = std::move(tgt), msk = std::move(msk), n,
                      c, count] {
      if (!grad_ready(*ost) || !lps->requires_grad) return;
      if (lps->g.empty()) lps->g.assign(lps->v.size(), 0.0);
      const double scale = ost->g[0] / static_cast<double>(count);
      for (std::size_t i = 0; i < n; ++i) {
        if (!msk.empty() && !msk[i]) continue;
        lps->g[i * c + static_cast<std::size_t>(tgt[i])] -= scale;
      }
    });
  }
  return out;
}

// ---- sum ---------------------------------------------------------------------

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double x : a.st->v) total += x;
  Tensor out = Tensor::from({1}, {total}, a.requires_grad());
  if (tape.recording() && out.requires_grad()) {
    auto ast = a.st, ost = out.st;
    tape.record(ost, [ast, ost] {
      if (!grad_ready(*ost) || !ast->requires_grad) return;
      if (ast->g.empty()) ast->g.assign(ast->v.size(), 0.0);
      const double g = ost->g[0];
      for (double& dx : ast->g) dx += g;
    });
  }
  return out;
}

// ---- shape ops ----------------------------------------------------------------

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  }
  Tensor out = detail::make_uninit_tensor(std::move(shape), a.requires_grad());
  out.st->v.assign(a.st->v.begin(), a.st->v.end());
  if (tape.recording() && out.requires_grad()) {
    auto ast = a.st, ost = out.st;
    tape.record(ost, [ast, ost] {
      if (!grad_ready(*ost) || !ast->requires_grad) return;
      accumulate(*ast, ost->g);
    });
  }
  return out;
}

Tensor slice_time(Tape& tape, const Tensor& x, std::size_t t0,
                  std::size_t t1) {
  if (x.ndim() != 3) {
    throw DimensionError("slice_time expects [batch, time, chan], got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  if (t0 >= t1 || t1 > n) {
    throw IndexError("slice_time [" + std::to_string(t0) + "," +
                     std::to_string(t1) + ") out of range for n=" +
                     std::to_string(n));
  }
  const std::size_t w = t1 - t0;
  Tensor out = detail::make_uninit_tensor({b, w, c}, x.requires_grad());
  for (std::size_t i = 0; i < b; ++i) {
    const double* src = x.st->v.data() + (i * n + t0) * c;
    std::copy(src, src + w * c, out.st->v.data() + i * w * c);
  }
  if (tape.recording() && out.requires_grad()) {
    auto xs = x.st, os = out.st;
    tape.record(os, [xs, os, b, n, c, t0, w] {
      if (!grad_ready(*os) || !xs->requires_grad) return;
      if (xs->g.empty()) xs->g.assign(xs->v.size(), 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        kernels::active().axpy(xs->g.data() + (i * n + t0) * c, 1.0,
                               os->g.data() + i * w * c, w * c);
      }
    });
  }
  return out;
}

Tensor shift_time_down(Tape& tape, const Tensor& x) {
  if (x.ndim() != 3) {
    throw DimensionError("shift_time_down expects [batch, time, chan], got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), n = x.dim(1), c = x.dim(2);
  Tensor out = detail::make_uninit_tensor({b, n, c}, x.requires_grad());
  for (std::size_t i = 0; i < b; ++i) {
    const double* src = x.st->v.data() + i * n * c;
    double* dst = out.st->v.data() + i * n * c;
    std::fill(dst, dst + c, 0.0);  // the zero initial state
    std::copy(src, src + (n - 1) * c, dst + c);  // row t <- row t-1
  }
  if (tape.recording() && out.requires_grad()) {
    auto xs = x.st, os = out.st;
    tape.record(os, [xs, os, b, n, c] {
      if (!grad_ready(*os) || !xs->requires_grad) return;
      if (xs->g.empty()) xs->g.assign(xs->v.size(), 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        kernels::active().axpy(xs->g.data() + i * n * c, 1.0,
                               os->g.data() + (i * n + 1) * c, (n - 1) * c);
      }
    });
  }
  return out;
}

Tensor stack_time(Tape& tape, std::span<const Tensor> steps) {
  if (steps.empty()) throw ContractError("stack_time: no steps");
  const Shape& s0 = steps.front().shape();
  if (s0.size() != 2) {
    throw DimensionError("stack_time expects [batch, chan] steps, got " +
                         shape_str(s0));
  }
  const std::size_t b = s0[0], c = s0[1], n = steps.size();
  bool rg = false;
  for (const Tensor& s : steps) {
    if (s.shape() != s0) {
      throw DimensionError("stack_time: step shape " + shape_str(s.shape()) +
                           " != " + shape_str(s0));
    }
    rg = rg || s.requires_grad();
  }
  Tensor out = detail::make_uninit_tensor({b, n, c}, rg);
  for (std::size_t t = 0; t < n; ++t) {
    const double* src = steps[t].st->v.data();
    for (std::size_t i = 0; i < b; ++i) {
      std::copy(src + i * c, src + (i + 1) * c,
                out.st->v.data() + (i * n + t) * c);
    }
  }
  if (tape.recording() && rg) {
    std::vector<std::shared_ptr<TensorStorage>> srcs;
    srcs.reserve(n);
    for (const Tensor& s : steps) srcs.push_back(s.st);
    auto os = out.st;
    tape.record(os, [srcs = std::move(srcs), os, b, n, c] {
      if (os->g.empty()) return;
      for (std::size_t t = 0; t < n; ++t) {
        auto& st = *srcs[t];
        if (!st.requires_grad) continue;
        if (st.g.empty()) st.g.assign(st.v.size(), 0.0);
        for (std::size_t i = 0; i < b; ++i) {
          kernels::active().axpy(st.g.data() + i * c, 1.0,
                                 os->g.data() + (i * n + t) * c, c);
        }
      }
    });
  }
  return out;
}

// ---- dropout --------------------------------------------------------------------

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training,
               Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout rate must be in [0,1), got " +
                        std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (double& m : *mask) m = rng.uniform() < rate ? 0.0 : scale;
  Tensor out = detail::make_uninit_tensor(x.shape(), x.requires_grad());
  kernels::active().mul(out.st->v.data(), x.st->v.data(), mask->data(),
                        x.numel());
  if (tape.recording() && out.requires_grad()) {
    auto xs = x.st, os = out.st;
    tape.record(os, [xs, os, mask] {
      if (!grad_ready(*os) || !xs->requires_grad) return;
      if (xs->g.empty()) xs->g.assign(xs->v.size(), 0.0);
      const double* dy = os->g.data();
      const double* m = mask->data();
      double* dx = xs->g.data();
      for (std::size_t i = 0; i < xs->g.size(); ++i) dx[i] += dy[i] * m[i];
    });
  }
  return out;
}

}  // namespace clrnn
