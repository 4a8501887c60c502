#pragma once

// Dense 64-bit tensors with a define-by-run tape. Ops execute eagerly
// through the kernel backends and append their backward rule to the tape;
// one reverse traversal fills the grad of every reachable tensor that
// requires it. Accumulation order is fixed by tape order, so backward is
// bit-deterministic.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clrnn/rng.hpp"

namespace clrnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// vector<double> that skips zero-fill on resize; ops that fully overwrite
// their output use it through Tensor storage to save a memset pass.
template <class T>
struct DefaultInitAlloc : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = DefaultInitAlloc<U>;
  };
  template <class U>
  void construct(U* p) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using DoubleVec = std::vector<double, DefaultInitAlloc<double>>;

struct TensorStorage {
  Shape shape;
  DoubleVec v;
  DoubleVec g;  // empty until a backward pass touches it
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return static_cast<bool>(st); }
  const Shape& shape() const { return st->shape; }
  std::size_t ndim() const { return st->shape.size(); }
  std::size_t dim(std::size_t i) const { return st->shape[i]; }
  std::size_t numel() const { return st->v.size(); }

  std::span<double> values() { return st->v; }
  std::span<const double> values() const { return st->v; }
  double& at(std::size_t i) { return st->v[i]; }
  double at(std::size_t i) const { return st->v[i]; }

  // Scalar extraction; contract error unless numel() == 1.
  double item() const;

  bool requires_grad() const { return st->requires_grad; }
  void set_requires_grad(bool rg) { st->requires_grad = rg; }

  bool has_grad() const { return !st->g.empty(); }
  std::span<double> grad() { return st->g; }
  std::span<const double> grad() const { return st->g; }
  void ensure_grad();                 // allocate zero-filled grad if absent
  void zero_grad();                   // zero in place when allocated
  void clear_grad() { st->g.clear(); }  // back to "no grad"

  std::shared_ptr<TensorStorage> st;
};

class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  // Registers a backward rule; out is the node's output storage. fn must
  // check whether out has received gradient and do nothing otherwise.
  void record(std::shared_ptr<TensorStorage> out, std::function<void()> fn);

  // Reverse traversal from a scalar loss. Grads of intermediate (op output)
  // tensors are reset per call; leaf grads accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::shared_ptr<TensorStorage> out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// ---- recorded operations ------------------------------------------------

// a[m,k] * b[k,n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// b's shape must equal a's shape or a suffix of it; b is tiled over the
// leading axes. Backward sums the upstream gradient over the tiled axes.
Tensor add_broadcast(Tape& tape, const Tensor& a, const Tensor& b);

Tensor tanh(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);

// Row-wise over the last axis, max-subtracted for stability.
Tensor log_softmax(Tape& tape, const Tensor& a);

// Mean of -log_probs[i, targets[i]] over unmasked rows. mask may be empty
// (all rows count) or hold one byte per row, 0 = excluded.
Tensor cross_entropy(Tape& tape, const Tensor& log_probs,
                     std::span<const std::int64_t> targets,
                     std::span<const std::uint8_t> mask = {});

Tensor sum(Tape& tape, const Tensor& a);

// Same data, new shape (copying; inputs on the tape are never aliased).
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

// x[b, n, c] -> x[b, t1-t0, c]
Tensor slice_time(Tape& tape, const Tensor& x, std::size_t t0, std::size_t t1);

// x[b, n, c] -> out[b, 0, :] = 0, out[b, t, :] = x[b, t-1, :]
Tensor shift_time_down(Tape& tape, const Tensor& x);

// steps of shape [b, c] -> [b, steps.size(), c]
Tensor stack_time(Tape& tape, std::span<const Tensor> steps);

// Inverted dropout: zero with probability rate, scale survivors by
// 1/(1-rate). Identity when !training or rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training,
               Rng& rng);

}  // namespace clrnn
