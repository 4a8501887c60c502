#pragma once

// Dense numeric kernels behind the tensor ops. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2 variant selected at
// runtime. All variants keep the same per-element reduction order, so the
// backends produce bit-identical results and any of them may be active
// without changing training trajectories.

#include <cstddef>
#include <string>
#include <vector>

namespace clrnn::kernels {

struct Backend {
  const char* name;

  // c = a(m x k) * b(k x n), row-major. accumulate: c += product.
  void (*matmul_nn)(double* c, const double* a, const double* b,
                    std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate);

  // y += alpha * x
  void (*axpy)(double* y, double alpha, const double* x, std::size_t len);

  // z = x + y
  void (*add)(double* z, const double* x, const double* y, std::size_t len);

  // z = x * y
  void (*mul)(double* z, const double* x, const double* y, std::size_t len);

  // Dilated causal 1-D convolution over output rows [row_begin, row_end).
  // x: [batch, n, cin], w: [k, cin, cout], bias: [cout] or null,
  // out: [batch, n, cout]. Row r maps to (b, t) = (r / n, r % n); inputs
  // before t=0 read as zero.
  void (*conv1d_causal)(double* out, const double* x, const double* w,
                        const double* bias, std::size_t batch, std::size_t n,
                        std::size_t cin, std::size_t cout, std::size_t ksize,
                        std::size_t dilation, std::size_t row_begin,
                        std::size_t row_end);
};

// Active backend (auto-detected on first use, or forced via select() /
// the CLRNN_KERNELS environment variable).
const Backend& active();

const Backend& scalar_backend();

// "scalar", "avx2" or "auto". Returns false if the backend is unavailable.
bool select(const std::string& name);

std::vector<std::string> available();

}  // namespace clrnn::kernels
