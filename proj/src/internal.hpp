#pragma once

// Helpers shared by the op implementations.

#include <cmath>
#include <vector>

#include "clrnn/tensor.hpp"

namespace clrnn::detail {

inline std::vector<double> transposed(const double* src, std::size_t rows,
                                      std::size_t cols) {
  std::vector<double> dst(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c * rows + r] = src[r * cols + c];
    }
  }
  return dst;
}

// Row-partitioned matmul; chunks sized so each carries comparable work.
void matmul_nn_threaded(double* c, const double* a, const double* b,
                        std::size_t m, std::size_t k, std::size_t n, bool acc);

// Storage left uninitialized; only for ops that overwrite every element.
Tensor make_uninit_tensor(Shape shape, bool requires_grad);

#ifndef NDEBUG
inline void check_finite(const TensorStorage& s, const char* what) {
  for (double x : s.v) {
    if (!std::isfinite(x)) {
      throw ContractError(std::string("non-finite value after ") + what);
    }
  }
}
#define CLRNN_CHECK_FINITE(s, what) ::clrnn::detail::check_finite((s), (what))
#else
#define CLRNN_CHECK_FINITE(s, what) ((void)0)
#endif

}  // namespace clrnn::detail
