#pragma once

// Shared loop bodies for the kernel backends. Each backend instantiates
// these templates with its own vector span; VecOps describes how many
// lanes to use and how to multiply-accumulate a contiguous run. The scalar
// backend uses lane width 1, so every backend walks the data in the same
// order and the per-element reduction order is identical everywhere.

#include <algorithm>
#include <cstddef>

namespace clrnn::kernels::detail {

// VecOps contract:
//   static constexpr std::size_t width;
//   static void mac_run(double* y, double a, const double* x, std::size_t len);
//     -- y[i] += a * x[i] for i in [0, len), left to right, no fma
//   static void add_run(double* z, const double* x, const double* y, std::size_t len);
//   static void mul_run(double* z, const double* x, const double* y, std::size_t len);

template <class V>
void matmul_nn(double* c, const double* a, const double* b, std::size_t m,
               std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      V::mac_run(crow, arow[p], b + p * n, n);
    }
  }
}

template <class V>
void axpy(double* y, double alpha, const double* x, std::size_t len) {
  V::mac_run(y, alpha, x, len);
}

template <class V>
void add(double* z, const double* x, const double* y, std::size_t len) {
  V::add_run(z, x, y, len);
}

template <class V>
void mul(double* z, const double* x, const double* y, std::size_t len) {
  V::mul_run(z, x, y, len);
}

template <class V>
void conv1d_causal(double* out, const double* x, const double* w,
                   const double* bias, std::size_t /*batch*/, std::size_t n,
                   std::size_t cin, std::size_t cout, std::size_t ksize,
                   std::size_t dilation, std::size_t row_begin,
                   std::size_t row_end) {
  for (std::size_t r = row_begin; r < row_end; ++r) {
    const std::size_t b = r / n;
    const std::size_t t = r % n;
    double* orow = out + r * cout;
    if (bias) {
      std::copy(bias, bias + cout, orow);
    } else {
      std::fill(orow, orow + cout, 0.0);
    }
    for (std::size_t q = 0; q < ksize; ++q) {
      const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) -
                               static_cast<std::ptrdiff_t>((ksize - 1 - q) * dilation);
      if (s < 0) continue;  // zero left padding
      const double* xrow = x + (b * n + static_cast<std::size_t>(s)) * cin;
      const double* wq = w + q * cin * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        V::mac_run(orow, xrow[ci], wq + ci * cout, cout);
      }
    }
  }
}

}  // namespace clrnn::kernels::detail
