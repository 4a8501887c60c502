// AVX2 backend. Vector lanes map to distinct output elements, never to a
// shared reduction, and mul/add stay separate instructions; combined with
// -ffp-contract=off this keeps results bit-identical to the scalar backend.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "kernels_impl.hpp"

#include "clrnn/kernels.hpp"

namespace clrnn::kernels {
namespace {

// Register-blocked: four accumulator vectors per output row block, loaded
// once per block instead of once per k step. Every element still sums its
// products in ascending k order, so results match the scalar reference
// bit for bit.
void matmul_nn_blocked(double* c, const double* a, const double* b,
                       std::size_t m, std::size_t k, std::size_t n,
                       bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
      __m256d s0, s1, s2, s3;
      if (accumulate) {
        s0 = _mm256_loadu_pd(crow + j);
        s1 = _mm256_loadu_pd(crow + j + 4);
        s2 = _mm256_loadu_pd(crow + j + 8);
        s3 = _mm256_loadu_pd(crow + j + 12);
      } else {
        s0 = s1 = s2 = s3 = _mm256_setzero_pd();
      }
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d va = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n + j;
        s0 = _mm256_add_pd(s0, _mm256_mul_pd(va, _mm256_loadu_pd(brow)));
        s1 = _mm256_add_pd(s1, _mm256_mul_pd(va, _mm256_loadu_pd(brow + 4)));
        s2 = _mm256_add_pd(s2, _mm256_mul_pd(va, _mm256_loadu_pd(brow + 8)));
        s3 = _mm256_add_pd(s3, _mm256_mul_pd(va, _mm256_loadu_pd(brow + 12)));
      }
      _mm256_storeu_pd(crow + j, s0);
      _mm256_storeu_pd(crow + j + 4, s1);
      _mm256_storeu_pd(crow + j + 8, s2);
      _mm256_storeu_pd(crow + j + 12, s3);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d s = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        s = _mm256_add_pd(s, _mm256_mul_pd(_mm256_set1_pd(arow[p]),
                                           _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, s);
    }
    for (; j < n; ++j) {
      double s = accumulate ? crow[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * n + j];
      crow[j] = s;
    }
  }
}

struct Avx2Ops {
  static constexpr std::size_t width = 4;

  static void mac_run(double* y, double a, const double* x, std::size_t len) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
      __m256d vy = _mm256_loadu_pd(y + i);
      const __m256d vx = _mm256_loadu_pd(x + i);
      vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
      _mm256_storeu_pd(y + i, vy);
    }
    for (; i < len; ++i) y[i] += a * x[i];
  }

  static void add_run(double* z, const double* x, const double* y,
                      std::size_t len) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
      _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
    }
    for (; i < len; ++i) z[i] = x[i] + y[i];
  }

  static void mul_run(double* z, const double* x, const double* y,
                      std::size_t len) {
    std::size_t i = 0;
    for (; i + 4 <= len; i += 4) {
      _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
    }
    for (; i < len; ++i) z[i] = x[i] * y[i];
  }
};

}  // namespace

const Backend& avx2_backend() {
  static const Backend backend = {
      "avx2",
      matmul_nn_blocked,
      detail::axpy<Avx2Ops>,
      detail::add<Avx2Ops>,
      detail::mul<Avx2Ops>,
      detail::conv1d_causal<Avx2Ops>,
  };
  return backend;
}

}  // namespace clrnn::kernels

#endif  // x86-64
