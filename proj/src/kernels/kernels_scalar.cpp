#include "kernels_impl.hpp"

#include "clrnn/kernels.hpp"

namespace clrnn::kernels {
namespace {

struct ScalarOps {
  static constexpr std::size_t width = 1;

  static void mac_run(double* y, double a, const double* x, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) y[i] += a * x[i];
  }

  static void add_run(double* z, const double* x, const double* y,
                      std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) z[i] = x[i] + y[i];
  }

  static void mul_run(double* z, const double* x, const double* y,
                      std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) z[i] = x[i] * y[i];
  }
};

}  // namespace

const Backend& scalar_backend() {
  static const Backend backend = {
      "scalar",
      detail::matmul_nn<ScalarOps>,
      detail::axpy<ScalarOps>,
      detail::add<ScalarOps>,
      detail::mul<ScalarOps>,
      detail::conv1d_causal<ScalarOps>,
  };
  return backend;
}

}  // namespace clrnn::kernels
