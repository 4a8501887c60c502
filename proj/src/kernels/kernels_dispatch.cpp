#include "clrnn/kernels.hpp"

#include <cstdlib>

namespace clrnn::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const Backend& avx2_backend();

static bool avx2_supported() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}
#endif

namespace {

const Backend* pick_auto() {
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) return &avx2_backend();
#endif
  return &scalar_backend();
}

const Backend* initial_backend() {
  if (const char* env = std::getenv("CLRNN_KERNELS")) {
    const std::string name(env);
    if (name == "scalar") return &scalar_backend();
#if defined(__x86_64__) || defined(_M_X64)
    if (name == "avx2" && avx2_supported()) return &avx2_backend();
#endif
  }
  return pick_auto();
}

const Backend*& current() {
  static const Backend* backend = initial_backend();
  return backend;
}

}  // namespace

const Backend& active() { return *current(); }

bool select(const std::string& name) {
  if (name == "auto") {
    current() = pick_auto();
    return true;
  }
  if (name == "scalar") {
    current() = &scalar_backend();
    return true;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2" && avx2_supported()) {
    current() = &avx2_backend();
    return true;
  }
#endif
  return false;
}

std::vector<std::string> available() {
  std::vector<std::string> names = {"scalar"};
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) names.push_back("avx2");
#endif
  return names;
}

}  // namespace clrnn::kernels
