#pragma once

// Central finite-difference validation of the tape's gradients. The numeric
// side re-evaluates the program with perturbed parameters and never touches
// the backward rules, so it stays an independent oracle.

#include <functional>
#include <span>
#include <string>

#include "clrnn/tensor.hpp"

namespace clrnn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double step = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::size_t coords_checked = 0;
  std::string worst;  // human-readable worst coordinate
};

// program builds the forward pass on the given tape and returns the scalar
// loss. It must be deterministic (no RNG inside). params are the leaves to
// check; their values are perturbed in place and restored.
GradCheckReport finite_diff_check(
    const std::function<Tensor(Tape&)>& program, std::span<Tensor> params,
    double step, double tol);

// Fixed battery: each op at tolerance 1e-6 and the full model on an 8-step
// toy sequence at 1e-4, step 1e-5 throughout.
std::vector<std::pair<std::string, GradCheckReport>> standard_gradcheck_suite();

}  // namespace clrnn
