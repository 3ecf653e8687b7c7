#pragma once

#include "dctx/optim.hpp"

#include <functional>

namespace dctx {

/// Loss evaluated from the current parameter values. Must be pure given the
/// parameter state (seed any internal randomness per call).
using LossFn = std::function<double(ParamSet&)>;

struct GradCheckResult {
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

/// Compares analytic gradients (already accumulated in params' grad fields by
/// the caller) against central finite differences on n_coords randomly chosen
/// coordinates. Relative error uses |a - n| / max(1e-8, |a| + |n|).
GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamSet& params,
                                  int n_coords, double eps,
                                  uint64_t seed = 12345);

}  // namespace dctx
