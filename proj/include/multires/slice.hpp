#pragma once

#include <functional>
#include <limits>

#include "multires/rng.hpp"

namespace multires {

struct SliceOptions {
  double width = 1.0;
  int max_steps = 32;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

// One univariate slice-sampling transition with stepping out and shrinkage
// (Neal 2003). The bracket never leaves the open interval (lower, upper).
// logf may return -inf; logf(x0) must be finite.
double slice_sample(double x0, const std::function<double(double)>& logf,
                    const SliceOptions& options, Rng& rng);

}  // namespace multires
