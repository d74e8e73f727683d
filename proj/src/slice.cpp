#include "multires/slice.hpp"

#include <algorithm>
#include <cmath>

#include "multires/errors.hpp"

namespace multires {

double slice_sample(double x0, const std::function<double(double)>& logf,
                    const SliceOptions& options, Rng& rng) {
  auto target = [&](double x) {
    if (!(x > options.lower && x < options.upper)) return -std::numeric_limits<double>::infinity();
    double v = logf(x);
    return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
  };
  const double f0 = target(x0);
  if (!std::isfinite(f0)) throw NumericalError("slice sampler started at a zero-density point");
  const double level = f0 + std::log(rng.uniform_open());
  const double w = options.width;

  double left = x0 - w * rng.uniform();
  double right = left + w;
  int j = static_cast<int>(std::floor(options.max_steps * rng.uniform()));
  int k = options.max_steps - 1 - j;
  while (j-- > 0 && left > options.lower && target(left) > level) left -= w;
  while (k-- > 0 && right < options.upper && target(right) > level) right += w;
  left = std::max(left, options.lower);
  right = std::min(right, options.upper);

  for (int iter = 0; iter < 1000; ++iter) {
    const double x1 = left + rng.uniform() * (right - left);
    if (target(x1) > level) return x1;
    if (x1 < x0)
      left = x1;
    else
      right = x1;
  }
  return x0;
}

}  // namespace multires
