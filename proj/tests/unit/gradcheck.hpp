#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cpijit/nn.hpp"
#include "cpijit/rng.hpp"

namespace cpijit::testing_support {

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Runs `backprop` once to fill the gradients, then compares `probes`
/// randomly chosen entries against central differences of `loss`.
/// Returns the worst relative error.
inline double max_relative_error(const std::vector<nn::ParamRef>& params, const std::function<double()>& loss,
                                 const std::function<void()>& backprop, int probes, std::uint64_t seed,
                                 double h = 1e-5) {
  backprop();
  std::vector<nn::Vec> grads;
  std::size_t total = 0;
  for (const auto& p : params) {
    grads.push_back(*p.grad);
    total += p.value->size();
  }
  Rng rng(seed);
  double worst = 0.0;
  for (int n = 0; n < probes; ++n) {
    std::size_t flat = rng.below(total), block = 0;
    while (flat >= params[block].value->size()) flat -= params[block++].value->size();
    double& v = (*params[block].value)[flat];
    const double orig = v;
    v = orig + h;
    const double lp = loss();
    v = orig - h;
    const double lm = loss();
    v = orig;
    worst = std::max(worst, relative_error(grads[block][flat], (lp - lm) / (2 * h)));
  }
  return worst;
}

}  // namespace cpijit::testing_support
