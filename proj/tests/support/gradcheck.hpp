#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "token2vec/tensor.hpp"

namespace token2vec::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

// Relative error with an absolute floor so that exact zeros compare sanely.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of `loss_fn` (which must rebuild the graph from the
// current values of `param`) against the analytic gradient in `analytic`.
inline GradCheckResult check_gradient(Tensor param, const std::vector<double>& analytic,
                                      const std::function<double()>& loss_fn, double h = 1e-5,
                                      double floor = 1e-6) {
  GradCheckResult r;
  auto data = param.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double up = loss_fn();
    data[i] = orig - h;
    const double down = loss_fn();
    data[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double e = rel_error(analytic[i], numeric, floor);
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace token2vec::testing
