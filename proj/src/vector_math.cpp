#include "vector_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace token2vec::detail {

void erf_array(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::erf(in[i]);
}

void softmax_array(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  for (std::size_t i = 0; i < n; ++i) row[i] = std::exp(row[i] - mx);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += row[i];
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
}

void gelu_backward_array(const double* x, const double* cdf, const double* dy, double* g, std::size_t n) {
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] * (cdf[i] + x[i] * inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]));
}

}  // namespace token2vec::detail
