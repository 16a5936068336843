#pragma once

#include <cstddef>

namespace token2vec::detail {

// Elementwise kernels compiled so glibc's vector math library can be used.
// Results depend only on the inputs and n, never on buffer addresses.

// out[i] = erf(in[i]).
void erf_array(const double* in, double* out, std::size_t n);

// Numerically stable softmax of one row, in place.
void softmax_array(double* row, std::size_t n);

// g[i] += dy[i] * (cdf[i] + x[i] * pdf(x[i])) with pdf the standard normal density.
void gelu_backward_array(const double* x, const double* cdf, const double* dy, double* g, std::size_t n);

}  // namespace token2vec::detail
