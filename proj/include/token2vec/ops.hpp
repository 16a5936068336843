#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "token2vec/tensor.hpp"

namespace token2vec {

// Differentiable primitives. Every op validates shapes, checks that its
// output is finite (NumericError otherwise) and, when a GradTape is active
// and any input requires a gradient, records its backward pass.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// x[n x d] + bias[d] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Exact erf form: x * Phi(x).
Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

// Floor applied to each vector norm in cosine denominators.
inline constexpr double kCosineNormFloor = 1e-8;

double cosine_similarity(std::span<const double> a, std::span<const double> b);
// Differentiable cosine similarity of two equally sized tensors; scalar out.
Tensor cosine_sim(const Tensor& a, const Tensor& b);
// out[i][j] = cos(queries[i], table[j]) * scale.
Tensor cosine_logits(const Tensor& queries, const Tensor& table, double scale);

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids);
// Rows [begin, end) of a 2-D tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

// Mean over rows of -log softmax(logits[i])[targets[i]]. Zero rows -> 0.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets);

// Contiguous run of rows forming one sequence inside a packed batch.
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Multi-head scaled dot-product self-attention without a causal mask.
// q, k, v are [N x d] with d split evenly across heads; attention is
// restricted to rows of the same segment.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::span<const Segment> segments, std::size_t heads);

namespace detail {
// Numerically stable in-place softmax of one row (max subtraction).
void softmax_inplace(std::span<double> row);
void check_finite(std::span<const double> values, const char* op);
bool should_record(std::initializer_list<const Tensor*> inputs);
// Marks `out` as produced by the active tape.
void mark_recorded(Tensor& out);
}  // namespace detail

}  // namespace token2vec
