#include "token2vec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "token2vec/errors.hpp"
#include "vector_math.hpp"

namespace token2vec {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_matrix(const Tensor& t, const char* op, const char* name) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": " + name + " must be 2-D, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// Gradient of a unit-normalized row through the norm floor.
void normalize_backward(const double* x, const double* xn, double norm, const double* dxn, double* dx,
                        std::size_t d) {
  if (norm <= kCosineNormFloor) {
    for (std::size_t i = 0; i < d; ++i) dx[i] += dxn[i] / kCosineNormFloor;
    return;
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) dot += xn[i] * dxn[i];
  for (std::size_t i = 0; i < d; ++i) dx[i] += (dxn[i] - xn[i] * dot) / norm;
  (void)x;
}

double row_norm(const double* x, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

}  // namespace

namespace detail {

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  softmax_array(row.data(), row.size());
}

void check_finite(std::span<const double> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void mark_recorded(Tensor& out) {
  out.set_requires_grad(true);
  out.impl()->origin = GradTape::active();
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul", "a");
  require_matrix(b, "matmul", "b");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, a " + shape_to_string(a.shape()) + " b " +
                         shape_to_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  if (m > 0 && n > 0) {
    if (k == 0) {
      std::fill(oi->data.begin(), oi->data.end(), 0.0);
    } else {
      as_matrix(oi->data, m, n).noalias() = as_matrix(std::as_const(ai->data), m, k) * as_matrix(std::as_const(bi->data), k, n);
    }
  }
  detail::check_finite(oi->data, "matmul");
  if (detail::should_record({&a, &b})) {
    detail::mark_recorded(out);
    GradTape::active()->record([ai, bi, oi, m, k, n] {
      if (oi->grad.empty() || m == 0 || n == 0 || k == 0) return;
      auto dout = as_matrix(std::as_const(oi->grad), m, n);
      if (ai->requires_grad) {
        as_matrix(ai->grad_buffer(), m, k).noalias() += dout * as_matrix(std::as_const(bi->data), k, n).transpose();
      }
      if (bi->requires_grad) {
        as_matrix(bi->grad_buffer(), k, n).noalias() += as_matrix(std::as_const(ai->data), m, k).transpose() * dout;
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = ai->data[i] + bi->data[i];
  detail::check_finite(oi->data, "add");
  if (detail::should_record({&a, &b})) {
    detail::mark_recorded(out);
    GradTape::active()->record([ai, bi, oi] {
      if (oi->grad.empty()) return;
      for (auto* p : {ai.get(), bi.get()}) {
        if (!p->requires_grad) continue;
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t d = x.cols();
  if (bias.numel() != d) {
    throw DimensionError("add_row: bias " + shape_to_string(bias.shape()) + " does not match last dim of " +
                         shape_to_string(x.shape()));
  }
  const std::size_t n = x.rows();
  Tensor out(x.shape());
  auto xi = x.impl(), bi = bias.impl(), oi = out.impl();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) oi->data[r * d + c] = xi->data[r * d + c] + bi->data[c];
  detail::check_finite(oi->data, "add_row");
  if (detail::should_record({&x, &bias})) {
    detail::mark_recorded(out);
    GradTape::active()->record([xi, bi, oi, n, d] {
      if (oi->grad.empty()) return;
      if (xi->requires_grad) {
        auto& g = xi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) g[c] += oi->grad[r * d + c];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto ai = a.impl(), bi = b.impl(), oi = out.impl();
  for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = ai->data[i] * bi->data[i];
  detail::check_finite(oi->data, "mul");
  if (detail::should_record({&a, &b})) {
    detail::mark_recorded(out);
    GradTape::active()->record([ai, bi, oi] {
      if (oi->grad.empty()) return;
      if (ai->requires_grad) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  Tensor out(x.shape());
  auto xi = x.impl(), oi = out.impl();
  for (std::size_t i = 0; i < oi->data.size(); ++i) oi->data[i] = xi->data[i] * factor;
  detail::check_finite(oi->data, "scale");
  if (detail::should_record({&x})) {
    detail::mark_recorded(out);
    GradTape::active()->record([xi, oi, factor] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * factor;
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  detail::check_finite(out.data(), "sum");
  if (detail::should_record({&x})) {
    detail::mark_recorded(out);
    auto xi = x.impl(), oi = out.impl();
    GradTape::active()->record([xi, oi] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (auto& v : g) v += oi->grad[0];
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (x.dim() == 0 || d == 0) throw DimensionError("layer_norm: last dimension is zero");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(bias.shape()) + " do not match last dim of " + shape_to_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t n = x.rows();
  Tensor out(x.shape());
  auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
  auto xhat = std::make_shared<std::vector<double>>(xi->data.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xi->data.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (row[c] - mean) * inv;
      (*xhat)[r * d + c] = h;
      oi->data[r * d + c] = h * gi->data[c] + bi->data[c];
    }
  }
  detail::check_finite(oi->data, "layer_norm");
  if (detail::should_record({&x, &gain, &bias})) {
    detail::mark_recorded(out);
    GradTape::active()->record([xi, gi, bi, oi, xhat, inv_std, n, d] {
      if (oi->grad.empty()) return;
      const auto& dy = oi->grad;
      if (gi->requires_grad) {
        auto& g = gi->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c] * (*xhat)[r * d + c];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) g[c] += dy[r * d + c];
      }
      if (xi->requires_grad) {
        auto& g = xi->grad_buffer();
        std::vector<double> dh(d);
        for (std::size_t r = 0; r < n; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dh[c] = dy[r * d + c] * gi->data[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * (*xhat)[r * d + c];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          const double inv = (*inv_std)[r];
          for (std::size_t c = 0; c < d; ++c) {
            g[r * d + c] += inv * (dh[c] - mean_dh - (*xhat)[r * d + c] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  auto xi = x.impl(), oi = out.impl();
  const std::size_t n = oi->data.size();
  auto cdf = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) (*cdf)[i] = xi->data[i] * (std::numbers::sqrt2 / 2.0);
  detail::erf_array(cdf->data(), cdf->data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    (*cdf)[i] = 0.5 * (1.0 + (*cdf)[i]);
    oi->data[i] = xi->data[i] * (*cdf)[i];
  }
  detail::check_finite(oi->data, "gelu");
  if (detail::should_record({&x})) {
    detail::mark_recorded(out);
    GradTape::active()->record([xi, oi, cdf, n] {
      if (oi->grad.empty()) return;
      detail::gelu_backward_array(xi->data.data(), cdf->data(), oi->grad.data(), xi->grad_buffer().data(), n);
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.cols();
  if (x.dim() == 0 || n == 0) throw DimensionError("softmax_rows: last dimension is zero");
  const std::size_t rows = x.rows();
  Tensor out = x.detach();
  auto xi = x.impl(), oi = out.impl();
  for (std::size_t r = 0; r < rows; ++r) detail::softmax_inplace(std::span<double>(oi->data).subspan(r * n, n));
  detail::check_finite(oi->data, "softmax_rows");
  if (detail::should_record({&x})) {
    detail::mark_recorded(out);
    GradTape::active()->record([xi, oi, rows, n] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = oi->data.data() + r * n;
        const double* dy = oi->grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(na), kCosineNormFloor) * std::max(std::sqrt(nb), kCosineNormFloor));
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_sim");
  const std::size_t d = a.numel();
  Tensor out = Tensor::scalar(cosine_similarity(a.data(), b.data()));
  detail::check_finite(out.data(), "cosine_sim");
  if (detail::should_record({&a, &b})) {
    detail::mark_recorded(out);
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    GradTape::active()->record([ai, bi, oi, d] {
      if (oi->grad.empty()) return;
      const double up = oi->grad[0];
      const double na = row_norm(ai->data.data(), d), nb = row_norm(bi->data.data(), d);
      const double ca = std::max(na, kCosineNormFloor), cb = std::max(nb, kCosineNormFloor);
      const double c = oi->data[0];
      auto apply = [&](detail::TensorImpl* self, const detail::TensorImpl* other, double norm, double clamped,
                       double other_clamped) {
        auto& g = self->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) {
          double gi = other->data[i] / (clamped * other_clamped);
          if (norm > kCosineNormFloor) gi -= c * self->data[i] / (norm * norm);
          g[i] += up * gi;
        }
      };
      if (ai->requires_grad) apply(ai.get(), bi.get(), na, ca, cb);
      if (bi->requires_grad) apply(bi.get(), ai.get(), nb, cb, ca);
    });
  }
  return out;
}

Tensor cosine_logits(const Tensor& queries, const Tensor& table, double scale) {
  require_matrix(queries, "cosine_logits", "queries");
  require_matrix(table, "cosine_logits", "table");
  const std::size_t n = queries.shape()[0], d = queries.shape()[1], v = table.shape()[0];
  if (table.shape()[1] != d) {
    throw DimensionError("cosine_logits: queries " + shape_to_string(queries.shape()) + " vs table " +
                         shape_to_string(table.shape()));
  }
  auto qi = queries.impl(), ti = table.impl();
  auto qn = std::make_shared<std::vector<double>>(qi->data.size());
  auto tn = std::make_shared<std::vector<double>>(ti->data.size());
  auto qnorm = std::make_shared<std::vector<double>>(n);
  auto tnorm = std::make_shared<std::vector<double>>(v);
  auto normalize = [d](const std::vector<double>& src, std::vector<double>& dst, std::vector<double>& norms) {
    for (std::size_t r = 0; r < norms.size(); ++r) {
      const double nr = row_norm(src.data() + r * d, d);
      norms[r] = nr;
      const double denom = std::max(nr, kCosineNormFloor);
      for (std::size_t c = 0; c < d; ++c) dst[r * d + c] = src[r * d + c] / denom;
    }
  };
  normalize(qi->data, *qn, *qnorm);
  normalize(ti->data, *tn, *tnorm);
  Tensor out(Shape{n, v});
  auto oi = out.impl();
  if (n > 0 && v > 0 && d > 0) {
    as_matrix(oi->data, n, v).noalias() =
        scale * (as_matrix(std::as_const(*qn), n, d) * as_matrix(std::as_const(*tn), v, d).transpose());
  }
  detail::check_finite(oi->data, "cosine_logits");
  if (detail::should_record({&queries, &table})) {
    detail::mark_recorded(out);
    GradTape::active()->record([qi, ti, oi, qn, tn, qnorm, tnorm, n, d, v, scale] {
      if (oi->grad.empty() || n == 0 || v == 0 || d == 0) return;
      auto dout = as_matrix(std::as_const(oi->grad), n, v);
      if (qi->requires_grad) {
        std::vector<double> dqn(n * d);
        as_matrix(dqn, n, d).noalias() = scale * (dout * as_matrix(std::as_const(*tn), v, d));
        auto& g = qi->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          normalize_backward(qi->data.data() + r * d, qn->data() + r * d, (*qnorm)[r], dqn.data() + r * d,
                             g.data() + r * d, d);
      }
      if (ti->requires_grad) {
        std::vector<double> dtn(v * d);
        as_matrix(dtn, v, d).noalias() = scale * (dout.transpose() * as_matrix(std::as_const(*qn), n, d));
        auto& g = ti->grad_buffer();
        for (std::size_t r = 0; r < v; ++r)
          normalize_backward(ti->data.data() + r * d, tn->data() + r * d, (*tnorm)[r], dtn.data() + r * d,
                             g.data() + r * d, d);
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  require_matrix(table, "embedding_lookup", "table");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " out of range for vocab size " +
                       std::to_string(vocab));
    }
  }
  const std::size_t n = ids.size();
  Tensor out(Shape{n, d});
  auto ti = table.impl(), oi = out.impl();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(ti->data.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                oi->data.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  if (detail::should_record({&table})) {
    detail::mark_recorded(out);
    auto id_copy = std::make_shared<std::vector<std::int64_t>>(ids.begin(), ids.end());
    GradTape::active()->record([ti, oi, id_copy, d] {
      if (oi->grad.empty()) return;
      auto& g = ti->grad_buffer();
      for (std::size_t r = 0; r < id_copy->size(); ++r) {
        const std::size_t base = static_cast<std::size_t>((*id_copy)[r]) * d;
        for (std::size_t c = 0; c < d; ++c) g[base + c] += oi->grad[r * d + c];
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows", "x");
  if (begin > end || end > x.shape()[0]) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of bounds for " + std::to_string(x.shape()[0]) + " rows");
  }
  const std::size_t d = x.shape()[1];
  auto xi = x.impl();
  std::vector<double> values(xi->data.begin() + static_cast<std::ptrdiff_t>(begin * d),
                             xi->data.begin() + static_cast<std::ptrdiff_t>(end * d));
  Tensor out(Shape{end - begin, d}, std::move(values));
  if (detail::should_record({&x})) {
    detail::mark_recorded(out);
    auto oi = out.impl();
    GradTape::active()->record([xi, oi, begin, d] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) g[begin * d + i] += oi->grad[i];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets) {
  require_matrix(logits, "cross_entropy", "logits");
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(n) + " rows but " + std::to_string(targets.size()) +
                         " targets");
  }
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range for " + std::to_string(v) +
                       " classes");
    }
  }
  auto li = logits.impl();
  auto probs = std::make_shared<std::vector<double>>(li->data);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::span<double> row(probs->data() + r * v, v);
    const double* raw = li->data.data() + r * v;
    const double mx = *std::max_element(raw, raw + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(raw[c] - mx);
    total += -(raw[targets[r]] - mx - std::log(z));
    detail::softmax_inplace(row);
  }
  Tensor out = Tensor::scalar(n == 0 ? 0.0 : total / static_cast<double>(n));
  detail::check_finite(out.data(), "cross_entropy");
  if (n > 0 && detail::should_record({&logits})) {
    detail::mark_recorded(out);
    auto oi = out.impl();
    auto tgt = std::make_shared<std::vector<std::int64_t>>(targets.begin(), targets.end());
    GradTape::active()->record([li, oi, probs, tgt, n, v] {
      if (oi->grad.empty()) return;
      const double up = oi->grad[0] / static_cast<double>(n);
      auto& g = li->grad_buffer();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < v; ++c) g[r * v + c] += up * (*probs)[r * v + c];
        g[r * v + static_cast<std::size_t>((*tgt)[r])] -= up;
      }
    });
  }
  return out;
}

}  // namespace token2vec
