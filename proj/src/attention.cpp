#include <Eigen/Core>
#include <cmath>
#include <string>

#include "token2vec/errors.hpp"
#include "token2vec/ops.hpp"

namespace token2vec {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<Eigen::Dynamic>;
using Block = Eigen::Map<RowMatrix, 0, Strided>;
using ConstBlock = Eigen::Map<const RowMatrix, 0, Strided>;

ConstBlock head_block(const std::vector<double>& buf, const Segment& s, std::size_t head, std::size_t dh,
                      std::size_t d) {
  return ConstBlock(buf.data() + s.offset * d + head * dh, static_cast<Eigen::Index>(s.length),
                    static_cast<Eigen::Index>(dh), Strided(static_cast<Eigen::Index>(d)));
}

Block head_block(std::vector<double>& buf, const Segment& s, std::size_t head, std::size_t dh, std::size_t d) {
  return Block(buf.data() + s.offset * d + head * dh, static_cast<Eigen::Index>(s.length),
               static_cast<Eigen::Index>(dh), Strided(static_cast<Eigen::Index>(d)));
}

}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const Segment> segments,
                            std::size_t heads) {
  if (q.dim() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("multi_head_attention: q/k/v shapes " + shape_to_string(q.shape()) + ", " +
                         shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
  }
  const std::size_t n = q.shape()[0], d = q.shape()[1];
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  for (const auto& s : segments) {
    if (s.offset + s.length > n) {
      throw IndexError("multi_head_attention: segment [" + std::to_string(s.offset) + ", +" +
                       std::to_string(s.length) + ") exceeds " + std::to_string(n) + " rows");
    }
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto qi = q.impl(), ki = k.impl(), vi = v.impl();
  Tensor out(Shape{n, d});
  auto oi = out.impl();
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  // Attention probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<RowMatrix>>(segs->size() * heads);

  for (std::size_t si = 0; si < segs->size(); ++si) {
    const Segment& s = (*segs)[si];
    if (s.length == 0) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      RowMatrix& p = (*probs)[si * heads + h];
      p.noalias() = scale * (head_block(std::as_const(qi->data), s, h, dh, d) *
                             head_block(std::as_const(ki->data), s, h, dh, d).transpose());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        detail::softmax_inplace(std::span<double>(p.row(r).data(), static_cast<std::size_t>(p.cols())));
      }
      head_block(oi->data, s, h, dh, d).noalias() = p * head_block(std::as_const(vi->data), s, h, dh, d);
    }
  }
  detail::check_finite(oi->data, "multi_head_attention");

  if (detail::should_record({&q, &k, &v})) {
    detail::mark_recorded(out);
    GradTape::active()->record([qi, ki, vi, oi, segs, probs, heads, dh, d, scale] {
      if (oi->grad.empty()) return;
      const bool need_q = qi->requires_grad, need_k = ki->requires_grad, need_v = vi->requires_grad;
      RowMatrix dp, ds;
      for (std::size_t si = 0; si < segs->size(); ++si) {
        const Segment& s = (*segs)[si];
        if (s.length == 0) continue;
        for (std::size_t h = 0; h < heads; ++h) {
          const RowMatrix& p = (*probs)[si * heads + h];
          auto dout = head_block(std::as_const(oi->grad), s, h, dh, d);
          if (need_v) head_block(vi->grad_buffer(), s, h, dh, d).noalias() += p.transpose() * dout;
          if (!need_q && !need_k) continue;
          dp.noalias() = dout * head_block(std::as_const(vi->data), s, h, dh, d).transpose();
          ds.resize(p.rows(), p.cols());
          for (Eigen::Index r = 0; r < p.rows(); ++r) {
            const double dot = p.row(r).dot(dp.row(r));
            ds.row(r) = scale * (p.row(r).array() * (dp.row(r).array() - dot)).matrix();
          }
          if (need_q) {
            head_block(qi->grad_buffer(), s, h, dh, d).noalias() += ds * head_block(std::as_const(ki->data), s, h, dh, d);
          }
          if (need_k) {
            head_block(ki->grad_buffer(), s, h, dh, d).noalias() +=
                ds.transpose() * head_block(std::as_const(qi->data), s, h, dh, d);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace token2vec
