#pragma once

// Dual-softmax differential attention. Per head, queries and keys are
// projected twice ([Q1,Q2] and [K1,K2]); the attention map is
//   A = softmax(Q1 K1^T / sqrt(d)) - lambda * softmax(Q2 K2^T / sqrt(d))
// and the head output is LayerNorm(A V) with no learnable affine. Heads are
// concatenated in index order and projected by W_O.
//
// Weight layout: W_Q and W_K are (D, h * 2d'), where head i owns the column
// block [i*2d', (i+1)*2d') and the first d' columns of the block form Q1/K1,
// the second d' form Q2/K2. W_V is (D, h * d') with head i owning
// [i*d', (i+1)*d'). W_O is (h*d', D); h*d' == D so the concatenated heads
// match the model width.

#include "asda/ops.hpp"
#include "asda/tensor.hpp"

namespace asda {

struct DiffAttnParams {
  Tensor w_q;  // (D, h * 2 * head_dim)
  Tensor w_k;  // (D, h * 2 * head_dim)
  Tensor w_v;  // (D, h * head_dim)
  Tensor w_o;  // (h * head_dim, D)
  double lambda = 0.3;
  std::size_t heads = 8;
  std::size_t scale_dim = 0;  // d in 1/sqrt(d); 0 means head_dim

  std::size_t model_dim() const { return w_q.rows(); }
  std::size_t head_dim() const { return model_dim() / heads; }
  double softmax_scale() const {
    return 1.0 / std::sqrt(static_cast<double>(scale_dim ? scale_dim : head_dim()));
  }

  void validate() const {
    const std::size_t d = model_dim(), hd = head_dim();
    detail::require(heads >= 1 && d % heads == 0,
                    "DiffAttnParams: model dim " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
    detail::require(lambda >= 0.0, "DiffAttnParams: lambda must be nonnegative");
    detail::require(w_q.cols() == heads * 2 * hd,
                    "DiffAttnParams: W_Q " + shape_str(w_q.shape()) + " must have 2*head_dim columns per head");
    detail::require(w_k.shape() == w_q.shape(), "DiffAttnParams: W_K shape differs from W_Q");
    detail::require(w_v.rows() == d && w_v.cols() == heads * hd,
                    "DiffAttnParams: W_V " + shape_str(w_v.shape()) + " must be (D, h*head_dim)");
    detail::require(w_o.rows() == heads * hd && w_o.cols() == d,
                    "DiffAttnParams: W_O " + shape_str(w_o.shape()) + " must be (h*head_dim, D)");
  }

  static DiffAttnParams init(std::size_t d, std::size_t h, double lambda, std::mt19937_64& rng,
                             double stddev = 0.02) {
    detail::require(h >= 1 && d % h == 0, "DiffAttnParams::init: model dim " + std::to_string(d) +
                                              " not divisible by " + std::to_string(h) + " heads");
    const std::size_t hd = d / h;
    DiffAttnParams p;
    p.w_q = Tensor::randn({d, h * 2 * hd}, rng, stddev, true);
    p.w_k = Tensor::randn({d, h * 2 * hd}, rng, stddev, true);
    p.w_v = Tensor::randn({d, h * hd}, rng, stddev, true);
    p.w_o = Tensor::randn({h * hd, d}, rng, stddev, true);
    p.lambda = lambda;
    p.heads = h;
    return p;
  }
};

// Detached per-head snapshots of A1, A2 and A for offline inspection.
struct AttentionTrace {
  std::vector<Tensor> a1, a2, a;
};

struct HeadProjection {
  Tensor q1, q2, k1, k2, v;
};

inline HeadProjection project_qkv(const Tensor& z, const DiffAttnParams& p, std::size_t head) {
  p.validate();
  detail::require(z.ndim() == 2 && z.cols() == p.model_dim(),
                  "project_qkv: input " + shape_str(z.shape()) + " width must equal model dim " +
                      std::to_string(p.model_dim()));
  detail::require(head < p.heads, "project_qkv: head " + std::to_string(head) + " out of range");
  const std::size_t hd = p.head_dim();
  Tensor zq = matmul(z, p.w_q);
  Tensor zk = matmul(z, p.w_k);
  Tensor zv = matmul(z, p.w_v);
  HeadProjection out;
  out.q1 = slice_cols(zq, head * 2 * hd, head * 2 * hd + hd);
  out.q2 = slice_cols(zq, head * 2 * hd + hd, (head + 1) * 2 * hd);
  out.k1 = slice_cols(zk, head * 2 * hd, head * 2 * hd + hd);
  out.k2 = slice_cols(zk, head * 2 * hd + hd, (head + 1) * 2 * hd);
  out.v = slice_cols(zv, head * hd, (head + 1) * hd);
  return out;
}

// A = softmax(Q1 K1^T / sqrt(d)) - lambda * softmax(Q2 K2^T / sqrt(d)).
// Softmaxes are stabilized by row-max subtraction. When a1_out/a2_out are
// given they receive the two softmax maps (still attached to the graph).
inline Tensor diff_weights(const Tensor& q1, const Tensor& k1, const Tensor& q2, const Tensor& k2,
                           double lambda, std::size_t d, Tensor* a1_out = nullptr,
                           Tensor* a2_out = nullptr) {
  detail::require(d > 0, "diff_weights: scale dim must be positive");
  detail::require(q1.shape() == q2.shape() && k1.shape() == k2.shape() && q1.cols() == k1.cols(),
                  "diff_weights: inconsistent projection shapes");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor a1 = row_softmax(scalar_multiply(matmul(q1, transpose(k1)), scale));
  Tensor a2 = row_softmax(scalar_multiply(matmul(q2, transpose(k2)), scale));
  if (a1_out) *a1_out = a1;
  if (a2_out) *a2_out = a2;
  return subtract(a1, scalar_multiply(a2, lambda));
}

inline Tensor diff_head(const Tensor& z, const DiffAttnParams& p, std::size_t head,
                        AttentionTrace* trace = nullptr) {
  HeadProjection proj = project_qkv(z, p, head);
  Tensor a1, a2;
  Tensor a = diff_weights(proj.q1, proj.k1, proj.q2, proj.k2, p.lambda,
                          p.scale_dim ? p.scale_dim : p.head_dim(), &a1, &a2);
  if (trace) {
    trace->a1.push_back(a1.detach());
    trace->a2.push_back(a2.detach());
    trace->a.push_back(a.detach());
  }
  return layer_norm(matmul(a, proj.v));
}

// Concat(head_1..head_h) W_O. The per-head projections reuse one full-width
// matmul per weight matrix; column slicing recovers each head's block, so
// the result matches the per-head project_qkv contract exactly.
inline Tensor multi_head_diff(const Tensor& z, const DiffAttnParams& p,
                              AttentionTrace* trace = nullptr) {
  p.validate();
  detail::require(z.ndim() == 2 && z.cols() == p.model_dim(),
                  "multi_head_diff: input " + shape_str(z.shape()) +
                      " width must equal model dim " + std::to_string(p.model_dim()));
  const std::size_t hd = p.head_dim();
  const std::size_t d = p.scale_dim ? p.scale_dim : hd;
  Tensor zq = matmul(z, p.w_q);
  Tensor zk = matmul(z, p.w_k);
  Tensor zv = matmul(z, p.w_v);
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Tensor q1 = slice_cols(zq, h * 2 * hd, h * 2 * hd + hd);
    Tensor q2 = slice_cols(zq, h * 2 * hd + hd, (h + 1) * 2 * hd);
    Tensor k1 = slice_cols(zk, h * 2 * hd, h * 2 * hd + hd);
    Tensor k2 = slice_cols(zk, h * 2 * hd + hd, (h + 1) * 2 * hd);
    Tensor v = slice_cols(zv, h * hd, (h + 1) * hd);
    Tensor a1, a2;
    Tensor a = diff_weights(q1, k1, q2, k2, p.lambda, d, &a1, &a2);
    if (trace) {
      trace->a1.push_back(a1.detach());
      trace->a2.push_back(a2.detach());
      trace->a.push_back(a.detach());
    }
    heads.push_back(layer_norm(matmul(a, v)));
  }
  return matmul(concat_cols(heads), p.w_o);
}

}  // namespace asda
