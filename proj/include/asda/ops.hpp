#pragma once

// Differentiable primitives. Each op documents its forward definition and
// implements the matching backward closure; gradients always accumulate.
// Shapes are validated up front and mismatches throw std::invalid_argument
// with both shapes in the message. No implicit broadcasting beyond the
// documented row-bias case (add_row_bias).

#include <array>
#include <cmath>
#include <limits>

#include "asda/tensor.hpp"

namespace asda {

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_2d(const Tensor& t, const char* op, const char* arg) {
  require(t.ndim() == 2, std::string(op) + ": " + arg + " must be 2-D, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

// c = a + b (identical shapes)
inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(),
                  "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                             [](detail::TensorNode& n) {
                               detail::accumulate(*n.parents[0], n.grad);
                               detail::accumulate(*n.parents[1], n.grad);
                             });
}

// c = a - b
inline Tensor subtract(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "subtract: shape mismatch " + shape_str(a.shape()) +
                                              " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result("subtract", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
                             [](detail::TensorNode& n) {
                               detail::accumulate(*n.parents[0], n.grad);
                               auto& p = *n.parents[1];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] -= n.grad[i];
                             });
}

// c = s * a for a fixed scalar s
inline Tensor scalar_multiply(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.data()[i];
  return detail::make_result("scalar_multiply", a.shape(), std::move(out), {a.node_ptr()},
                             [s](detail::TensorNode& n) {
                               auto& p = *n.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < n.grad.size(); ++i)
                                 p.grad[i] += s * n.grad[i];
                             });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return subtract(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_multiply(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_multiply(a, s); }

// y = x + bias per row: x (N, D), bias (1, D)
inline Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  detail::require_2d(x, "add_row_bias", "x");
  detail::require_2d(bias, "add_row_bias", "bias");
  detail::require(bias.rows() == 1 && bias.cols() == x.cols(),
                  "add_row_bias: bias " + shape_str(bias.shape()) + " does not match row width of " +
                      shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x.data()[r * d + c] + bias.data()[c];
  return detail::make_result("add_row_bias", x.shape(), std::move(out),
                             {x.node_ptr(), bias.node_ptr()}, [n, d](detail::TensorNode& nd) {
                               detail::accumulate(*nd.parents[0], nd.grad);
                               auto& b = *nd.parents[1];
                               if (!b.requires_grad) return;
                               b.ensure_grad();
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < d; ++c) b.grad[c] += nd.grad[r * d + c];
                             });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// C = A B, A (m, k), B (k, n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul", "lhs");
  detail::require_2d(b, "matmul", "rhs");
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions disagree, " +
                                            shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* brow = bd + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  // dA = dC B^T, dB = A^T dC
  return detail::make_result(
      "matmul", {m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [m, k, n](detail::TensorNode& nd) {
        auto& pa = *nd.parents[0];
        auto& pb = *nd.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double g = nd.grad[i * n + j];
              if (g == 0.0) continue;
              for (std::size_t p = 0; p < k; ++p) pa.grad[i * k + p] += g * pb.data[p * n + j];
            }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = pa.data[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) pb.grad[p * n + j] += av * nd.grad[i * n + j];
            }
        }
      });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_2d(a, "transpose", "input");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  return detail::make_result("transpose", {n, m}, std::move(out), {a.node_ptr()},
                             [m, n](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                   p.grad[i * n + j] += nd.grad[j * m + i];
                             });
}

// ---------------------------------------------------------------------------
// nonlinearities and normalization
// ---------------------------------------------------------------------------

// Row-wise softmax with max subtraction. Rows sum to 1 by construction.
inline Tensor row_softmax(const Tensor& x) {
  detail::require_2d(x, "row_softmax", "input");
  detail::require(x.cols() > 0, "row_softmax: empty axis");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data().data() + r * d;
    double mx = row[0];
    for (std::size_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      out[r * d + c] = std::exp(row[c] - mx);
      sum += out[r * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] /= sum;
  }
  // dx = y .* (dy - <dy, y>) per row
  auto y = out;
  return detail::make_result("row_softmax", x.shape(), std::move(out), {x.node_ptr()},
                             [n, d, y](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t r = 0; r < n; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t c = 0; c < d; ++c)
                                   dot += nd.grad[r * d + c] * y[r * d + c];
                                 for (std::size_t c = 0; c < d; ++c)
                                   p.grad[r * d + c] += y[r * d + c] * (nd.grad[r * d + c] - dot);
                               }
                             });
}

constexpr double kLayerNormEps = 1e-5;

// Row-wise layer normalization, x_hat = (x - mu) / sqrt(var + eps).
// Affine form applies a per-column gain and bias afterwards.
inline Tensor layer_norm(const Tensor& x, double eps = kLayerNormEps) {
  detail::require_2d(x, "layer_norm", "input");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  std::vector<double> inv_sigma(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    inv_sigma[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = (row[c] - mu) * inv_sigma[r];
  }
  auto xhat = out;
  return detail::make_result(
      "layer_norm", x.shape(), std::move(out), {x.node_ptr()},
      [n, d, xhat, inv_sigma](detail::TensorNode& nd) {
        auto& p = *nd.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const double dn = static_cast<double>(d);
        for (std::size_t r = 0; r < n; ++r) {
          double g_mean = 0.0, gx_mean = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            g_mean += nd.grad[r * d + c];
            gx_mean += nd.grad[r * d + c] * xhat[r * d + c];
          }
          g_mean /= dn;
          gx_mean /= dn;
          for (std::size_t c = 0; c < d; ++c)
            p.grad[r * d + c] +=
                inv_sigma[r] * (nd.grad[r * d + c] - g_mean - xhat[r * d + c] * gx_mean);
        }
      });
}

inline Tensor layer_norm_affine(const Tensor& x, const Tensor& gain, const Tensor& bias,
                                double eps = kLayerNormEps) {
  detail::require_2d(x, "layer_norm_affine", "input");
  detail::require(gain.ndim() == 2 && gain.rows() == 1 && gain.cols() == x.cols(),
                  "layer_norm_affine: gain " + shape_str(gain.shape()) + " must be (1," +
                      std::to_string(x.cols()) + ")");
  detail::require(bias.shape() == gain.shape(), "layer_norm_affine: bias shape mismatch");
  Tensor normalized = layer_norm(x, eps);
  // y = gain .* x_hat + bias, expressed with existing primitives
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      out[r * d + c] = normalized.data()[r * d + c] * gain.data()[c] + bias.data()[c];
  auto xhat = normalized.data();
  return detail::make_result(
      "layer_norm_affine_scale", {n, d}, std::move(out),
      {normalized.node_ptr(), gain.node_ptr(), bias.node_ptr()},
      [n, d, xhat](detail::TensorNode& nd) {
        auto& px = *nd.parents[0];
        auto& pg = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (px.requires_grad) {
          px.ensure_grad();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c)
              px.grad[r * d + c] += nd.grad[r * d + c] * pg.data[c];
        }
        if (pg.requires_grad) {
          pg.ensure_grad();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) pg.grad[c] += nd.grad[r * d + c] * xhat[r * d + c];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) pb.grad[c] += nd.grad[r * d + c];
        }
      });
}

// Exact GeLU, y = 0.5 x (1 + erf(x / sqrt(2))).
inline Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  return detail::make_result("gelu", x.shape(), std::move(out), {x.node_ptr()},
                             [](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < nd.grad.size(); ++i) {
                                 const double v = p.data[i];
                                 const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                                 const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                                 p.grad[i] += nd.grad[i] * (cdf + v * pdf);
                               }
                             });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum_all", {1, 1}, {s}, {x.node_ptr()}, [](detail::TensorNode& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += nd.grad[0];
  });
}

inline Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv_n = 1.0 / static_cast<double>(x.numel());
  return detail::make_result("mean_all", {1, 1}, {s * inv_n}, {x.node_ptr()},
                             [inv_n](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < p.grad.size(); ++i)
                                 p.grad[i] += nd.grad[0] * inv_n;
                             });
}

// Column means of a (N, D) matrix -> (1, D). Global average pooling over rows.
inline Tensor mean_over_rows(const Tensor& x) {
  detail::require_2d(x, "mean_over_rows", "input");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[c] += x.data()[r * d + c];
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv_n;
  return detail::make_result("mean_over_rows", {1, d}, std::move(out), {x.node_ptr()},
                             [n, d, inv_n](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < d; ++c)
                                   p.grad[r * d + c] += nd.grad[c] * inv_n;
                             });
}

// ||x||_2^2 over every element -> scalar.
inline Tensor l2_norm_squared(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return detail::make_result("l2_norm_squared", {1, 1}, {s}, {x.node_ptr()},
                             [](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < p.grad.size(); ++i)
                                 p.grad[i] += 2.0 * p.data[i] * nd.grad[0];
                             });
}

// ---------------------------------------------------------------------------
// shape surgery
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape) {
  detail::require(shape_numel(new_shape) == x.numel(),
                  "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  return detail::make_result("reshape", std::move(new_shape), x.data(), {x.node_ptr()},
                             [](detail::TensorNode& nd) {
                               detail::accumulate(*nd.parents[0], nd.grad);
                             });
}

// rows [r0, r1) of a 2-D tensor
inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  detail::require_2d(x, "slice_rows", "input");
  detail::require(r0 < r1 && r1 <= x.rows(), "slice_rows: range [" + std::to_string(r0) + "," +
                                                 std::to_string(r1) + ") out of bounds for " +
                                                 shape_str(x.shape()));
  const std::size_t d = x.cols();
  std::vector<double> out(x.data().begin() + r0 * d, x.data().begin() + r1 * d);
  return detail::make_result("slice_rows", {r1 - r0, d}, std::move(out), {x.node_ptr()},
                             [r0, d](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < nd.grad.size(); ++i)
                                 p.grad[r0 * d + i] += nd.grad[i];
                             });
}

// columns [c0, c1) of a 2-D tensor
inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  detail::require_2d(x, "slice_cols", "input");
  detail::require(c0 < c1 && c1 <= x.cols(), "slice_cols: range [" + std::to_string(c0) + "," +
                                                 std::to_string(c1) + ") out of bounds for " +
                                                 shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols(), w = c1 - c0;
  std::vector<double> out(n * w);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = x.data()[r * d + c0 + c];
  return detail::make_result("slice_cols", {n, w}, std::move(out), {x.node_ptr()},
                             [n, d, c0, w](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < w; ++c)
                                   p.grad[r * d + c0 + c] += nd.grad[r * w + c];
                             });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_rows: empty input list");
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  std::vector<std::shared_ptr<detail::TensorNode>> parents;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_rows", "part");
    detail::require(p.cols() == d, "concat_rows: width mismatch, " + shape_str(p.shape()) +
                                       " vs expected width " + std::to_string(d));
    total += p.rows();
    parents.push_back(p.node_ptr());
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return detail::make_result("concat_rows", {total, d}, std::move(out), std::move(parents),
                             [](detail::TensorNode& nd) {
                               std::size_t off = 0;
                               for (auto& pp : nd.parents) {
                                 auto& p = *pp;
                                 if (p.requires_grad) {
                                   p.ensure_grad();
                                   for (std::size_t i = 0; i < p.data.size(); ++i)
                                     p.grad[i] += nd.grad[off + i];
                                 }
                                 off += p.data.size();
                               }
                             });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: empty input list");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::shared_ptr<detail::TensorNode>> parents;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols", "part");
    detail::require(p.rows() == n, "concat_cols: height mismatch, " + shape_str(p.shape()) +
                                       " vs expected rows " + std::to_string(n));
    widths.push_back(p.cols());
    total += p.cols();
    parents.push_back(p.node_ptr());
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * total + off + c] = p.data()[r * w + c];
    off += w;
  }
  return detail::make_result("concat_cols", {n, total}, std::move(out), std::move(parents),
                             [n, total, widths](detail::TensorNode& nd) {
                               std::size_t o = 0;
                               for (std::size_t k = 0; k < nd.parents.size(); ++k) {
                                 auto& p = *nd.parents[k];
                                 const std::size_t w = widths[k];
                                 if (p.requires_grad) {
                                   p.ensure_grad();
                                   for (std::size_t r = 0; r < n; ++r)
                                     for (std::size_t c = 0; c < w; ++c)
                                       p.grad[r * w + c] += nd.grad[r * total + o + c];
                                 }
                                 o += w;
                               }
                             });
}

// out[i] = x[indices[i]] for 2-D x; duplicate indices are allowed and their
// gradients sum.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  detail::require_2d(x, "gather_rows", "input");
  detail::require(!indices.empty(), "gather_rows: empty index list");
  const std::size_t d = x.cols();
  std::vector<double> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    detail::require(indices[i] < x.rows(), "gather_rows: index " + std::to_string(indices[i]) +
                                               " out of range for " + shape_str(x.shape()));
    std::copy_n(x.data().begin() + indices[i] * d, d, out.begin() + i * d);
  }
  return detail::make_result("gather_rows", {indices.size(), d}, std::move(out), {x.node_ptr()},
                             [indices, d](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               for (std::size_t i = 0; i < indices.size(); ++i)
                                 for (std::size_t c = 0; c < d; ++c)
                                   p.grad[indices[i] * d + c] += nd.grad[i * d + c];
                             });
}

// Rebuilds a full (n, D) sequence from visible rows: positions with keep[i]
// take the next visible row in order, the rest take fill[i]. fill must be
// (n, D) so each masked slot can carry its own content.
inline Tensor scatter_rows(const Tensor& visible, const std::vector<std::uint8_t>& keep,
                           const Tensor& fill) {
  detail::require_2d(visible, "scatter_rows", "visible");
  detail::require_2d(fill, "scatter_rows", "fill");
  const std::size_t n = keep.size(), d = visible.cols();
  detail::require(fill.rows() == n && fill.cols() == d,
                  "scatter_rows: fill " + shape_str(fill.shape()) + " must be (" +
                      std::to_string(n) + "," + std::to_string(d) + ")");
  std::size_t n_keep = 0;
  for (auto k : keep) n_keep += k ? 1 : 0;
  detail::require(n_keep == visible.rows(),
                  "scatter_rows: " + std::to_string(visible.rows()) + " visible rows for " +
                      std::to_string(n_keep) + " kept positions");
  std::vector<double> out(n * d);
  std::size_t v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = keep[i] ? visible.data().data() + (v++) * d : fill.data().data() + i * d;
    std::copy_n(src, d, out.begin() + i * d);
  }
  return detail::make_result(
      "scatter_rows", {n, d}, std::move(out), {visible.node_ptr(), fill.node_ptr()},
      [keep, n, d](detail::TensorNode& nd) {
        auto& pv = *nd.parents[0];
        auto& pf = *nd.parents[1];
        std::size_t v = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (keep[i]) {
            if (pv.requires_grad) {
              pv.ensure_grad();
              for (std::size_t c = 0; c < d; ++c) pv.grad[v * d + c] += nd.grad[i * d + c];
            }
            ++v;
          } else if (pf.requires_grad) {
            pf.ensure_grad();
            for (std::size_t c = 0; c < d; ++c) pf.grad[i * d + c] += nd.grad[i * d + c];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// 2-D convolution
// ---------------------------------------------------------------------------

// input (C_in, H, W), weight (C_out, C_in/groups, KH, KW), bias (C_out) or
// undefined. Zero padding, integer stride, grouped channels.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                     std::size_t stride = 1, std::size_t padding = 0, std::size_t groups = 1) {
  detail::require(input.ndim() == 3, "conv2d: input must be (C,H,W), got " + shape_str(input.shape()));
  detail::require(weight.ndim() == 4,
                  "conv2d: weight must be (C_out,C_in/groups,KH,KW), got " + shape_str(weight.shape()));
  detail::require(stride >= 1, "conv2d: stride must be >= 1");
  detail::require(groups >= 1, "conv2d: groups must be >= 1");
  const std::size_t c_in = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t c_out = weight.shape()[0], c_per_g = weight.shape()[1], kh = weight.shape()[2],
                    kw = weight.shape()[3];
  detail::require(c_in % groups == 0 && c_out % groups == 0,
                  "conv2d: channels (" + std::to_string(c_in) + "->" + std::to_string(c_out) +
                      ") not divisible by groups " + std::to_string(groups));
  detail::require(c_per_g == c_in / groups,
                  "conv2d: weight expects " + std::to_string(c_per_g) + " channels per group, input provides " +
                      std::to_string(c_in / groups));
  if (bias.defined())
    detail::require(bias.numel() == c_out, "conv2d: bias size " + std::to_string(bias.numel()) +
                                               " != C_out " + std::to_string(c_out));
  detail::require(h + 2 * padding >= kh && w + 2 * padding >= kw,
                  "conv2d: kernel larger than padded input");
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  const std::size_t out_per_g = c_out / groups;

  std::vector<double> out(c_out * oh * ow, 0.0);
  const auto& in = input.data();
  const auto& wt = weight.data();
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    const std::size_t g = oc / out_per_g;
    const double b = bias.defined() ? bias.data()[oc] : 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b;
        for (std::size_t ic = 0; ic < c_per_g; ++ic) {
          const std::size_t in_c = g * c_per_g + ic;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += wt[((oc * c_per_g + ic) * kh + ky) * kw + kx] *
                     in[(in_c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
          }
        }
        out[(oc * oh + oy) * ow + ox] = acc;
      }
  }

  std::vector<std::shared_ptr<detail::TensorNode>> parents = {input.node_ptr(), weight.node_ptr()};
  if (bias.defined()) parents.push_back(bias.node_ptr());
  return detail::make_result(
      "conv2d", {c_out, oh, ow}, std::move(out), std::move(parents),
      [c_in, h, w, c_out, c_per_g, kh, kw, oh, ow, stride, padding, out_per_g](detail::TensorNode& nd) {
        auto& pin = *nd.parents[0];
        auto& pwt = *nd.parents[1];
        detail::TensorNode* pbias = nd.parents.size() > 2 ? nd.parents[2].get() : nullptr;
        if (pin.requires_grad) pin.ensure_grad();
        if (pwt.requires_grad) pwt.ensure_grad();
        if (pbias && pbias->requires_grad) pbias->ensure_grad();
        for (std::size_t oc = 0; oc < c_out; ++oc) {
          const std::size_t g = oc / out_per_g;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const double go = nd.grad[(oc * oh + oy) * ow + ox];
              if (go == 0.0) continue;
              if (pbias && pbias->requires_grad) pbias->grad[oc] += go;
              for (std::size_t ic = 0; ic < c_per_g; ++ic) {
                const std::size_t in_c = g * c_per_g + ic;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                  const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(padding);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                              static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t in_idx =
                        (in_c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
                    const std::size_t w_idx = ((oc * c_per_g + ic) * kh + ky) * kw + kx;
                    if (pin.requires_grad) pin.grad[in_idx] += go * pwt.data[w_idx];
                    if (pwt.requires_grad) pwt.grad[w_idx] += go * pin.data[in_idx];
                  }
                }
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// classification losses
// ---------------------------------------------------------------------------

// Mean over rows of (logsumexp(z) - z[label]); softmax cross-entropy with
// logits, stabilized by row-max subtraction.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  detail::require_2d(logits, "softmax_cross_entropy", "logits");
  detail::require(labels.size() == logits.rows(),
                  "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(logits.rows()) + " rows");
  const std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t lab : labels)
    detail::require(lab < c, "softmax_cross_entropy: label " + std::to_string(lab) +
                                 " out of range for " + std::to_string(c) + " classes");
  double total = 0.0;
  std::vector<double> probs(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = logits.data().data() + r * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(row[j] - mx);
      sum += probs[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= sum;
    total += std::log(sum) + mx - row[labels[r]];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_result("softmax_cross_entropy", {1, 1}, {total * inv_n}, {logits.node_ptr()},
                             [labels, n, c, probs, inv_n](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               const double g = nd.grad[0] * inv_n;
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t j = 0; j < c; ++j)
                                   p.grad[r * c + j] +=
                                       g * (probs[r * c + j] - (labels[r] == j ? 1.0 : 0.0));
                             });
}

// Mean over all entries of the stabilized binary cross-entropy with logits:
// max(z,0) - z*t + log(1 + exp(-|z|)).
inline Tensor sigmoid_bce(const Tensor& logits, const Tensor& targets) {
  detail::require(logits.shape() == targets.shape(),
                  "sigmoid_bce: shape mismatch " + shape_str(logits.shape()) + " vs " +
                      shape_str(targets.shape()));
  const std::size_t n = logits.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.data()[i], t = targets.data()[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return detail::make_result("sigmoid_bce", {1, 1}, {total * inv_n},
                             {logits.node_ptr(), targets.node_ptr()},
                             [n, inv_n](detail::TensorNode& nd) {
                               auto& p = *nd.parents[0];
                               auto& t = *nd.parents[1];
                               if (!p.requires_grad) return;
                               p.ensure_grad();
                               const double g = nd.grad[0] * inv_n;
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double sig = 1.0 / (1.0 + std::exp(-p.data[i]));
                                 p.grad[i] += g * (sig - t.data[i]);
                               }
                             });
}

}  // namespace asda
