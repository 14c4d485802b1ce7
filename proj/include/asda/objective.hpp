#pragma once

// Pretraining targets and losses.
//
//   utterance = || cls_student - GAP(mean_l teacher_layer_l) ||^2
//   frame     = mean over selected token positions of the per-position
//               squared L2 distance to the teacher target
//   total     = alpha * utterance + frame
//
// Teacher layer outputs are optionally instance-normalized (per layer, per
// feature dimension, across tokens) before averaging; a flag disables this
// for the literal layer-average. Targets are detached: no gradient ever
// reaches teacher parameters. GAP excludes the teacher's CLS row.

#include "asda/encoder.hpp"
#include "asda/masking.hpp"
#include "asda/ops.hpp"

namespace asda {

struct LossBreakdown {
  double utterance = 0.0;
  double frame = 0.0;
  double total = 0.0;
  double alpha = 0.5;
};

enum class FrameLossMode { kMaskedOnly, kAll };

// Instance normalization across rows: each column is centered and scaled to
// unit variance over the token axis. Plain numeric transform on detached
// data.
inline Tensor instance_normalize_rows(const Tensor& x, double eps = kLayerNormEps) {
  detail::require(x.ndim() == 2, "instance_normalize_rows: expected 2-D, got " +
                                     shape_str(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(n * d);
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += x.at(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (x.at(r, c) - mu) * (x.at(r, c) - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t r = 0; r < n; ++r) out[r * d + c] = (x.at(r, c) - mu) * inv;
  }
  return Tensor::from_data({n, d}, std::move(out));
}

// Mean of the teacher's per-layer outputs with the CLS row stripped;
// detached from the graph. cls_index locates the CLS row in the (T+1, D)
// layer outputs.
inline Tensor teacher_targets(const EncoderOutputs& out, std::size_t cls_index,
                              bool normalize_layers = true) {
  detail::require(!out.per_layer.empty(), "teacher_targets: encoder returned no layers");
  const std::size_t total_rows = out.per_layer[0].rows();
  detail::require(total_rows >= 2, "teacher_targets: need at least one non-CLS token");
  detail::require(cls_index < total_rows, "teacher_targets: cls row out of range");
  const std::size_t t = total_rows - 1, d = out.per_layer[0].cols();

  std::vector<std::size_t> patch_rows;
  patch_rows.reserve(t);
  for (std::size_t r = 0; r < total_rows; ++r)
    if (r != cls_index) patch_rows.push_back(r);

  Tensor acc({t, d}, 0.0);
  for (const Tensor& layer : out.per_layer) {
    Tensor stripped = gather_rows(layer, patch_rows).detach();
    Tensor contrib = normalize_layers ? instance_normalize_rows(stripped) : stripped;
    for (std::size_t i = 0; i < acc.numel(); ++i) acc.data()[i] += contrib.data()[i];
  }
  const double inv_l = 1.0 / static_cast<double>(out.per_layer.size());
  for (double& v : acc.data()) v *= inv_l;
  return acc;
}

// Squared L2 distance between the student CLS row and the global average
// pool of the teacher targets. Differentiable through cls_student only.
inline Tensor utterance_loss(const Tensor& cls_student, const Tensor& targets) {
  detail::require(cls_student.ndim() == 2 && cls_student.rows() == 1,
                  "utterance_loss: student CLS must be a single row, got " +
                      shape_str(cls_student.shape()));
  detail::require(targets.cols() == cls_student.cols(),
                  "utterance_loss: width mismatch, CLS " + shape_str(cls_student.shape()) +
                      " vs targets " + shape_str(targets.shape()));
  Tensor gap = mean_over_rows(targets);
  return l2_norm_squared(subtract(cls_student, gap));
}

// Convenience form over raw teacher outputs. The pool always uses the
// unnormalized layer average: instance-normalized features are zero-mean
// per column, which would pin the pooled target at the zero vector.
inline Tensor utterance_loss(const Tensor& cls_student, const EncoderOutputs& teacher_out,
                             std::size_t cls_index) {
  return utterance_loss(cls_student, teacher_targets(teacher_out, cls_index, false));
}

// Mean over the selected positions of the per-position squared L2 distance.
inline Tensor frame_loss(const Tensor& pred, const Tensor& targets, const MaskPlan& plan,
                         FrameLossMode mode = FrameLossMode::kMaskedOnly) {
  detail::require(pred.shape() == targets.shape(),
                  "frame_loss: prediction " + shape_str(pred.shape()) + " vs targets " +
                      shape_str(targets.shape()));
  detail::require(pred.rows() == plan.n_tokens(),
                  "frame_loss: plan covers " + std::to_string(plan.n_tokens()) + " tokens, got " +
                      std::to_string(pred.rows()));
  if (mode == FrameLossMode::kAll) {
    return scalar_multiply(l2_norm_squared(subtract(pred, targets)),
                           1.0 / static_cast<double>(pred.rows()));
  }
  auto masked = plan.masked_indices();
  detail::require(!masked.empty(), "frame_loss: masked_only mode with an empty mask");
  Tensor diff = subtract(gather_rows(pred, masked), gather_rows(targets, masked));
  return scalar_multiply(l2_norm_squared(diff), 1.0 / static_cast<double>(masked.size()));
}

inline Tensor total_loss(const Tensor& utterance, const Tensor& frame, double alpha) {
  detail::require(alpha >= 0.0, "total_loss: alpha must be nonnegative");
  return add(scalar_multiply(utterance, alpha), frame);
}

// ---------------------------------------------------------------------------
// EMA teacher
// ---------------------------------------------------------------------------

// Named view of a parameter tree; `decay` marks weight-decay eligibility for
// the optimizer.
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool decay = true;
};
using ParamMap = std::vector<ParamRef>;

// p_teacher <- tau * p_teacher + (1 - tau) * p_student, elementwise over a
// shape-isomorphic pair of parameter lists.
inline void ema_update_params(ParamMap& teacher, const ParamMap& student, double tau) {
  detail::require(teacher.size() == student.size(),
                  "ema_update: teacher holds " + std::to_string(teacher.size()) +
                      " tensors, student " + std::to_string(student.size()));
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    detail::require(teacher[i].tensor.shape() == student[i].tensor.shape(),
                    "ema_update: shape mismatch at " + teacher[i].name + ", " +
                        shape_str(teacher[i].tensor.shape()) + " vs " +
                        shape_str(student[i].tensor.shape()));
    auto& t = teacher[i].tensor.data();
    const auto& s = student[i].tensor.data();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = tau * t[j] + (1.0 - tau) * s[j];
  }
}

}  // namespace asda
