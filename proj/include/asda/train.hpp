#pragma once

// Pretraining and fine-tuning loops. One pretraining step runs exactly one
// teacher forward per utterance, n_clones masked student forwards against
// distinct plans, averages the per-clone totals into a single scalar (so
// clone-gradient averaging is the gradient of the averaged loss), takes one
// Adam step and one EMA update. Per-step metrics stream as one JSON object
// per line: {step, lr, loss_total, loss_utt, loss_frame}.

#include <ostream>

#include "asda/fbank.hpp"
#include "asda/model.hpp"
#include "asda/optim.hpp"
#include "asda/synthetic.hpp"

namespace asda {

struct StepMetrics {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

inline std::vector<Sample> prepare_samples(const std::vector<SyntheticClip>& clips,
                                           const RunConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(clips.size());
  for (const auto& clip : clips)
    out.push_back(make_sample(compute_fbank(clip.wave, cfg.fbank), cfg, clip.label));
  return out;
}

inline void zero_param_grads(ParamMap& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// One optimization step over a batch. Returns the batch-mean loss breakdown.
inline LossBreakdown pretrain_step(AsdaModel& model, TeacherState& teacher,
                                   const std::vector<const Sample*>& batch, ParamMap& params,
                                   AdamState& opt_state, double lr, std::uint64_t step_seed) {
  detail::require(!batch.empty(), "pretrain_step: empty batch");
  const RunConfig& cfg = model.cfg;
  const double inv_views = 1.0 / static_cast<double>(batch.size() * cfg.n_clones);

  Tensor total_acc, utt_acc, frame_acc;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& s = *batch[b];
    TeacherForwardOut t_out = teacher_forward(teacher, s);
    Tensor targets = frame_targets(t_out, s, cfg);

    auto plans = make_clones(s.grid.n_tokens(), cfg.pretrain_mask_ratio, cfg.block_size,
                             cfg.n_clones, derive_seed(step_seed, b));
    // The utterance pool always uses the unnormalized layer average:
    // instance-normalized targets are zero-mean per column by construction,
    // which would pin GAP at the zero vector and hollow out the loss.
    Tensor utt_targets = teacher_targets(t_out.enc, t_out.cls_index, false);

    for (const MaskPlan& plan : plans) {
      StudentViewOut view = student_masked_forward(model, s, plan);
      Tensor u = utterance_loss(view.cls_out, utt_targets);
      Tensor f = frame_loss(view.pred, targets, plan, cfg.frame_loss_mode);
      Tensor tot = total_loss(u, f, cfg.alpha);
      total_acc = total_acc.defined() ? add(total_acc, tot) : tot;
      utt_acc = utt_acc.defined() ? add(utt_acc, u) : u;
      frame_acc = frame_acc.defined() ? add(frame_acc, f) : f;
    }
  }
  Tensor loss = scalar_multiply(total_acc, inv_views);

  zero_param_grads(params);
  backward(loss);
  adam_step(params, opt_state, lr, cfg.optim);
  ema_update(teacher, model);

  LossBreakdown out;
  out.alpha = cfg.alpha;
  out.utterance = utt_acc.value() * inv_views;
  out.frame = frame_acc.value() * inv_views;
  // recombine from the reported components so the decomposition is exact;
  // differs from loss.value() only by summation-order round-off
  out.total = cfg.alpha * out.utterance + out.frame;
  return out;
}

inline void write_metrics_line(std::ostream& os, const StepMetrics& m) {
  os << "{\"step\":" << m.step << ",\"lr\":" << m.lr << ",\"loss_total\":" << m.loss.total
     << ",\"loss_utt\":" << m.loss.utterance << ",\"loss_frame\":" << m.loss.frame << "}\n";
}

struct PretrainResult {
  std::vector<StepMetrics> history;
  std::size_t teacher_forwards = 0;
};

// Deterministic batch cycling over the dataset; `steps` overrides the
// epoch-derived count when nonzero.
inline PretrainResult pretrain_run(AsdaModel& model, TeacherState& teacher,
                                   const std::vector<Sample>& dataset, std::size_t steps,
                                   std::ostream* metrics = nullptr) {
  detail::require(!dataset.empty(), "pretrain_run: empty dataset");
  const RunConfig& cfg = model.cfg;
  const std::size_t batch_size = std::min(cfg.optim.batch_size, dataset.size());
  const std::size_t steps_per_epoch = (dataset.size() + batch_size - 1) / batch_size;
  const std::size_t total_steps = steps ? steps : steps_per_epoch * cfg.optim.total_epochs;
  const std::size_t warmup_steps =
      std::min(total_steps,
               static_cast<std::size_t>(cfg.optim.warmup_epochs * static_cast<double>(steps_per_epoch)));

  ParamMap params = model.pretrain_params();
  AdamState opt_state;
  opt_state.reset(params);

  PretrainResult result;
  for (std::size_t step = 1; step <= total_steps; ++step) {
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < batch_size; ++i)
      batch.push_back(&dataset[((step - 1) * batch_size + i) % dataset.size()]);
    const double lr = cosine_warmup_lr(step, total_steps, warmup_steps, cfg.optim.peak_lr);
    StepMetrics m;
    m.step = step;
    m.lr = lr;
    m.loss = pretrain_step(model, teacher, batch, params, opt_state, lr,
                           derive_seed(cfg.seed, step));
    if (metrics) write_metrics_line(*metrics, m);
    result.history.push_back(m);
  }
  result.teacher_forwards = teacher.forward_count;
  return result;
}

// ---------------------------------------------------------------------------
// fine-tuning
// ---------------------------------------------------------------------------

// One supervised step: masked CLS readout through the linear head, softmax
// cross-entropy, full backprop through encoder and head.
inline double finetune_step(AsdaModel& model, const std::vector<const Sample*>& batch,
                            ParamMap& params, AdamState& opt_state, double lr,
                            std::uint64_t step_seed) {
  detail::require(!batch.empty(), "finetune_step: empty batch");
  const RunConfig& cfg = model.cfg;
  std::vector<Tensor> logit_rows;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& s = *batch[b];
    detail::require(s.label >= 0, "finetune_step: unlabeled sample in batch");
    detail::require(static_cast<std::size_t>(s.label) < cfg.n_classes,
                    "finetune_step: label " + std::to_string(s.label) + " outside " +
                        std::to_string(cfg.n_classes) + " classes");
    if (cfg.finetune_mask_ratio > 0.0) {
      MaskPlan plan = block_mask(s.grid.n_tokens(), cfg.finetune_mask_ratio, cfg.block_size,
                                 derive_seed(step_seed, b));
      logit_rows.push_back(classification_logits(model, s, &plan));
    } else {
      logit_rows.push_back(classification_logits(model, s, nullptr));
    }
    labels.push_back(static_cast<std::size_t>(s.label));
  }
  Tensor logits = logit_rows.size() == 1 ? logit_rows[0] : concat_rows(logit_rows);
  Tensor loss = softmax_cross_entropy(logits, labels);

  zero_param_grads(params);
  backward(loss);
  adam_step(params, opt_state, lr, cfg.optim);
  return loss.value();
}

struct FinetuneResult {
  std::vector<double> losses;
};

inline FinetuneResult finetune_run(AsdaModel& model, const std::vector<Sample>& dataset,
                                   std::size_t steps, std::ostream* metrics = nullptr) {
  detail::require(!dataset.empty(), "finetune_run: empty dataset");
  const RunConfig& cfg = model.cfg;
  const std::size_t batch_size = std::min(cfg.optim.batch_size, dataset.size());
  const std::size_t steps_per_epoch = (dataset.size() + batch_size - 1) / batch_size;
  const std::size_t total_steps = steps ? steps : steps_per_epoch * cfg.optim.total_epochs;
  const std::size_t warmup_steps =
      std::min(total_steps,
               static_cast<std::size_t>(cfg.optim.warmup_epochs * static_cast<double>(steps_per_epoch)));
  const double peak = cfg.optim.peak_lr * cfg.finetune_lr_scale;

  ParamMap params = model.finetune_params();
  AdamState opt_state;
  opt_state.reset(params);

  FinetuneResult result;
  for (std::size_t step = 1; step <= total_steps; ++step) {
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < batch_size; ++i)
      batch.push_back(&dataset[((step - 1) * batch_size + i) % dataset.size()]);
    const double lr = cosine_warmup_lr(step, total_steps, warmup_steps, peak);
    const double loss =
        finetune_step(model, batch, params, opt_state, lr, derive_seed(cfg.seed ^ 0xf17e57a9ULL, step));
    if (metrics)
      *metrics << "{\"step\":" << step << ",\"lr\":" << lr << ",\"loss\":" << loss << "}\n";
    result.losses.push_back(loss);
  }
  return result;
}

// Unmasked evaluation pass; returns predicted labels and raw score rows.
struct EvalOutput {
  std::vector<std::size_t> predicted;
  std::vector<std::vector<double>> scores;  // per sample, n_classes logits
};

inline EvalOutput evaluate(const AsdaModel& model, const std::vector<Sample>& dataset) {
  NoGradGuard ng;
  EvalOutput out;
  for (const Sample& s : dataset) {
    Tensor logits = classification_logits(model, s, nullptr);
    const auto& row = logits.data();
    out.scores.push_back(row);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out.predicted.push_back(best);
  }
  return out;
}

}  // namespace asda
