#pragma once

// Full model assembly: frontend projection, CLS and mask embeddings,
// differential encoder, CNN decoder and the linear head, plus the EMA
// teacher mirror and the forward passes that wire them together.
//
// Positional scheme: patch token p carries sinusoidal table row p + 1; the
// CLS row carries table row 0 in head mode and its insertion index in
// middle mode, added before the (pure-insertion) prepend.
//
// The teacher mirror covers everything its forward touches: the patch
// projection (and optional front conv), the CLS embedding and the encoder
// stack. Decoder, mask embedding and head stay student-only.

#include "asda/config.hpp"
#include "asda/decoder.hpp"
#include "asda/encoder.hpp"
#include "asda/frontend.hpp"
#include "asda/masking.hpp"
#include "asda/objective.hpp"

namespace asda {

// One utterance prepared for training: constant patch rows plus the grid
// geometry, with the padded spectrogram kept only when the front conv needs
// to re-derive patches differentiably.
struct Sample {
  Tensor patches;    // (n_tokens, patch*patch), constant
  Tensor spec_rows;  // (padded_frames, n_mels), constant; defined iff front_conv
  PatchGrid grid;
  int label = -1;
};

inline Sample make_sample(const FbankSpectrogram& spec, const RunConfig& cfg, int label = -1) {
  Sample s;
  s.patches = extract_patches(spec, cfg.patch, s.grid);
  s.label = label;
  if (cfg.front_conv) {
    const std::size_t padded = s.grid.grid_h * cfg.patch;
    std::vector<double> rows(padded * spec.mels, 0.0);
    std::copy(spec.values.begin(), spec.values.end(), rows.begin());
    s.spec_rows = Tensor::from_data({padded, spec.mels}, std::move(rows));
  }
  return s;
}

namespace detail {

// Differentiable patch extraction from a (T, M) tensor, built from slicing.
// Only used on the front-conv path; the plain path precomputes patches.
inline Tensor patches_from_tensor(const Tensor& spec2d, std::size_t patch) {
  const std::size_t gh = spec2d.rows() / patch, gw = spec2d.cols() / patch;
  std::vector<Tensor> rows;
  rows.reserve(gh * gw);
  for (std::size_t gt = 0; gt < gh; ++gt) {
    Tensor band = slice_rows(spec2d, gt * patch, (gt + 1) * patch);
    for (std::size_t gf = 0; gf < gw; ++gf)
      rows.push_back(reshape(slice_cols(band, gf * patch, (gf + 1) * patch), {1, patch * patch}));
  }
  return concat_rows(rows);
}

}  // namespace detail

struct AsdaModel {
  RunConfig cfg;
  Tensor patch_proj;  // (patch*patch, D)
  Tensor front_conv_w, front_conv_b;  // (1, 1, 3, 3), (1); defined iff cfg.front_conv
  Tensor cls;         // (1, D)
  Tensor mask_embed;  // (1, D)
  EncoderParams encoder;
  DecoderParams decoder;
  Tensor head_w;  // (D, n_classes), zero-initialized
  Tensor head_b;  // (1, n_classes)

  static AsdaModel init(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    AsdaModel m;
    m.cfg = cfg;
    m.patch_proj = Tensor::randn({cfg.patch * cfg.patch, cfg.model_dim}, rng, 0.02, true);
    if (cfg.front_conv) {
      m.front_conv_w = Tensor::randn({1, 1, 3, 3}, rng, 0.02, true);
      m.front_conv_b = Tensor({1}, 0.0, true);
      // identity-leaning start: center tap at 1 so features begin unchanged
      m.front_conv_w.data()[4] += 1.0;
    }
    m.cls = Tensor::randn({1, cfg.model_dim}, rng, 0.02, true);
    m.mask_embed = Tensor::randn({1, cfg.model_dim}, rng, 0.02, true);
    m.encoder = EncoderParams::init(cfg.encoder_config(), rng);
    m.decoder = DecoderParams::init(cfg.decoder_config(), rng);
    // zero head: a fresh classifier predicts the uniform distribution
    m.head_w = Tensor({cfg.model_dim, cfg.n_classes}, 0.0, true);
    m.head_b = Tensor({1, cfg.n_classes}, 0.0, true);
    return m;
  }

  ParamMap frontend_params() const {
    ParamMap out;
    out.push_back({"frontend.patch_proj", patch_proj, true});
    if (cfg.front_conv) {
      out.push_back({"frontend.conv.weight", front_conv_w, true});
      out.push_back({"frontend.conv.bias", front_conv_b, true});
    }
    return out;
  }

  ParamMap encoder_params() const {
    ParamMap out;
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
      const auto& layer = encoder.layers[l];
      const std::string base = "encoder.layer" + std::to_string(l) + ".";
      out.push_back({base + "attn.w_q", layer.attn.w_q, true});
      out.push_back({base + "attn.w_k", layer.attn.w_k, true});
      out.push_back({base + "attn.w_v", layer.attn.w_v, true});
      out.push_back({base + "attn.w_o", layer.attn.w_o, true});
      out.push_back({base + "ln1.gain", layer.ln1_gain, false});
      out.push_back({base + "ln1.bias", layer.ln1_bias, false});
      out.push_back({base + "ln2.gain", layer.ln2_gain, false});
      out.push_back({base + "ln2.bias", layer.ln2_bias, false});
      out.push_back({base + "ffn.w1", layer.ffn_w1, true});
      out.push_back({base + "ffn.b1", layer.ffn_b1, true});
      out.push_back({base + "ffn.w2", layer.ffn_w2, true});
      out.push_back({base + "ffn.b2", layer.ffn_b2, true});
    }
    out.push_back({"encoder.final_ln.gain", encoder.final_gain, false});
    out.push_back({"encoder.final_ln.bias", encoder.final_bias, false});
    return out;
  }

  ParamMap decoder_params() const {
    ParamMap out;
    for (std::size_t l = 0; l < decoder.conv_w.size(); ++l) {
      out.push_back({"decoder.conv" + std::to_string(l) + ".weight", decoder.conv_w[l], true});
      out.push_back({"decoder.conv" + std::to_string(l) + ".bias", decoder.conv_b[l], true});
    }
    out.push_back({"decoder.out.weight", decoder.out_w, true});
    out.push_back({"decoder.out.bias", decoder.out_b, true});
    return out;
  }

  // Everything the teacher forward touches; EMA tracks exactly this set.
  ParamMap teacher_scope_params() const {
    ParamMap out = frontend_params();
    out.push_back({"cls", cls, false});
    ParamMap enc = encoder_params();
    out.insert(out.end(), enc.begin(), enc.end());
    return out;
  }

  ParamMap pretrain_params() const {
    ParamMap out = teacher_scope_params();
    out.push_back({"mask_embed", mask_embed, false});
    ParamMap dec = decoder_params();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
  }

  ParamMap finetune_params() const {
    ParamMap out = frontend_params();
    out.push_back({"cls", cls, false});
    ParamMap enc = encoder_params();
    out.insert(out.end(), enc.begin(), enc.end());
    out.push_back({"head.weight", head_w, true});
    out.push_back({"head.bias", head_b, true});
    return out;
  }

  ParamMap all_params() const {
    ParamMap out = pretrain_params();
    out.push_back({"head.weight", head_w, true});
    out.push_back({"head.bias", head_b, true});
    return out;
  }
};

// ---------------------------------------------------------------------------
// teacher mirror
// ---------------------------------------------------------------------------

struct TeacherState {
  RunConfig cfg;
  Tensor patch_proj;
  Tensor front_conv_w, front_conv_b;
  Tensor cls;
  EncoderParams encoder;
  double tau = 0.999;
  std::size_t update_count = 0;
  mutable std::size_t forward_count = 0;

  static TeacherState from_student(const AsdaModel& m) {
    TeacherState t;
    t.cfg = m.cfg;
    t.tau = m.cfg.tau;
    t.patch_proj = m.patch_proj.detach();
    if (m.cfg.front_conv) {
      t.front_conv_w = m.front_conv_w.detach();
      t.front_conv_b = m.front_conv_b.detach();
    }
    t.cls = m.cls.detach();
    t.encoder.cfg = m.encoder.cfg;
    for (const auto& layer : m.encoder.layers) {
      EncoderLayerParams lp;
      lp.attn.lambda = layer.attn.lambda;
      lp.attn.heads = layer.attn.heads;
      lp.attn.scale_dim = layer.attn.scale_dim;
      lp.attn.w_q = layer.attn.w_q.detach();
      lp.attn.w_k = layer.attn.w_k.detach();
      lp.attn.w_v = layer.attn.w_v.detach();
      lp.attn.w_o = layer.attn.w_o.detach();
      lp.ln1_gain = layer.ln1_gain.detach();
      lp.ln1_bias = layer.ln1_bias.detach();
      lp.ln2_gain = layer.ln2_gain.detach();
      lp.ln2_bias = layer.ln2_bias.detach();
      lp.ffn_w1 = layer.ffn_w1.detach();
      lp.ffn_b1 = layer.ffn_b1.detach();
      lp.ffn_w2 = layer.ffn_w2.detach();
      lp.ffn_b2 = layer.ffn_b2.detach();
      t.encoder.layers.push_back(std::move(lp));
    }
    t.encoder.final_gain = m.encoder.final_gain.detach();
    t.encoder.final_bias = m.encoder.final_bias.detach();
    return t;
  }

  // Same names and order as AsdaModel::teacher_scope_params.
  ParamMap scope_params() const {
    ParamMap out;
    out.push_back({"frontend.patch_proj", patch_proj, true});
    if (cfg.front_conv) {
      out.push_back({"frontend.conv.weight", front_conv_w, true});
      out.push_back({"frontend.conv.bias", front_conv_b, true});
    }
    out.push_back({"cls", cls, false});
    for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
      const auto& layer = encoder.layers[l];
      const std::string base = "encoder.layer" + std::to_string(l) + ".";
      out.push_back({base + "attn.w_q", layer.attn.w_q, true});
      out.push_back({base + "attn.w_k", layer.attn.w_k, true});
      out.push_back({base + "attn.w_v", layer.attn.w_v, true});
      out.push_back({base + "attn.w_o", layer.attn.w_o, true});
      out.push_back({base + "ln1.gain", layer.ln1_gain, false});
      out.push_back({base + "ln1.bias", layer.ln1_bias, false});
      out.push_back({base + "ln2.gain", layer.ln2_gain, false});
      out.push_back({base + "ln2.bias", layer.ln2_bias, false});
      out.push_back({base + "ffn.w1", layer.ffn_w1, true});
      out.push_back({base + "ffn.b1", layer.ffn_b1, true});
      out.push_back({base + "ffn.w2", layer.ffn_w2, true});
      out.push_back({base + "ffn.b2", layer.ffn_b2, true});
    }
    out.push_back({"encoder.final_ln.gain", encoder.final_gain, false});
    out.push_back({"encoder.final_ln.bias", encoder.final_bias, false});
    return out;
  }
};

inline void ema_update(TeacherState& teacher, const AsdaModel& student) {
  ParamMap t = teacher.scope_params();
  ema_update_params(t, student.teacher_scope_params(), teacher.tau);
  ++teacher.update_count;
}

// ---------------------------------------------------------------------------
// forwards
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor tokens_with_positions(const Sample& s, const RunConfig& cfg, const Tensor& proj,
                                    const Tensor& conv_w, const Tensor& conv_b) {
  Tensor patch_rows;
  if (cfg.front_conv) {
    require(s.spec_rows.defined(), "forward: front_conv is on but the sample carries no spectrogram");
    Tensor grid3 = reshape(s.spec_rows, {1, s.spec_rows.rows(), s.spec_rows.cols()});
    Tensor conv = conv2d(grid3, conv_w, conv_b, 1, 1, 1);
    patch_rows = patches_from_tensor(
        reshape(conv, {s.spec_rows.rows(), s.spec_rows.cols()}), cfg.patch);
  } else {
    patch_rows = s.patches;
  }
  Tensor tokens = matmul(patch_rows, proj);
  return add(tokens, patch_positional_rows(tokens.rows(), proj.cols()));
}

// CLS row with its positional encoding added; pure insertion happens later.
inline Tensor cls_with_position(const Tensor& cls, std::size_t n_visible, const RunConfig& cfg) {
  const std::size_t pe_index = cls_row_index(n_visible, cfg.cls_position);
  Tensor table = sinusoidal_pos_enc(std::max<std::size_t>(pe_index + 1, 1), cls.cols());
  return add(cls, slice_rows(table, pe_index, pe_index + 1));
}

inline std::vector<std::size_t> non_cls_rows(std::size_t total_rows, std::size_t cls_index) {
  std::vector<std::size_t> rows;
  rows.reserve(total_rows - 1);
  for (std::size_t r = 0; r < total_rows; ++r)
    if (r != cls_index) rows.push_back(r);
  return rows;
}

}  // namespace detail

struct StudentViewOut {
  Tensor cls_out;  // (1, D)
  Tensor pred;     // (n_tokens, target_width)
};

// One masked student view: embed, drop masked tokens, encode, re-insert the
// mask embedding, decode.
inline StudentViewOut student_masked_forward(const AsdaModel& m, const Sample& s,
                                             const MaskPlan& plan) {
  Tensor tokens = detail::tokens_with_positions(s, m.cfg, m.patch_proj, m.front_conv_w,
                                                m.front_conv_b);
  Tensor visible = gather_visible(tokens, plan);
  Tensor cls_row = detail::cls_with_position(m.cls, visible.rows(), m.cfg);
  Tensor seq = prepend_cls(visible, cls_row, m.cfg.cls_position);
  EncoderOutputs enc = encode(seq, m.encoder);
  const std::size_t cls_idx = cls_row_index(visible.rows(), m.cfg.cls_position);

  StudentViewOut out;
  out.cls_out = slice_rows(enc.final, cls_idx, cls_idx + 1);
  Tensor enc_patches = gather_rows(enc.final, detail::non_cls_rows(enc.final.rows(), cls_idx));
  Tensor pos_rows = patch_positional_rows(plan.n_tokens(), m.cfg.model_dim);
  Tensor full = scatter_with_mask_token(enc_patches, plan, m.mask_embed, pos_rows);
  out.pred = decode(tokens_to_grid(full, s.grid.grid_h, s.grid.grid_w), m.decoder);
  return out;
}

struct TeacherForwardOut {
  EncoderOutputs enc;
  std::size_t cls_index = 0;
};

// Full-input teacher forward; runs without graph recording and counts calls
// for the one-teacher-pass-per-utterance contract.
inline TeacherForwardOut teacher_forward(const TeacherState& t, const Sample& s) {
  NoGradGuard ng;
  ++t.forward_count;
  Tensor tokens = detail::tokens_with_positions(s, t.cfg, t.patch_proj, t.front_conv_w,
                                                t.front_conv_b);
  Tensor cls_row = detail::cls_with_position(t.cls, tokens.rows(), t.cfg);
  Tensor seq = prepend_cls(tokens, cls_row, t.cfg.cls_position);
  TeacherForwardOut out;
  out.enc = encode(seq, t.encoder);
  out.cls_index = cls_row_index(tokens.rows(), t.cfg.cls_position);
  return out;
}

// Regression target for one utterance: teacher features (detached) or the
// raw fbank patch pixels, depending on the configured frame target.
inline Tensor frame_targets(const TeacherForwardOut& teacher_out, const Sample& s,
                            const RunConfig& cfg) {
  if (cfg.frame_target == FrameTarget::kFbankPixel) return s.patches.detach();
  return teacher_targets(teacher_out.enc, teacher_out.cls_index, cfg.normalize_teacher_targets);
}

// Classification logits from the CLS readout; `plan` optionally drops
// tokens (fine-tune masking). Masked tokens are dropped, not replaced.
inline Tensor classification_logits(const AsdaModel& m, const Sample& s, const MaskPlan* plan) {
  Tensor tokens = detail::tokens_with_positions(s, m.cfg, m.patch_proj, m.front_conv_w,
                                                m.front_conv_b);
  Tensor visible = plan ? gather_visible(tokens, *plan) : tokens;
  Tensor cls_row = detail::cls_with_position(m.cls, visible.rows(), m.cfg);
  Tensor seq = prepend_cls(visible, cls_row, m.cfg.cls_position);
  EncoderOutputs enc = encode(seq, m.encoder);
  const std::size_t cls_idx = cls_row_index(visible.rows(), m.cfg.cls_position);
  Tensor cls_out = slice_rows(enc.final, cls_idx, cls_idx + 1);
  return add_row_bias(matmul(cls_out, m.head_w), m.head_b);
}

}  // namespace asda
