#pragma once

// Differential transformer encoder: L x { x + MHDiff(LN(x)); then
// + FFN(LN(.)) } with pre-norm residual wiring. FFN is
// Linear(D -> ffn_hidden) -> GeLU -> Linear(-> D). All per-layer outputs are
// kept (the teacher averages them); the `final` output applies an optional
// trailing layer-norm and is what the CLS readout and fine-tuning consume.
//
// prepend_cls is a pure insertion: positional encodings, including the CLS
// row's own (table row 0 in head mode, the insertion index in middle mode),
// are the caller's responsibility. See model.hpp for the assembly.

#include "asda/attention.hpp"
#include "asda/ops.hpp"

namespace asda {

enum class ClsPosition { kHead, kMiddle };

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 0;  // 0 means 4 * model_dim
  double lambda = 0.3;
  std::size_t scale_dim = 0;  // d in 1/sqrt(d); 0 means per-head dim
  ClsPosition cls_position = ClsPosition::kHead;
  bool final_layer_norm = true;

  std::size_t ffn_dim() const { return ffn_hidden ? ffn_hidden : 4 * model_dim; }
  void validate() const {
    detail::require(n_layers >= 1, "EncoderConfig: need at least one layer");
    detail::require(heads >= 1 && model_dim % heads == 0,
                    "EncoderConfig: model dim " + std::to_string(model_dim) +
                        " not divisible by " + std::to_string(heads) + " heads");
  }
};

struct EncoderLayerParams {
  DiffAttnParams attn;
  Tensor ln1_gain, ln1_bias;  // before attention
  Tensor ln2_gain, ln2_bias;  // before FFN
  Tensor ffn_w1, ffn_b1;      // (D, ffn), (1, ffn)
  Tensor ffn_w2, ffn_b2;      // (ffn, D), (1, D)
};

struct EncoderParams {
  EncoderConfig cfg;
  std::vector<EncoderLayerParams> layers;
  Tensor final_gain, final_bias;

  static EncoderParams init(const EncoderConfig& cfg, std::mt19937_64& rng, double stddev = 0.02) {
    cfg.validate();
    EncoderParams p;
    p.cfg = cfg;
    const std::size_t d = cfg.model_dim, f = cfg.ffn_dim();
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      EncoderLayerParams lp;
      lp.attn = DiffAttnParams::init(d, cfg.heads, cfg.lambda, rng, stddev);
      lp.attn.scale_dim = cfg.scale_dim;
      lp.ln1_gain = Tensor({1, d}, 1.0, true);
      lp.ln1_bias = Tensor({1, d}, 0.0, true);
      lp.ln2_gain = Tensor({1, d}, 1.0, true);
      lp.ln2_bias = Tensor({1, d}, 0.0, true);
      lp.ffn_w1 = Tensor::randn({d, f}, rng, stddev, true);
      lp.ffn_b1 = Tensor({1, f}, 0.0, true);
      lp.ffn_w2 = Tensor::randn({f, d}, rng, stddev, true);
      lp.ffn_b2 = Tensor({1, d}, 0.0, true);
      p.layers.push_back(std::move(lp));
    }
    p.final_gain = Tensor({1, d}, 1.0, true);
    p.final_bias = Tensor({1, d}, 0.0, true);
    return p;
  }
};

struct EncoderOutputs {
  std::vector<Tensor> per_layer;  // L entries, each (T+1, D), pre-final-norm
  Tensor final;                   // last layer after the optional final norm
};

// Inserts the CLS row at the front (head mode) or at floor(T/2) (middle
// mode). An undefined `tokens` stands for the empty sequence.
inline Tensor prepend_cls(const Tensor& tokens, const Tensor& cls,
                          ClsPosition pos = ClsPosition::kHead) {
  detail::require(cls.ndim() == 2 && cls.rows() == 1, "prepend_cls: cls must be a single row");
  if (!tokens.defined()) return cls;
  detail::require(tokens.cols() == cls.cols(),
                  "prepend_cls: width mismatch, tokens " + shape_str(tokens.shape()) + " vs cls " +
                      shape_str(cls.shape()));
  if (pos == ClsPosition::kHead) return concat_rows({cls, tokens});
  const std::size_t mid = tokens.rows() / 2;
  if (mid == 0) return concat_rows({cls, tokens});
  return concat_rows({slice_rows(tokens, 0, mid), cls, slice_rows(tokens, mid, tokens.rows())});
}

inline std::size_t cls_row_index(std::size_t n_tokens, ClsPosition pos) {
  return pos == ClsPosition::kHead ? 0 : n_tokens / 2;
}

inline Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p) {
  Tensor attn_in = layer_norm_affine(x, p.ln1_gain, p.ln1_bias);
  Tensor h = add(x, multi_head_diff(attn_in, p.attn));
  Tensor ffn_in = layer_norm_affine(h, p.ln2_gain, p.ln2_bias);
  Tensor ffn = add_row_bias(
      matmul(gelu(add_row_bias(matmul(ffn_in, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return add(h, ffn);
}

inline EncoderOutputs encode(const Tensor& tokens_with_cls, const EncoderParams& params,
                             std::vector<AttentionTrace>* traces = nullptr) {
  EncoderOutputs out;
  out.per_layer.reserve(params.layers.size());
  Tensor x = tokens_with_cls;
  for (const auto& layer : params.layers) {
    if (traces) {
      AttentionTrace trace;
      Tensor attn_in = layer_norm_affine(x, layer.ln1_gain, layer.ln1_bias);
      Tensor h = add(x, multi_head_diff(attn_in, layer.attn, &trace));
      Tensor ffn_in = layer_norm_affine(h, layer.ln2_gain, layer.ln2_bias);
      Tensor ffn = add_row_bias(
          matmul(gelu(add_row_bias(matmul(ffn_in, layer.ffn_w1), layer.ffn_b1)), layer.ffn_w2),
          layer.ffn_b2);
      x = add(h, ffn);
      traces->push_back(std::move(trace));
    } else {
      x = encoder_layer(x, layer);
    }
    out.per_layer.push_back(x);
  }
  out.final = params.cfg.final_layer_norm
                  ? layer_norm_affine(x, params.final_gain, params.final_bias)
                  : x;
  return out;
}

}  // namespace asda
