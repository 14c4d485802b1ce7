#pragma once

// Run configuration: every knob in one aggregate, with desk/paper presets
// and a strict JSON loader (unknown keys are rejected so config typos fail
// loudly instead of silently using defaults).

#include <json.hpp>

#include <fstream>

#include "asda/decoder.hpp"
#include "asda/encoder.hpp"
#include "asda/fbank.hpp"
#include "asda/objective.hpp"
#include "asda/optim.hpp"

namespace asda {

enum class FrameTarget { kTeacherFeature, kFbankPixel };

struct RunConfig {
  // model
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t n_layers = 2;
  std::size_t ffn_hidden = 0;  // 0 = 4 * model_dim
  double lambda = 0.3;
  std::size_t scale_dim = 0;  // softmax scaling dim d; 0 = per-head dim
  ClsPosition cls_position = ClsPosition::kHead;
  bool final_layer_norm = true;
  bool front_conv = false;  // optional 3x3 stride-1 conv ahead of patching

  // frontend
  FbankConfig fbank;
  std::size_t patch = 16;

  // masking
  double pretrain_mask_ratio = 0.8;
  double finetune_mask_ratio = 0.2;
  std::size_t block_size = 5;
  std::size_t n_clones = 4;

  // objective
  double alpha = 0.5;
  double tau = 0.999;
  bool normalize_teacher_targets = true;
  FrameLossMode frame_loss_mode = FrameLossMode::kMaskedOnly;
  FrameTarget frame_target = FrameTarget::kTeacherFeature;

  // decoder
  std::size_t decoder_layers = 6;
  std::size_t decoder_groups = 16;

  // optimizer / schedule
  OptimConfig optim;
  double finetune_lr_scale = 0.1;

  // run
  std::uint64_t seed = 0;
  std::size_t n_classes = 4;

  static RunConfig desk();
  static RunConfig paper();

  void validate() const {
    detail::require(heads >= 1 && model_dim % heads == 0,
                    "config: model_dim " + std::to_string(model_dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    detail::require(lambda >= 0.0, "config: lambda must be nonnegative");
    detail::require(pretrain_mask_ratio >= 0.0 && pretrain_mask_ratio < 1.0,
                    "config: pretrain mask ratio must be in [0, 1)");
    detail::require(finetune_mask_ratio >= 0.0 && finetune_mask_ratio < 1.0,
                    "config: finetune mask ratio must be in [0, 1)");
    detail::require(n_clones >= 1, "config: need at least one clone");
    detail::require(tau >= 0.0 && tau <= 1.0, "config: tau must be in [0, 1]");
    detail::require(alpha >= 0.0, "config: alpha must be nonnegative");
    detail::require(model_dim % decoder_groups == 0,
                    "config: model_dim not divisible by decoder groups");
    detail::require(optim.warmup_epochs <= static_cast<double>(optim.total_epochs),
                    "config: warmup epochs exceed total epochs");
    optim.validate();
  }

  EncoderConfig encoder_config() const {
    EncoderConfig cfg;
    cfg.n_layers = n_layers;
    cfg.model_dim = model_dim;
    cfg.heads = heads;
    cfg.ffn_hidden = ffn_hidden;
    cfg.lambda = lambda;
    cfg.scale_dim = scale_dim;
    cfg.cls_position = cls_position;
    cfg.final_layer_norm = final_layer_norm;
    return cfg;
  }

  DecoderConfig decoder_config() const {
    DecoderConfig cfg;
    cfg.n_layers = decoder_layers;
    cfg.groups = decoder_groups;
    cfg.channels = model_dim;
    cfg.target_width = frame_target == FrameTarget::kTeacherFeature ? model_dim : patch * patch;
    return cfg;
  }
};

inline RunConfig RunConfig::desk() {
  RunConfig cfg;  // defaults are the desk preset
  return cfg;
}

inline RunConfig RunConfig::paper() {
  RunConfig cfg;
  cfg.model_dim = 768;
  cfg.heads = 8;
  cfg.n_layers = 12;
  cfg.lambda = 0.3;
  cfg.alpha = 0.5;
  cfg.n_clones = 16;
  cfg.optim.total_epochs = 20;
  cfg.optim.batch_size = 48;
  cfg.optim.peak_lr = 5e-4;
  return cfg;
}

inline RunConfig preset_by_name(const std::string& name) {
  if (name == "desk") return RunConfig::desk();
  if (name == "paper") return RunConfig::paper();
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper)");
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& scope,
                                std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument("config: unknown key '" + scope + key + "'");
  }
}

template <typename T>
void maybe(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

// Applies a JSON document on top of `base`. Layout mirrors the config
// groups; every section and key is optional, anything unrecognized throws.
inline RunConfig apply_config_json(const nlohmann::json& j, RunConfig base) {
  detail::reject_unknown_keys(
      j, "", {"model", "frontend", "masking", "objective", "decoder", "optim", "run"});
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown_keys(m, "model.",
                                {"dim", "heads", "layers", "ffn_hidden", "lambda", "scale_dim",
                                 "cls_position", "final_layer_norm", "front_conv"});
    detail::maybe(m, "dim", base.model_dim);
    detail::maybe(m, "heads", base.heads);
    detail::maybe(m, "layers", base.n_layers);
    detail::maybe(m, "ffn_hidden", base.ffn_hidden);
    detail::maybe(m, "lambda", base.lambda);
    detail::maybe(m, "scale_dim", base.scale_dim);
    detail::maybe(m, "final_layer_norm", base.final_layer_norm);
    detail::maybe(m, "front_conv", base.front_conv);
    if (m.contains("cls_position")) {
      const std::string pos = m.at("cls_position").get<std::string>();
      if (pos == "head")
        base.cls_position = ClsPosition::kHead;
      else if (pos == "middle")
        base.cls_position = ClsPosition::kMiddle;
      else
        throw std::invalid_argument("config: cls_position must be head or middle, got " + pos);
    }
  }
  if (j.contains("frontend")) {
    const auto& f = j.at("frontend");
    detail::reject_unknown_keys(
        f, "frontend.", {"n_mels", "fft_size", "mel_low_hz", "mel_high_hz", "log_floor",
                         "normalize", "patch"});
    detail::maybe(f, "n_mels", base.fbank.n_mels);
    detail::maybe(f, "fft_size", base.fbank.fft_size);
    detail::maybe(f, "mel_low_hz", base.fbank.mel_low_hz);
    detail::maybe(f, "mel_high_hz", base.fbank.mel_high_hz);
    detail::maybe(f, "log_floor", base.fbank.log_floor);
    detail::maybe(f, "normalize", base.fbank.normalize);
    detail::maybe(f, "patch", base.patch);
  }
  if (j.contains("masking")) {
    const auto& m = j.at("masking");
    detail::reject_unknown_keys(m, "masking.",
                                {"pretrain_ratio", "finetune_ratio", "block_size", "clones"});
    detail::maybe(m, "pretrain_ratio", base.pretrain_mask_ratio);
    detail::maybe(m, "finetune_ratio", base.finetune_mask_ratio);
    detail::maybe(m, "block_size", base.block_size);
    detail::maybe(m, "clones", base.n_clones);
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    detail::reject_unknown_keys(
        o, "objective.", {"alpha", "tau", "normalize_teacher_targets", "frame_loss_mode",
                          "frame_target"});
    detail::maybe(o, "alpha", base.alpha);
    detail::maybe(o, "tau", base.tau);
    detail::maybe(o, "normalize_teacher_targets", base.normalize_teacher_targets);
    if (o.contains("frame_loss_mode")) {
      const std::string mode = o.at("frame_loss_mode").get<std::string>();
      if (mode == "masked_only")
        base.frame_loss_mode = FrameLossMode::kMaskedOnly;
      else if (mode == "all")
        base.frame_loss_mode = FrameLossMode::kAll;
      else
        throw std::invalid_argument("config: frame_loss_mode must be masked_only or all");
    }
    if (o.contains("frame_target")) {
      const std::string tgt = o.at("frame_target").get<std::string>();
      if (tgt == "feature")
        base.frame_target = FrameTarget::kTeacherFeature;
      else if (tgt == "fbank_pixel")
        base.frame_target = FrameTarget::kFbankPixel;
      else
        throw std::invalid_argument("config: frame_target must be feature or fbank_pixel");
    }
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    detail::reject_unknown_keys(d, "decoder.", {"layers", "groups"});
    detail::maybe(d, "layers", base.decoder_layers);
    detail::maybe(d, "groups", base.decoder_groups);
  }
  if (j.contains("optim")) {
    const auto& o = j.at("optim");
    detail::reject_unknown_keys(
        o, "optim.", {"beta1", "beta2", "weight_decay", "peak_lr", "eps", "warmup_epochs",
                      "total_epochs", "batch_size", "finetune_lr_scale"});
    detail::maybe(o, "beta1", base.optim.beta1);
    detail::maybe(o, "beta2", base.optim.beta2);
    detail::maybe(o, "weight_decay", base.optim.weight_decay);
    detail::maybe(o, "peak_lr", base.optim.peak_lr);
    detail::maybe(o, "eps", base.optim.eps);
    detail::maybe(o, "warmup_epochs", base.optim.warmup_epochs);
    detail::maybe(o, "total_epochs", base.optim.total_epochs);
    detail::maybe(o, "batch_size", base.optim.batch_size);
    detail::maybe(o, "finetune_lr_scale", base.finetune_lr_scale);
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    detail::reject_unknown_keys(r, "run.", {"seed", "n_classes"});
    detail::maybe(r, "seed", base.seed);
    detail::maybe(r, "n_classes", base.n_classes);
  }
  base.validate();
  return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return apply_config_json(j, std::move(base));
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["model"] = {
      {"dim", cfg.model_dim},
      {"heads", cfg.heads},
      {"layers", cfg.n_layers},
      {"ffn_hidden", cfg.ffn_hidden},
      {"lambda", cfg.lambda},
      {"scale_dim", cfg.scale_dim},
      {"cls_position", cfg.cls_position == ClsPosition::kHead ? "head" : "middle"},
      {"final_layer_norm", cfg.final_layer_norm},
      {"front_conv", cfg.front_conv},
  };
  j["frontend"] = {
      {"n_mels", cfg.fbank.n_mels},     {"fft_size", cfg.fbank.fft_size},
      {"mel_low_hz", cfg.fbank.mel_low_hz}, {"mel_high_hz", cfg.fbank.mel_high_hz},
      {"log_floor", cfg.fbank.log_floor},   {"normalize", cfg.fbank.normalize},
      {"patch", cfg.patch},
  };
  j["masking"] = {
      {"pretrain_ratio", cfg.pretrain_mask_ratio},
      {"finetune_ratio", cfg.finetune_mask_ratio},
      {"block_size", cfg.block_size},
      {"clones", cfg.n_clones},
  };
  j["objective"] = {
      {"alpha", cfg.alpha},
      {"tau", cfg.tau},
      {"normalize_teacher_targets", cfg.normalize_teacher_targets},
      {"frame_loss_mode", cfg.frame_loss_mode == FrameLossMode::kMaskedOnly ? "masked_only" : "all"},
      {"frame_target", cfg.frame_target == FrameTarget::kTeacherFeature ? "feature" : "fbank_pixel"},
  };
  j["decoder"] = {{"layers", cfg.decoder_layers}, {"groups", cfg.decoder_groups}};
  j["optim"] = {
      {"beta1", cfg.optim.beta1},
      {"beta2", cfg.optim.beta2},
      {"weight_decay", cfg.optim.weight_decay},
      {"peak_lr", cfg.optim.peak_lr},
      {"eps", cfg.optim.eps},
      {"warmup_epochs", cfg.optim.warmup_epochs},
      {"total_epochs", cfg.optim.total_epochs},
      {"batch_size", cfg.optim.batch_size},
      {"finetune_lr_scale", cfg.finetune_lr_scale},
  };
  j["run"] = {{"seed", cfg.seed}, {"n_classes", cfg.n_classes}};
  return j;
}

}  // namespace asda
