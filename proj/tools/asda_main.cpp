// asda: self-supervised audio learner with differential attention.
//
// Subcommands: pretrain, finetune, eval, featurize, gradcheck, inspect-attn.
// Exit codes: 0 success, 1 numeric failure, 2 bad flags or invalid config.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "asda/asda.hpp"

namespace {

using namespace asda;

struct CommonOpts {
  std::string preset = "desk";
  std::string config_path;
  std::uint64_t seed = 0;
  double lambda = -1.0;      // <0 = keep preset value
  double alpha = -1.0;
  double mask_ratio = -1.0;
  long clones = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--preset", o.preset, "configuration preset (desk or paper)");
  cmd->add_option("--config", o.config_path, "JSON config overrides");
  cmd->add_option("--seed", o.seed, "master RNG seed");
  cmd->add_option("--lambda", o.lambda, "differential coefficient");
  cmd->add_option("--alpha", o.alpha, "utterance loss weight");
  cmd->add_option("--mask-ratio", o.mask_ratio, "pretraining mask ratio");
  cmd->add_option("--clones", o.clones, "masked student views per utterance");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = preset_by_name(o.preset);
  if (!o.config_path.empty()) cfg = load_config_file(o.config_path, cfg);
  cfg.seed = o.seed;
  if (o.lambda >= 0.0) cfg.lambda = o.lambda;
  if (o.alpha >= 0.0) cfg.alpha = o.alpha;
  if (o.mask_ratio >= 0.0) cfg.pretrain_mask_ratio = o.mask_ratio;
  if (o.clones > 0) cfg.n_clones = static_cast<std::size_t>(o.clones);
  cfg.validate();
  return cfg;
}

std::vector<Sample> load_wav_manifest(const std::string& path, const RunConfig& cfg,
                                      bool labeled) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  std::vector<Sample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::string wav = line;
    int label = -1;
    if (labeled) {
      const auto sep = line.find_last_of(" \t");
      if (sep == std::string::npos)
        throw std::runtime_error("manifest line missing label: " + line);
      wav = line.substr(0, sep);
      label = std::stoi(line.substr(sep + 1));
    }
    samples.push_back(make_sample(compute_fbank(load_wav(wav), cfg.fbank), cfg, label));
  }
  if (samples.empty()) throw std::runtime_error("manifest " + path + " lists no clips");
  return samples;
}

std::vector<Sample> synthetic_samples(const RunConfig& cfg, std::size_t clips,
                                      std::uint64_t seed) {
  return prepare_samples(synth_dataset(clips, cfg.n_classes, seed), cfg);
}

std::ostream& metrics_stream(const std::string& path, std::ofstream& file) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw std::runtime_error("cannot open metrics log " + path);
  return file;
}

int run_pretrain(const CommonOpts& common, bool synthetic, std::size_t clips,
                 const std::string& manifest, std::size_t steps, const std::string& out,
                 const std::string& metrics_path) {
  RunConfig cfg = resolve_config(common);
  std::vector<Sample> dataset = synthetic ? synthetic_samples(cfg, clips, cfg.seed)
                                          : load_wav_manifest(manifest, cfg, false);
  AsdaModel model = AsdaModel::init(cfg, cfg.seed);
  TeacherState teacher = TeacherState::from_student(model);

  std::ofstream file;
  std::ostream& os = metrics_stream(metrics_path, file);
  PretrainResult res = pretrain_run(model, teacher, dataset, steps, &os);
  for (const auto& m : res.history)
    if (!std::isfinite(m.loss.total)) {
      std::cerr << "pretrain: loss diverged at step " << m.step << "\n";
      return 1;
    }
  if (!out.empty()) save_checkpoint(out, model, res.history.size());
  std::cerr << "pretrain: " << res.history.size() << " steps, final loss "
            << (res.history.empty() ? 0.0 : res.history.back().loss.total) << ", checkpoint "
            << (out.empty() ? "(none)" : out) << "\n";
  return 0;
}

int run_finetune(const CommonOpts& common, const std::string& checkpoint, bool synthetic,
                 std::size_t clips, const std::string& manifest, std::size_t steps,
                 const std::string& out, const std::string& metrics_path, bool from_scratch) {
  if (!from_scratch && checkpoint.empty())
    throw std::invalid_argument("finetune needs --checkpoint (or --from-scratch)");
  AsdaModel model = [&] {
    if (!from_scratch) {
      LoadedCheckpoint loaded = load_checkpoint(checkpoint);
      return std::move(loaded.model);
    }
    return AsdaModel::init(resolve_config(common), common.seed);
  }();
  // CLI overrides still apply on top of the checkpoint config
  if (common.lambda >= 0.0) model.cfg.lambda = common.lambda;
  if (common.alpha >= 0.0) model.cfg.alpha = common.alpha;
  model.cfg.seed = common.seed;

  std::vector<Sample> dataset = synthetic
                                    ? synthetic_samples(model.cfg, clips, model.cfg.seed)
                                    : load_wav_manifest(manifest, model.cfg, true);
  for (const auto& s : dataset)
    if (s.label < 0) throw std::runtime_error("finetune requires labeled clips");

  std::ofstream file;
  std::ostream& os = metrics_stream(metrics_path, file);
  FinetuneResult res = finetune_run(model, dataset, steps, &os);
  for (double l : res.losses)
    if (!std::isfinite(l)) {
      std::cerr << "finetune: loss diverged\n";
      return 1;
    }
  if (!out.empty()) save_checkpoint(out, model, res.losses.size());
  std::cerr << "finetune: " << res.losses.size() << " steps, final loss "
            << (res.losses.empty() ? 0.0 : res.losses.back()) << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint, bool synthetic, std::size_t clips,
             std::uint64_t seed, const std::string& manifest) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const RunConfig& cfg = loaded.model.cfg;
  std::vector<Sample> dataset =
      synthetic ? synthetic_samples(cfg, clips, seed) : load_wav_manifest(manifest, cfg, true);

  EvalOutput out = evaluate(loaded.model, dataset);
  std::vector<std::size_t> truth;
  for (const auto& s : dataset) truth.push_back(static_cast<std::size_t>(s.label));
  const double acc = accuracy(out.predicted, truth);

  // one-hot labels against logit scores for a single-label mAP
  const std::size_t n = dataset.size(), c = cfg.n_classes;
  std::vector<double> scores(n * c);
  std::vector<std::uint8_t> onehot(n * c, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) scores[i * c + j] = out.scores[i][j];
    onehot[i * c + truth[i]] = 1;
  }
  MapResult map = mean_average_precision(scores, onehot, n, c);

  nlohmann::json j;
  j["n"] = n;
  j["accuracy"] = acc;
  j["map"] = map.map;
  j["evaluated_classes"] = map.evaluated_classes;
  j["skipped_classes"] = map.skipped_classes;
  std::cout << j.dump() << "\n";
  return 0;
}

int run_featurize(const std::string& in, const std::string& out, const CommonOpts& common) {
  RunConfig cfg = resolve_config(common);
  save_fbnk(out, compute_fbank(load_wav(in), cfg.fbank));
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed ? seed : 1234);
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 20;
  double worst = 0.0;
  auto report = [&worst](const char* what, double err) {
    std::cout << what << ": max relative error " << err << "\n";
    worst = std::max(worst, err);
  };

  {  // differential attention block
    DiffAttnParams p = DiffAttnParams::init(16, 4, 0.3, rng, 0.3);
    Tensor z = Tensor::randn({6, 16}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      DiffAttnParams q = p;
      q.w_q = xs[0];
      q.w_k = xs[1];
      q.w_v = xs[2];
      q.w_o = xs[3];
      return l2_norm_squared(multi_head_diff(z, q));
    };
    report("attention",
           grad_check(f, {p.w_q.detach(), p.w_k.detach(), p.w_v.detach(), p.w_o.detach()}, opts));
  }
  {  // full encoder layer
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.model_dim = 16;
    cfg.heads = 4;
    EncoderParams p = EncoderParams::init(cfg, rng, 0.2);
    Tensor x = Tensor::randn({5, 16}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      return l2_norm_squared(encoder_layer(xs[0], p.layers[0]));
    };
    report("encoder_layer", grad_check(f, {x}, opts));
  }
  {  // grouped-conv decoder
    DecoderConfig cfg;
    cfg.channels = 16;
    cfg.groups = 4;
    cfg.target_width = 16;
    DecoderParams p = DecoderParams::init(cfg, rng, 0.2);
    Tensor tokens = Tensor::randn({12, 16}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      DecoderParams q = p;
      q.conv_w[0] = xs[1];
      return l2_norm_squared(decode(tokens_to_grid(xs[0], 3, 4), q));
    };
    report("decoder", grad_check(f, {tokens, p.conv_w[0].detach()}, opts));
  }
  {  // composed total loss on a tiny model
    RunConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.n_layers = 2;
    cfg.decoder_layers = 2;
    cfg.decoder_groups = 4;
    AsdaModel model = AsdaModel::init(cfg, 42);
    TeacherState teacher = TeacherState::from_student(model);
    auto clips = synth_dataset(1, cfg.n_classes, 7, 0.2);
    auto samples = prepare_samples(clips, cfg);
    const Sample& s = samples[0];
    TeacherForwardOut t_out = teacher_forward(teacher, s);
    Tensor targets = frame_targets(t_out, s, cfg);
    MaskPlan plan = block_mask(s.grid.n_tokens(), 0.5, 2, 5);
    auto f = [&](const std::vector<Tensor>& xs) {
      AsdaModel m2 = model;
      m2.cls = xs[0];
      m2.patch_proj = xs[1];
      StudentViewOut view = student_masked_forward(m2, s, plan);
      return total_loss(utterance_loss(view.cls_out, targets),
                        frame_loss(view.pred, targets, plan), cfg.alpha);
    };
    report("total_loss", grad_check(f, {model.cls.detach(), model.patch_proj.detach()}, opts));
  }

  std::cout << "overall max relative error " << worst << (worst < 1e-5 ? " (pass)" : " (FAIL)")
            << "\n";
  return worst < 1e-5 ? 0 : 1;
}

int run_inspect_attn(const std::string& checkpoint, const std::string& out_dir,
                     const CommonOpts& common, std::size_t clip_seconds_x10) {
  AsdaModel model = [&] {
    if (!checkpoint.empty()) {
      LoadedCheckpoint loaded = load_checkpoint(checkpoint);
      return std::move(loaded.model);
    }
    return AsdaModel::init(resolve_config(common), common.seed);
  }();
  std::filesystem::create_directories(out_dir);

  std::mt19937_64 rng(common.seed);
  SyntheticClip clip = synth_clip(0, rng, clip_seconds_x10 / 10.0);
  Sample s = make_sample(compute_fbank(clip.wave, model.cfg.fbank), model.cfg, clip.label);

  NoGradGuard ng;
  Tensor tokens = add(matmul(s.patches, model.patch_proj),
                      patch_positional_rows(s.grid.n_tokens(), model.cfg.model_dim));
  Tensor cls_row = add(model.cls, slice_rows(sinusoidal_pos_enc(1, model.cfg.model_dim), 0, 1));
  Tensor seq = prepend_cls(tokens, cls_row, model.cfg.cls_position);
  std::vector<AttentionTrace> traces;
  encode(seq, model.encoder, &traces);

  auto dump_blob = [&](const std::string& name, const Tensor& t) {
    std::ofstream f(out_dir + "/" + name, std::ios::binary);
    std::vector<float> f32(t.data().begin(), t.data().end());
    f.write(reinterpret_cast<const char*>(f32.data()),
            static_cast<std::streamsize>(f32.size() * sizeof(float)));
  };

  nlohmann::json manifest;
  manifest["lambda"] = model.cfg.lambda;
  manifest["heads"] = model.cfg.heads;
  manifest["layers"] = traces.size();
  manifest["rows"] = seq.rows();
  manifest["dtype"] = "f32le";
  nlohmann::json blobs = nlohmann::json::array();
  for (std::size_t l = 0; l < traces.size(); ++l) {
    for (std::size_t h = 0; h < traces[l].a.size(); ++h) {
      for (const auto& [tag, mat] :
           {std::pair<const char*, const Tensor*>{"a1", &traces[l].a1[h]},
            {"a2", &traces[l].a2[h]},
            {"a", &traces[l].a[h]}}) {
        const std::string name =
            "layer" + std::to_string(l) + "_head" + std::to_string(h) + "_" + tag + ".f32";
        dump_blob(name, *mat);
        blobs.push_back({{"file", name},
                         {"layer", l},
                         {"head", h},
                         {"kind", tag},
                         {"shape", mat->shape()}});
      }
    }
  }
  manifest["blobs"] = std::move(blobs);
  std::ofstream mf(out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  std::cerr << "inspect-attn: wrote " << manifest["blobs"].size() << " blobs to " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asda: masked teacher-student audio pretraining with differential attention"};
  app.require_subcommand(1);

  CommonOpts common;

  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining");
  bool pre_synth = false;
  std::size_t pre_clips = 200, pre_steps = 0;
  std::string pre_manifest, pre_out = "asda_pretrained", pre_metrics;
  add_common(pre, common);
  pre->add_flag("--synthetic", pre_synth, "train on generated tone/chirp/noise clips");
  pre->add_option("--clips", pre_clips, "synthetic clip count");
  pre->add_option("--manifest", pre_manifest, "text file of WAV paths, one per line");
  pre->add_option("--steps", pre_steps, "step count (0 = epochs * dataset)");
  pre->add_option("--out", pre_out, "checkpoint path prefix");
  pre->add_option("--metrics", pre_metrics, "JSONL metrics path (default stdout)");

  auto* fin = app.add_subcommand("finetune", "supervised fine-tuning from a checkpoint");
  bool fin_synth = false, fin_scratch = false;
  std::size_t fin_clips = 200, fin_steps = 0;
  std::string fin_ckpt, fin_manifest, fin_out = "asda_finetuned", fin_metrics;
  add_common(fin, common);
  fin->add_option("--checkpoint", fin_ckpt, "pretrained checkpoint prefix");
  fin->add_flag("--synthetic", fin_synth, "fine-tune on the synthetic toy task");
  fin->add_flag("--from-scratch", fin_scratch, "skip the checkpoint and random-init");
  fin->add_option("--clips", fin_clips, "synthetic clip count");
  fin->add_option("--manifest", fin_manifest, "labeled manifest: 'path label' per line");
  fin->add_option("--steps", fin_steps, "step count (0 = epochs * dataset)");
  fin->add_option("--out", fin_out, "checkpoint path prefix");
  fin->add_option("--metrics", fin_metrics, "JSONL metrics path (default stdout)");

  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
  bool ev_synth = false;
  std::size_t ev_clips = 100;
  std::uint64_t ev_seed = 1;
  std::string ev_ckpt, ev_manifest;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint prefix")->required();
  ev->add_flag("--synthetic", ev_synth, "evaluate on generated clips");
  ev->add_option("--clips", ev_clips, "synthetic clip count");
  ev->add_option("--seed", ev_seed, "synthetic eval seed");
  ev->add_option("--manifest", ev_manifest, "labeled manifest");

  auto* feat = app.add_subcommand("featurize", "WAV -> FBNK log-mel dump");
  std::string feat_in, feat_out;
  add_common(feat, common);
  feat->add_option("--in", feat_in, "input WAV")->required();
  feat->add_option("--out", feat_out, "output FBNK path")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification suite");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "RNG seed");

  auto* insp = app.add_subcommand("inspect-attn", "dump attention maps for offline plotting");
  std::string insp_ckpt, insp_out = "attn_dump";
  std::size_t insp_len = 10;  // tenths of a second
  add_common(insp, common);
  insp->add_option("--checkpoint", insp_ckpt, "checkpoint prefix (omit for a fresh model)");
  insp->add_option("--out", insp_out, "output directory");
  insp->add_option("--clip-tenths", insp_len, "synthetic probe clip length in 0.1 s units");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (pre->parsed())
      return run_pretrain(common, pre_synth, pre_clips, pre_manifest, pre_steps, pre_out,
                          pre_metrics);
    if (fin->parsed())
      return run_finetune(common, fin_ckpt, fin_synth, fin_clips, fin_manifest, fin_steps,
                          fin_out, fin_metrics, fin_scratch);
    if (ev->parsed()) return run_eval(ev_ckpt, ev_synth, ev_clips, ev_seed, ev_manifest);
    if (feat->parsed()) return run_featurize(feat_in, feat_out, common);
    if (gc->parsed()) return run_gradcheck(gc_seed);
    if (insp->parsed()) return run_inspect_attn(insp_ckpt, insp_out, common, insp_len);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
