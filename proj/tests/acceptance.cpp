// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero if any gated
// criterion fails. argv[1] is the path to the asda CLI binary (used by the
// gradcheck-CLI criterion).

#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "asda/asda.hpp"

using namespace asda;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
  bool pass = false;
  bool gated = true;
  std::string detail;
};

int g_failures = 0;

void report(int index, const std::string& name, const CriterionResult& r, double seconds) {
  std::ostringstream line;
  line << (r.gated ? (r.pass ? "[PASS] " : "[FAIL] ") : "[REPORT] ") << index << ". " << name
       << ": " << r.detail << " (" << std::fixed << std::setprecision(1) << seconds << " s)";
  std::cout << line.str() << std::endl;
  if (r.gated && !r.pass) ++g_failures;
}

template <typename F>
void run_criterion(int index, const std::string& name, F&& body) {
  const auto t0 = Clock::now();
  CriterionResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  report(index, name, r, secs);
}

// Reference standard multi-head attention over the (Q1, K1, V) path with the
// same per-head layer-norm, plain loops throughout.
std::vector<double> reference_standard_mha(const Tensor& z, const DiffAttnParams& p) {
  const std::size_t n = z.rows(), D = p.model_dim(), hd = p.head_dim();
  std::vector<double> concat(n * D, 0.0);
  for (std::size_t h = 0; h < p.heads; ++h) {
    std::vector<double> q(n * hd, 0.0), k(n * hd, 0.0), v(n * hd, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < hd; ++c)
        for (std::size_t m = 0; m < D; ++m) {
          q[i * hd + c] += z.at(i, m) * p.w_q.at(m, h * 2 * hd + c);
          k[i * hd + c] += z.at(i, m) * p.w_k.at(m, h * 2 * hd + c);
          v[i * hd + c] += z.at(i, m) * p.w_v.at(m, h * hd + c);
        }
    std::vector<double> mixed(n * hd, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> logits(n, 0.0);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < hd; ++c) logits[j] += q[i * hd + c] * k[j * hd + c];
      const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
      double mx = -1e300;
      for (double& l : logits) {
        l *= scale;
        mx = std::max(mx, l);
      }
      double sum = 0.0;
      for (double l : logits) sum += std::exp(l - mx);
      for (std::size_t j = 0; j < n; ++j) {
        const double a = std::exp(logits[j] - mx) / sum;
        for (std::size_t c = 0; c < hd; ++c) mixed[i * hd + c] += a * v[j * hd + c];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double mu = 0.0;
      for (std::size_t c = 0; c < hd; ++c) mu += mixed[i * hd + c];
      mu /= static_cast<double>(hd);
      double var = 0.0;
      for (std::size_t c = 0; c < hd; ++c)
        var += (mixed[i * hd + c] - mu) * (mixed[i * hd + c] - mu);
      var /= static_cast<double>(hd);
      const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
      for (std::size_t c = 0; c < hd; ++c)
        concat[i * D + h * hd + c] = (mixed[i * hd + c] - mu) * inv;
    }
  }
  std::vector<double> out(n * D, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t c = 0; c < D; ++c) out[i * D + j] += concat[i * D + c] * p.w_o.at(c, j);
  return out;
}

// Brute-force AP oracle (rank enumeration, same tie-break and accumulation
// order as the implementation contract).
double ap_oracle(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  struct Entry {
    std::size_t rank;
    double prec;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    std::size_t rank = 1, pos_above = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j == i) continue;
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) {
        ++rank;
        if (labels[j]) ++pos_above;
      }
    }
    entries.push_back({rank, static_cast<double>(pos_above + 1) / rank});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.rank < b.rank; });
  double ap = 0.0;
  for (const auto& e : entries) ap += e.prec;
  return ap / static_cast<double>(entries.size());
}

double mean_of(const std::vector<StepMetrics>& hist, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += hist[i].loss.total;
  return s / static_cast<double>(end - begin);
}

// ---------------------------------------------------------------------------

CriterionResult criterion_row_sums() {
  CriterionResult r;
  double worst_a12 = 0.0, worst_a = 0.0;
  for (double lambda : {0.0, 0.1, 0.3, 0.5}) {
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      std::mt19937_64 rng(1000 * static_cast<std::uint64_t>(lambda * 10 + 1) + trial);
      DiffAttnParams p = DiffAttnParams::init(32, 4, lambda, rng, 0.5);
      Tensor z = Tensor::randn({10, 32}, rng, 1.5);
      AttentionTrace trace;
      multi_head_diff(z, p, &trace);
      for (std::size_t h = 0; h < trace.a.size(); ++h)
        for (std::size_t row = 0; row < 10; ++row) {
          double s1 = 0.0, s2 = 0.0, s = 0.0;
          for (std::size_t c = 0; c < 10; ++c) {
            s1 += trace.a1[h].at(row, c);
            s2 += trace.a2[h].at(row, c);
            s += trace.a[h].at(row, c);
          }
          worst_a12 = std::max({worst_a12, std::abs(s1 - 1.0), std::abs(s2 - 1.0)});
          worst_a = std::max(worst_a, std::abs(s - (1.0 - lambda)));
        }
    }
  }
  r.pass = worst_a12 < 1e-10 && worst_a < 1e-9;
  std::ostringstream os;
  os << "max |softmax row sum - 1| = " << worst_a12 << ", max |diff row sum - (1-lambda)| = "
     << worst_a << " over 100 inputs x lambda {0, 0.1, 0.3, 0.5}";
  r.detail = os.str();
  return r;
}

CriterionResult criterion_lambda_zero_reduction() {
  CriterionResult r;
  double worst = 0.0;
  std::mt19937_64 seeds(42);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads_options[] = {1, 2, 4, 8};
    const std::size_t h = heads_options[trial % 4];
    const std::size_t d = h * (8 + (trial % 3) * 4);
    const std::size_t n = 3 + trial % 6;
    std::mt19937_64 rng(seeds());
    DiffAttnParams p = DiffAttnParams::init(d, h, 0.0, rng, 0.4);
    Tensor z = Tensor::randn({n, d}, rng);
    Tensor got = multi_head_diff(z, p);
    auto want = reference_standard_mha(z, p);
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want[i]));
  }
  r.pass = worst < 1e-12;
  std::ostringstream os;
  os << "max |diff(lambda=0) - reference standard MHA| = " << worst
     << " over 20 random configurations";
  r.detail = os.str();
  return r;
}

CriterionResult criterion_gradient_fidelity() {
  CriterionResult r;
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 12;
  std::ostringstream os;
  double worst = 0.0;

  {  // (a) differential attention block, desk width
    std::mt19937_64 rng(301);
    DiffAttnParams p = DiffAttnParams::init(64, 4, 0.3, rng, 0.2);
    Tensor z = Tensor::randn({8, 64}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      DiffAttnParams q = p;
      q.w_q = xs[0];
      q.w_k = xs[1];
      q.w_v = xs[2];
      q.w_o = xs[3];
      return l2_norm_squared(multi_head_diff(z, q));
    };
    const double err =
        grad_check(f, {p.w_q.detach(), p.w_k.detach(), p.w_v.detach(), p.w_o.detach()}, opts);
    os << "attention " << err;
    worst = std::max(worst, err);
  }
  {  // (b) full encoder layer
    std::mt19937_64 rng(302);
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.model_dim = 64;
    cfg.heads = 4;
    EncoderParams p = EncoderParams::init(cfg, rng, 0.1);
    Tensor x = Tensor::randn({6, 64}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      EncoderLayerParams lp = p.layers[0];
      lp.attn.w_q = xs[1];
      lp.ffn_w1 = xs[2];
      lp.ln1_gain = xs[3];
      return l2_norm_squared(encoder_layer(xs[0], lp));
    };
    const double err = grad_check(
        f,
        {x, p.layers[0].attn.w_q.detach(), p.layers[0].ffn_w1.detach(),
         p.layers[0].ln1_gain.detach()},
        opts);
    os << ", encoder_layer " << err;
    worst = std::max(worst, err);
  }
  {  // (c) the 6-layer grouped-conv decoder at full desk shape
    std::mt19937_64 rng(303);
    DecoderConfig cfg;  // 6 layers, 16 groups, 64 channels
    DecoderParams p = DecoderParams::init(cfg, rng, 0.15);
    Tensor tokens = Tensor::randn({56, 64}, rng);
    auto f = [&](const std::vector<Tensor>& xs) {
      DecoderParams q = p;
      q.conv_w[0] = xs[1];
      q.conv_w[5] = xs[2];
      q.out_w = xs[3];
      return l2_norm_squared(decode(tokens_to_grid(xs[0], 7, 8), q));
    };
    const double err = grad_check(
        f, {tokens, p.conv_w[0].detach(), p.conv_w[5].detach(), p.out_w.detach()}, opts);
    os << ", decoder " << err;
    worst = std::max(worst, err);
  }
  {  // (d) composed total loss on a 2-layer desk model
    RunConfig cfg = RunConfig::desk();
    cfg.seed = 304;
    AsdaModel model = AsdaModel::init(cfg, cfg.seed);
    TeacherState teacher = TeacherState::from_student(model);
    auto samples = prepare_samples(synth_dataset(1, cfg.n_classes, 305), cfg);
    const Sample& s = samples[0];
    TeacherForwardOut t_out = teacher_forward(teacher, s);
    Tensor targets = frame_targets(t_out, s, cfg);
    Tensor utt_targets = teacher_targets(t_out.enc, t_out.cls_index, false);
    MaskPlan plan = block_mask(s.grid.n_tokens(), cfg.pretrain_mask_ratio, cfg.block_size, 306);
    auto f = [&](const std::vector<Tensor>& xs) {
      AsdaModel m2 = model;
      m2.cls = xs[0];
      m2.mask_embed = xs[1];
      m2.patch_proj = xs[2];
      m2.encoder.layers[0].attn.w_q = xs[3];
      m2.encoder.layers[1].ffn_w2 = xs[4];
      m2.decoder.conv_w[0] = xs[5];
      StudentViewOut view = student_masked_forward(m2, s, plan);
      return total_loss(utterance_loss(view.cls_out, utt_targets),
                        frame_loss(view.pred, targets, plan, cfg.frame_loss_mode), cfg.alpha);
    };
    GradCheckOptions big = opts;
    big.max_coords_per_tensor = 8;
    const double err = grad_check(f,
                                  {model.cls.detach(), model.mask_embed.detach(),
                                   model.patch_proj.detach(),
                                   model.encoder.layers[0].attn.w_q.detach(),
                                   model.encoder.layers[1].ffn_w2.detach(),
                                   model.decoder.conv_w[0].detach()},
                                  big);
    os << ", total_loss " << err;
    worst = std::max(worst, err);
  }
  r.pass = worst < 1e-5;
  r.detail = "max relative errors: " + os.str() + " (tolerance 1e-5)";
  return r;
}

CriterionResult criterion_ema_exactness() {
  CriterionResult r;
  RunConfig cfg;
  cfg.model_dim = 16;
  cfg.heads = 2;
  cfg.n_layers = 1;
  cfg.decoder_layers = 1;
  cfg.decoder_groups = 4;
  cfg.tau = 0.999;
  AsdaModel model = AsdaModel::init(cfg, 401);
  TeacherState teacher = TeacherState::from_student(model);

  std::mt19937_64 rng(402);
  std::normal_distribution<double> dist(0.0, 0.05);
  double worst = 0.0;
  for (int step = 0; step < 50; ++step) {
    // emulate an optimizer step
    for (auto& p : model.teacher_scope_params())
      for (double& v : p.tensor.data()) v += dist(rng);
    // snapshot, update, verify the recurrence elementwise
    std::vector<std::vector<double>> before;
    for (const auto& p : teacher.scope_params()) before.push_back(p.tensor.data());
    ema_update(teacher, model);
    ParamMap t_now = teacher.scope_params();
    ParamMap s_now = model.teacher_scope_params();
    for (std::size_t i = 0; i < t_now.size(); ++i)
      for (std::size_t j = 0; j < before[i].size(); ++j) {
        const double want = 0.999 * before[i][j] + 0.001 * s_now[i].tensor.data()[j];
        worst = std::max(worst, std::abs(t_now[i].tensor.data()[j] - want));
      }
  }

  // tau = 0 copies the student exactly
  bool tau0_ok = true;
  {
    TeacherState t0 = TeacherState::from_student(model);
    t0.tau = 0.0;
    for (auto& p : model.teacher_scope_params())
      for (double& v : p.tensor.data()) v += dist(rng);
    ema_update(t0, model);
    ParamMap tp = t0.scope_params();
    ParamMap sp = model.teacher_scope_params();
    for (std::size_t i = 0; i < tp.size(); ++i)
      tau0_ok = tau0_ok && tp[i].tensor.data() == sp[i].tensor.data();
  }
  // tau = 1 freezes the teacher exactly
  bool tau1_ok = true;
  {
    TeacherState t1 = TeacherState::from_student(model);
    t1.tau = 1.0;
    std::vector<std::vector<double>> before;
    for (const auto& p : t1.scope_params()) before.push_back(p.tensor.data());
    for (auto& p : model.teacher_scope_params())
      for (double& v : p.tensor.data()) v += dist(rng);
    ema_update(t1, model);
    ParamMap tp = t1.scope_params();
    for (std::size_t i = 0; i < tp.size(); ++i)
      tau1_ok = tau1_ok && tp[i].tensor.data() == before[i];
  }

  r.pass = worst < 1e-12 && tau0_ok && tau1_ok;
  std::ostringstream os;
  os << "max |teacher - (tau prev + (1-tau) student)| = " << worst
     << " over 50 steps; tau=0 copies " << (tau0_ok ? "exactly" : "FAILED") << ", tau=1 freezes "
     << (tau1_ok ? "exactly" : "FAILED");
  r.detail = os.str();
  return r;
}

CriterionResult criterion_masking_contract() {
  CriterionResult r;
  const std::size_t n_tokens = 500;
  double lo = 1.0, hi = 0.0;
  std::size_t distinct_trials = 0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    MaskPlan plan = block_mask(n_tokens, 0.8, 5, trial);
    lo = std::min(lo, plan.masked_fraction());
    hi = std::max(hi, plan.masked_fraction());

    auto clones = make_clones(n_tokens, 0.8, 5, 16, trial);
    bool all_distinct = true;
    for (std::size_t i = 0; i < clones.size() && all_distinct; ++i)
      for (std::size_t j = i + 1; j < clones.size(); ++j)
        if (clones[i].keep == clones[j].keep) {
          all_distinct = false;
          break;
        }
    distinct_trials += all_distinct ? 1 : 0;
  }

  // CLS can never be masked: plans cover patch tokens only and the CLS row
  // is inserted after gathering. Verify through the real pipeline.
  bool cls_ok = true;
  {
    RunConfig cfg;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.n_layers = 1;
    cfg.decoder_layers = 1;
    cfg.decoder_groups = 4;
    AsdaModel model = AsdaModel::init(cfg, 501);
    auto samples = prepare_samples(synth_dataset(1, 4, 502, 0.2), cfg);
    const Sample& s = samples[0];
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      MaskPlan plan = block_mask(s.grid.n_tokens(), 0.8, 5, trial);
      cls_ok = cls_ok && plan.n_tokens() == s.grid.n_tokens();  // no CLS slot in the plan
      Tensor tokens = add(matmul(s.patches, model.patch_proj),
                          patch_positional_rows(s.grid.n_tokens(), cfg.model_dim));
      Tensor vis = gather_visible(tokens, plan);
      Tensor cls_row = add(model.cls, slice_rows(sinusoidal_pos_enc(1, cfg.model_dim), 0, 1));
      Tensor seq = prepend_cls(vis, cls_row, cfg.cls_position);
      for (std::size_t c = 0; c < cfg.model_dim; ++c)
        cls_ok = cls_ok && seq.at(0, c) == cls_row.at(0, c);
    }
  }

  r.pass = lo >= 0.8 && hi <= 0.81 && distinct_trials >= 999 && cls_ok;
  std::ostringstream os;
  os << "masked fraction in [" << lo << ", " << hi << "] over 1000 trials (bounds [0.8, 0.81]); "
     << distinct_trials << "/1000 trials with 16 pairwise-distinct clones (need >= 999); CLS row "
     << (cls_ok ? "never maskable" : "MASKED");
  r.detail = os.str();
  return r;
}

struct ToyState {
  RunConfig cfg;
  AsdaModel model{};
  std::vector<Sample> train;
  bool trained = false;
};

CriterionResult criterion_toy_pretrain(ToyState& state) {
  CriterionResult r;
  RunConfig cfg = RunConfig::desk();  // D=64, L=2, h=4, lambda=0.3, alpha=0.5, 4 clones
  cfg.seed = 601;
  auto clips = synth_dataset(200, cfg.n_classes, 602);
  std::vector<Sample> samples = prepare_samples(clips, cfg);

  // determinism probe: the first 10 steps repeat bit-identically
  bool deterministic = true;
  {
    AsdaModel m1 = AsdaModel::init(cfg, cfg.seed);
    TeacherState t1 = TeacherState::from_student(m1);
    PretrainResult r1 = pretrain_run(m1, t1, samples, 10);
    AsdaModel m2 = AsdaModel::init(cfg, cfg.seed);
    TeacherState t2 = TeacherState::from_student(m2);
    PretrainResult r2 = pretrain_run(m2, t2, samples, 10);
    for (std::size_t i = 0; i < 10; ++i)
      deterministic = deterministic && r1.history[i].loss.total == r2.history[i].loss.total;
    deterministic = deterministic && m1.cls.data() == m2.cls.data();
  }

  AsdaModel model = AsdaModel::init(cfg, cfg.seed);
  TeacherState teacher = TeacherState::from_student(model);
  PretrainResult res = pretrain_run(model, teacher, samples, 100);
  const double early = mean_of(res.history, 0, 10);
  const double late = mean_of(res.history, 90, 100);

  state.cfg = cfg;
  state.model = std::move(model);
  state.train = std::move(samples);
  state.trained = true;

  r.pass = late <= 0.5 * early && deterministic;
  std::ostringstream os;
  os << "mean total loss steps 1-10 = " << early << ", steps 91-100 = " << late << " (ratio "
     << late / early << ", need <= 0.5); deterministic under seed: "
     << (deterministic ? "yes" : "NO");
  r.detail = os.str();
  return r;
}

CriterionResult criterion_toy_finetune(ToyState& state) {
  CriterionResult r;
  if (!state.trained) {
    r.pass = false;
    r.detail = "skipped: pretraining criterion did not produce a model";
    return r;
  }
  AsdaModel& model = state.model;

  // initial cross-entropy of the untouched zero head
  double initial_ce;
  {
    NoGradGuard ng;
    std::vector<Tensor> rows;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 16; ++i) {
      rows.push_back(classification_logits(model, state.train[i], nullptr));
      labels.push_back(static_cast<std::size_t>(state.train[i].label));
    }
    initial_ce = softmax_cross_entropy(concat_rows(rows), labels).value();
  }

  // 200 steps is tight for the default peak/10 fine-tune rate; the toy run
  // raises the fine-tune peak to 1e-3 with a one-epoch warmup (the
  // criterion pins the step count, not the recipe)
  model.cfg.finetune_lr_scale = 2.0;
  model.cfg.optim.warmup_epochs = 1.0;
  FinetuneResult ft = finetune_run(model, state.train, 200);
  (void)ft;

  auto test_samples = prepare_samples(synth_dataset(100, state.cfg.n_classes, 701), state.cfg);
  EvalOutput out = evaluate(model, test_samples);
  std::vector<std::size_t> truth;
  for (const auto& s : test_samples) truth.push_back(static_cast<std::size_t>(s.label));
  const double acc = accuracy(out.predicted, truth);

  const double ln4 = std::log(4.0);
  r.pass = acc >= 0.9 && std::abs(initial_ce - ln4) < 1e-3;
  std::ostringstream os;
  os << "test accuracy " << acc << " over 100 held-out clips (need >= 0.9, chance 0.25); initial CE "
     << initial_ce << " vs ln 4 = " << ln4 << " (|diff| = " << std::abs(initial_ce - ln4) << ")";
  r.detail = os.str();
  return r;
}

CriterionResult criterion_lambda_ablation() {
  CriterionResult r;
  r.gated = false;  // reported, not gated

  auto run_arm = [](double lambda, std::uint64_t seed) {
    RunConfig cfg = RunConfig::desk();
    cfg.lambda = lambda;
    cfg.seed = seed;
    cfg.finetune_lr_scale = 1.0;  // from-scratch arms need the full rate
    auto train = prepare_samples(synth_dataset(120, cfg.n_classes, seed * 13 + 1, 0.5), cfg);
    auto test = prepare_samples(synth_dataset(60, cfg.n_classes, seed * 13 + 7, 0.5), cfg);
    AsdaModel model = AsdaModel::init(cfg, seed);
    finetune_run(model, train, 120);
    EvalOutput out = evaluate(model, test);
    std::vector<std::size_t> truth;
    for (const auto& s : test) truth.push_back(static_cast<std::size_t>(s.label));
    return accuracy(out.predicted, truth);
  };

  std::ostringstream os;
  double mean_diff = 0.0, mean_03 = 0.0, mean_00 = 0.0;
  os << "per-seed accuracy (lambda=0.3 vs lambda=0):";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double a03 = run_arm(0.3, seed);
    const double a00 = run_arm(0.0, seed);
    mean_03 += a03 / 5.0;
    mean_00 += a00 / 5.0;
    mean_diff += (a03 - a00) / 5.0;
    os << " seed" << seed << " " << a03 << "/" << a00;
  }
  os << "; means " << mean_03 << " vs " << mean_00 << " (lambda=0.3 minus lambda=0 = " << mean_diff
     << ", soft expectation >= 0)";
  r.pass = mean_03 >= mean_00;
  r.detail = os.str();
  return r;
}

CriterionResult criterion_map_oracle() {
  CriterionResult r;
  std::mt19937_64 rng(901);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_n(1, 8);
  std::uniform_int_distribution<std::size_t> pick_c(1, 3);
  std::uniform_int_distribution<int> coin(0, 3);

  std::size_t exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = pick_n(rng), c = pick_c(rng);
    std::vector<double> scores(n * c);
    std::vector<std::uint8_t> labels(n * c);
    bool any = false;
    do {
      any = false;
      for (std::size_t i = 0; i < n * c; ++i) {
        scores[i] = std::round(dist(rng) * 4.0) / 4.0;  // force ties
        labels[i] = coin(rng) == 0 ? 1 : 0;
        any = any || labels[i];
      }
    } while (!any);

    auto got = mean_average_precision(scores, labels, n, c);
    double want = 0.0;
    std::size_t classes = 0;
    for (std::size_t j = 0; j < c; ++j) {
      std::vector<double> cs(n);
      std::vector<std::uint8_t> cl(n);
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        cs[i] = scores[i * c + j];
        cl[i] = labels[i * c + j];
        pos += cl[i];
      }
      if (!pos) continue;
      want += ap_oracle(cs, cl);
      ++classes;
    }
    want /= static_cast<double>(classes);
    exact += got.map == want ? 1 : 0;
  }
  r.pass = exact == 1000;
  r.detail = std::to_string(exact) + "/1000 random instances match the brute-force oracle exactly";
  return r;
}

CriterionResult criterion_frontend() {
  CriterionResult r;
  // 10 s clip -> 998 x 128
  Waveform ten_s;
  ten_s.sample_rate = 16000;
  ten_s.samples.resize(160000);
  for (std::size_t i = 0; i < ten_s.samples.size(); ++i)
    ten_s.samples[i] = 0.4 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
  FbankSpectrogram big = compute_fbank(ten_s);
  const bool shape_ok = big.frames == 998 && big.mels == 128;

  // 1 kHz tone peaks in the analytically computed mel bin
  Waveform khz;
  khz.sample_rate = 16000;
  khz.samples.resize(16000);
  for (std::size_t i = 0; i < khz.samples.size(); ++i)
    khz.samples[i] = 0.5 * std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / 16000.0);
  FbankConfig fcfg;
  FbankSpectrogram spec = compute_fbank(khz, fcfg);
  MelFilterbank mel(fcfg, 16000);
  std::size_t analytic = 0;
  double best = -1.0;
  for (std::size_t j = 0; j < fcfg.n_mels; ++j)
    if (mel.triangle(j, 1000.0) > best) {
      best = mel.triangle(j, 1000.0);
      analytic = j;
    }
  const std::size_t t = spec.frames / 2;
  std::size_t got = 0;
  for (std::size_t j = 1; j < fcfg.n_mels; ++j)
    if (spec.at(t, j) > spec.at(t, got)) got = j;
  const bool peak_ok = got == analytic;

  // doubling amplitude adds log 4 within 1e-9 on above-floor entries
  Waveform doubled = khz;
  for (double& v : doubled.samples) v *= 2.0;
  FbankSpectrogram spec2 = compute_fbank(doubled, fcfg);
  const double floor_log = std::log(fcfg.log_floor);
  double worst_shift = 0.0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < spec.values.size(); ++i)
    if (spec.values[i] > floor_log + 1e-6) {
      worst_shift = std::max(worst_shift,
                             std::abs(spec2.values[i] - spec.values[i] - std::log(4.0)));
      ++checked;
    }
  const bool shift_ok = checked > 1000 && worst_shift < 1e-9;

  r.pass = shape_ok && peak_ok && shift_ok;
  std::ostringstream os;
  os << "10 s -> " << big.frames << "x" << big.mels << " (need 998x128); 1 kHz argmax bin " << got
     << " vs analytic " << analytic << "; max |shift - log 4| = " << worst_shift << " over "
     << checked << " above-floor entries";
  r.detail = os.str();
  return r;
}

CriterionResult criterion_checkpoint_and_cli(const std::string& cli_path) {
  CriterionResult r;
  // round trip within 32-bit rounding on a desk model
  RunConfig cfg = RunConfig::desk();
  AsdaModel model = AsdaModel::init(cfg, 1101);
  {
    std::mt19937_64 rng(1102);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (auto& p : model.all_params())
      for (double& v : p.tensor.data()) v += dist(rng);
  }
  const std::string path = "acceptance_ckpt_tmp";
  save_checkpoint(path, model, 7);
  LoadedCheckpoint loaded = load_checkpoint(path);
  double worst_rel = 0.0;
  ParamMap a = model.all_params(), b = loaded.model.all_params();
  bool shapes_ok = a.size() == b.size();
  for (std::size_t i = 0; i < a.size() && shapes_ok; ++i)
    for (std::size_t j = 0; j < a[i].tensor.numel(); ++j) {
      const double v = a[i].tensor.data()[j];
      const double err = std::abs(v - b[i].tensor.data()[j]);
      const double bound = std::abs(v) * 6e-8 + 1e-37;  // one ulp at 24-bit mantissa
      worst_rel = std::max(worst_rel, bound > 0 ? err / bound : 0.0);
    }
  std::remove((path + ".json").c_str());
  std::remove((path + ".bin").c_str());
  const bool roundtrip_ok = shapes_ok && worst_rel <= 1.0;

  // gradcheck CLI exits 0 on a fresh model
  bool cli_ok = false;
  std::string cli_note;
  if (cli_path.empty()) {
    cli_note = "CLI path not provided";
  } else {
    const int status = std::system((cli_path + " gradcheck --seed 7 > /dev/null").c_str());
    cli_ok = status == 0;
    cli_note = "gradcheck exit status " + std::to_string(status);
  }

  r.pass = roundtrip_ok && cli_ok;
  std::ostringstream os;
  os << "round-trip worst error / f32-ulp bound = " << worst_rel << " (need <= 1); " << cli_note;
  r.detail = os.str();
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli_path = argc > 1 ? argv[1] : "";
  ToyState toy;

  run_criterion(1, "differential-attention row sums", criterion_row_sums);
  run_criterion(2, "lambda=0 reduction to standard attention", criterion_lambda_zero_reduction);
  run_criterion(3, "gradient fidelity (attention, encoder, decoder, total loss)",
                criterion_gradient_fidelity);
  run_criterion(4, "EMA exactness over 50 steps", criterion_ema_exactness);
  run_criterion(5, "block masking contract", criterion_masking_contract);
  run_criterion(6, "toy pretraining loss halves", [&] { return criterion_toy_pretrain(toy); });
  run_criterion(7, "toy fine-tune separates classes", [&] { return criterion_toy_finetune(toy); });
  run_criterion(8, "lambda ablation direction (soft)", criterion_lambda_ablation);
  run_criterion(9, "mAP brute-force oracle equivalence", criterion_map_oracle);
  run_criterion(10, "audio frontend analytic checks", criterion_frontend);
  run_criterion(11, "checkpoint round-trip and gradcheck CLI",
                [&] { return criterion_checkpoint_and_cli(cli_path); });

  if (g_failures == 0) {
    std::cout << "acceptance: all gated criteria passed" << std::endl;
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " gated criteria FAILED" << std::endl;
  return 1;
}
