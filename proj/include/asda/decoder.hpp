#pragma once

// Student CNN decoder. Tokens are folded back onto the (grid_h, grid_w)
// patch grid channel-first, pushed through six shape-preserving grouped
// 3x3 convolutions -- each followed by a per-site channel layer-norm (no
// affine) and GeLU -- and a final 1x1 convolution projects to the target
// width. Output is flattened back to token order (time-major).

#include "asda/ops.hpp"

namespace asda {

struct DecoderConfig {
  std::size_t n_layers = 6;
  std::size_t kernel = 3;
  std::size_t groups = 16;
  std::size_t channels = 64;      // = model dim D
  std::size_t target_width = 64;  // D for feature targets, 256 for fbank pixels

  void validate() const {
    detail::require(channels % groups == 0, "DecoderConfig: channels " + std::to_string(channels) +
                                                " not divisible by groups " +
                                                std::to_string(groups));
    detail::require(kernel % 2 == 1, "DecoderConfig: kernel must be odd to preserve shape");
    detail::require(n_layers >= 1, "DecoderConfig: need at least one layer");
  }

  // conv weights only; biases counted separately
  std::size_t conv_weight_count() const {
    return n_layers * (channels / groups) * channels * kernel * kernel;
  }
};

struct DecoderParams {
  DecoderConfig cfg;
  std::vector<Tensor> conv_w;  // each (C, C/groups, k, k)
  std::vector<Tensor> conv_b;  // each (C)
  Tensor out_w;                // (target, C, 1, 1)
  Tensor out_b;                // (target)

  static DecoderParams init(const DecoderConfig& cfg, std::mt19937_64& rng, double stddev = 0.02) {
    cfg.validate();
    DecoderParams p;
    p.cfg = cfg;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      p.conv_w.push_back(Tensor::randn(
          {cfg.channels, cfg.channels / cfg.groups, cfg.kernel, cfg.kernel}, rng, stddev, true));
      p.conv_b.push_back(Tensor({cfg.channels}, 0.0, true));
    }
    p.out_w = Tensor::randn({cfg.target_width, cfg.channels, 1, 1}, rng, stddev, true);
    p.out_b = Tensor({cfg.target_width}, 0.0, true);
    return p;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : conv_w) n += w.numel();
    for (const auto& b : conv_b) n += b.numel();
    return n + out_w.numel() + out_b.numel();
  }
};

// (n_tokens, D) -> (D, grid_h, grid_w), undoing the time-major flattening.
// The CLS row must already be removed.
inline Tensor tokens_to_grid(const Tensor& tokens, std::size_t grid_h, std::size_t grid_w) {
  detail::require(tokens.ndim() == 2 && tokens.rows() == grid_h * grid_w,
                  "tokens_to_grid: " + shape_str(tokens.shape()) + " does not tile a " +
                      std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  return reshape(transpose(tokens), {tokens.cols(), grid_h, grid_w});
}

inline Tensor grid_to_tokens(const Tensor& grid) {
  detail::require(grid.ndim() == 3, "grid_to_tokens: expected (C, H, W), got " +
                                        shape_str(grid.shape()));
  const std::size_t c = grid.shape()[0], hw = grid.shape()[1] * grid.shape()[2];
  return transpose(reshape(grid, {c, hw}));
}

// Channel layer-norm: normalizes across channels independently at each
// spatial site (batch-free, works on a single grid).
inline Tensor channel_layer_norm(const Tensor& grid) {
  detail::require(grid.ndim() == 3, "channel_layer_norm: expected (C, H, W), got " +
                                        shape_str(grid.shape()));
  const std::size_t c = grid.shape()[0], h = grid.shape()[1], w = grid.shape()[2];
  Tensor sites = transpose(reshape(grid, {c, h * w}));  // (H*W, C)
  return reshape(transpose(layer_norm(sites)), {c, h, w});
}

inline Tensor decode(const Tensor& grid, const DecoderParams& p) {
  p.cfg.validate();
  detail::require(grid.ndim() == 3 && grid.shape()[0] == p.cfg.channels,
                  "decode: grid " + shape_str(grid.shape()) + " does not carry " +
                      std::to_string(p.cfg.channels) + " channels");
  const std::size_t pad = p.cfg.kernel / 2;
  Tensor x = grid;
  for (std::size_t l = 0; l < p.cfg.n_layers; ++l)
    x = gelu(channel_layer_norm(conv2d(x, p.conv_w[l], p.conv_b[l], 1, pad, p.cfg.groups)));
  Tensor projected = conv2d(x, p.out_w, p.out_b, 1, 0, 1);
  return grid_to_tokens(projected);
}

}  // namespace asda
