#pragma once

// Spectrogram -> patch tokens. The time axis is zero-padded (post-pad) to a
// multiple of the patch size, the mel axis is assumed to divide evenly
// (128 / 16 = 8), and each 16x16 patch is flattened row-major
// (time-major within the patch) into a 256-vector. Token order is
// time-major: token index = t_patch * grid_w + f_patch.
//
// Positional encodings are the fixed sinusoidal table
//   PE[p, 2i]   = sin(p / 10000^(2i/D))
//   PE[p, 2i+1] = cos(p / 10000^(2i/D))
// with table row 0 reserved for the CLS token; patch token p carries table
// row p + 1.

#include "asda/fbank.hpp"
#include "asda/ops.hpp"
#include "asda/tensor.hpp"

namespace asda {

struct PatchGrid {
  std::size_t grid_h = 0;  // time patches
  std::size_t grid_w = 0;  // mel patches
  std::size_t n_tokens() const { return grid_h * grid_w; }
};

// Raw 16x16 patches as rows of a (n_tokens, patch*patch) matrix, before any
// projection. The constant half of patchify_and_embed, reusable across steps.
inline Tensor extract_patches(const FbankSpectrogram& spec, std::size_t patch, PatchGrid& grid) {
  if (patch == 0) throw std::invalid_argument("extract_patches: patch size must be positive");
  if (spec.mels % patch != 0)
    throw std::invalid_argument("extract_patches: mel axis " + std::to_string(spec.mels) +
                                " is not a multiple of patch " + std::to_string(patch));
  const std::size_t padded_t = (spec.frames + patch - 1) / patch * patch;
  grid.grid_h = padded_t / patch;
  grid.grid_w = spec.mels / patch;
  const std::size_t dim = patch * patch;
  std::vector<double> rows(grid.n_tokens() * dim, 0.0);
  for (std::size_t gt = 0; gt < grid.grid_h; ++gt)
    for (std::size_t gf = 0; gf < grid.grid_w; ++gf) {
      const std::size_t tok = gt * grid.grid_w + gf;
      for (std::size_t dt = 0; dt < patch; ++dt) {
        const std::size_t t = gt * patch + dt;
        if (t >= spec.frames) break;  // zero padding
        for (std::size_t df = 0; df < patch; ++df)
          rows[tok * dim + dt * patch + df] = spec.at(t, gf * patch + df);
      }
    }
  return Tensor::from_data({grid.n_tokens(), dim}, std::move(rows));
}

// Inverse of extract_patches for the identity-projection case; reconstructs
// the padded spectrogram from patch rows.
inline std::vector<double> unpatchify(const Tensor& patches, const PatchGrid& grid,
                                      std::size_t patch) {
  const std::size_t mels = grid.grid_w * patch;
  const std::size_t frames = grid.grid_h * patch;
  std::vector<double> out(frames * mels, 0.0);
  for (std::size_t gt = 0; gt < grid.grid_h; ++gt)
    for (std::size_t gf = 0; gf < grid.grid_w; ++gf) {
      const std::size_t tok = gt * grid.grid_w + gf;
      for (std::size_t dt = 0; dt < patch; ++dt)
        for (std::size_t df = 0; df < patch; ++df)
          out[(gt * patch + dt) * mels + gf * patch + df] = patches.at(tok, dt * patch + df);
    }
  return out;
}

// Flatten + linear projection: proj is (patch*patch, D).
inline Tensor patchify_and_embed(const FbankSpectrogram& spec, const Tensor& proj, PatchGrid& grid,
                                 std::size_t patch = 16) {
  Tensor patches = extract_patches(spec, patch, grid);
  if (proj.ndim() != 2 || proj.rows() != patch * patch)
    throw std::invalid_argument("patchify_and_embed: projection " + shape_str(proj.shape()) +
                                " does not accept " + std::to_string(patch * patch) +
                                "-dimensional patches");
  return matmul(patches, proj);
}

// Sinusoidal table for positions 0..n_tokens-1.
inline Tensor sinusoidal_pos_enc(std::size_t n_tokens, std::size_t d) {
  if (d % 2 != 0)
    throw std::invalid_argument("sinusoidal_pos_enc: dimension " + std::to_string(d) +
                                " must be even");
  if (n_tokens == 0) throw std::invalid_argument("sinusoidal_pos_enc: need at least one position");
  std::vector<double> pe(n_tokens * d);
  for (std::size_t p = 0; p < n_tokens; ++p)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double rate = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
      const double angle = static_cast<double>(p) / rate;
      pe[p * d + 2 * i] = std::sin(angle);
      pe[p * d + 2 * i + 1] = std::cos(angle);
    }
  return Tensor::from_data({n_tokens, d}, std::move(pe));
}

// Positional rows for patch tokens: table rows 1..n (row 0 belongs to CLS).
inline Tensor patch_positional_rows(std::size_t n_tokens, std::size_t d) {
  Tensor table = sinusoidal_pos_enc(n_tokens + 1, d);
  return slice_rows(table, 1, n_tokens + 1);
}

}  // namespace asda
