#pragma once

// Block-wise random masking over patch tokens. Contiguous blocks (overlap
// allowed) are placed until the masked count reaches ceil(ratio * n), which
// bounds the overshoot by block_size tokens. Plans index patch tokens only;
// the CLS row is prepended after gathering and can never be masked.
//
// The multi-clone scheme derives one plan per clone from a master seed via
// a SplitMix64 counter, so a (seed, clone) pair is reproducible in
// isolation.

#include <cstdint>
#include <random>

#include "asda/ops.hpp"
#include "asda/tensor.hpp"

namespace asda {

namespace detail {

// SplitMix64 step; the documented counter scheme for deriving clone seeds.
inline std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
  return detail::split_mix64(master ^ detail::split_mix64(counter + 1));
}

struct MaskPlan {
  std::vector<std::uint8_t> keep;  // per patch token, 1 = visible to the student
  double target_ratio = 0.0;
  std::size_t block_size = 5;
  std::size_t clone_id = 0;

  std::size_t n_tokens() const { return keep.size(); }
  std::size_t masked_count() const {
    std::size_t m = 0;
    for (auto k : keep) m += k ? 0 : 1;
    return m;
  }
  double masked_fraction() const {
    return keep.empty() ? 0.0 : static_cast<double>(masked_count()) / keep.size();
  }
  std::vector<std::size_t> visible_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) idx.push_back(i);
    return idx;
  }
  std::vector<std::size_t> masked_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (!keep[i]) idx.push_back(i);
    return idx;
  }
};

// At least one token always stays visible: the target count is capped at
// n - 1 and block placement stops clipping once that cap is reached. For
// short sequences this bounds the deviation by 1/n, inside the documented
// block_size/n tolerance.
inline MaskPlan block_mask(std::size_t n_tokens, double ratio, std::size_t block_size,
                           std::uint64_t seed) {
  detail::require(ratio >= 0.0 && ratio < 1.0,
                  "block_mask: ratio " + std::to_string(ratio) + " must be in [0, 1)");
  detail::require(block_size >= 1, "block_mask: block size must be >= 1");
  detail::require(n_tokens >= 1, "block_mask: need at least one token");
  MaskPlan plan;
  plan.keep.assign(n_tokens, 1);
  plan.target_ratio = ratio;
  plan.block_size = block_size;
  const std::size_t want =
      std::min(static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n_tokens))),
               n_tokens - 1);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> start(0, n_tokens - 1);
  std::size_t masked = 0;
  while (masked < want) {
    const std::size_t s = start(rng);
    for (std::size_t i = s; i < std::min(s + block_size, n_tokens) && masked + 1 < n_tokens; ++i) {
      if (plan.keep[i]) {
        plan.keep[i] = 0;
        ++masked;
      }
    }
  }
  return plan;
}

inline std::vector<MaskPlan> make_clones(std::size_t n_tokens, double ratio,
                                         std::size_t block_size, std::size_t n_clones,
                                         std::uint64_t master_seed) {
  detail::require(n_clones >= 1, "make_clones: need at least one clone");
  std::vector<MaskPlan> plans;
  plans.reserve(n_clones);
  for (std::size_t c = 0; c < n_clones; ++c) {
    MaskPlan plan = block_mask(n_tokens, ratio, block_size, derive_seed(master_seed, c));
    plan.clone_id = c;
    plans.push_back(std::move(plan));
  }
  return plans;
}

// Visible rows in original relative order.
inline Tensor gather_visible(const Tensor& tokens, const MaskPlan& plan) {
  detail::require(tokens.ndim() == 2 && tokens.rows() == plan.n_tokens(),
                  "gather_visible: " + std::to_string(plan.n_tokens()) + "-token plan against " +
                      shape_str(tokens.shape()));
  auto idx = plan.visible_indices();
  detail::require(!idx.empty(), "gather_visible: plan leaves no visible tokens");
  return gather_rows(tokens, idx);
}

// Rebuilds the full token sequence: visible slots take the encoded rows (in
// order), masked slots take mask_embedding + that position's positional
// encoding row.
inline Tensor scatter_with_mask_token(const Tensor& encoded_visible, const MaskPlan& plan,
                                      const Tensor& mask_embedding, const Tensor& pos_rows) {
  detail::require(pos_rows.ndim() == 2 && pos_rows.rows() == plan.n_tokens(),
                  "scatter_with_mask_token: positional rows " + shape_str(pos_rows.shape()) +
                      " do not cover " + std::to_string(plan.n_tokens()) + " tokens");
  Tensor fill = add_row_bias(pos_rows, mask_embedding);
  return scatter_rows(encoded_visible, plan.keep, fill);
}

}  // namespace asda
