#pragma once

// Central finite-difference gradient verification. The analytic gradient of
// f at `points` is compared coordinate by coordinate against
// (f(x+h) - f(x-h)) / 2h; the returned figure is
//   max_i |analytic_i - fd_i| / max(1, |analytic_i|).
// For large parameter sets a deterministic subsample of coordinates per
// tensor can be checked instead of every coordinate.

#include <functional>

#include "asda/tensor.hpp"

namespace asda {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 = every coordinate; otherwise at most this many per tensor,
  // sampled without replacement from a seeded generator.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t sample_seed = 0x5eed;
};

inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                         std::vector<Tensor> points, GradCheckOptions opts = {}) {
  if (opts.step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  for (auto& p : points) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = f(points);
  if (loss.numel() != 1)
    throw std::invalid_argument("grad_check: f returned non-scalar " + shape_str(loss.shape()));
  backward(loss);

  double max_rel = 0.0;
  std::mt19937_64 rng(opts.sample_seed);
  for (auto& p : points) {
    const std::size_t n = p.numel();
    std::vector<std::size_t> coords;
    if (opts.max_coords_per_tensor == 0 || opts.max_coords_per_tensor >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(all[i], all[pick(rng)]);
        coords.push_back(all[i]);
      }
    }
    const std::vector<double> analytic = p.has_grad() ? p.grad() : std::vector<double>(n, 0.0);
    for (std::size_t idx : coords) {
      const double saved = p.data()[idx];
      double f_plus, f_minus;
      {
        NoGradGuard ng;
        p.data()[idx] = saved + opts.step;
        f_plus = f(points).value();
        p.data()[idx] = saved - opts.step;
        f_minus = f(points).value();
        p.data()[idx] = saved;
      }
      const double fd = (f_plus - f_minus) / (2.0 * opts.step);
      const double rel = std::abs(analytic[idx] - fd) / std::max(1.0, std::abs(analytic[idx]));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                         std::vector<Tensor> points, double step) {
  GradCheckOptions opts;
  opts.step = step;
  return grad_check(f, std::move(points), opts);
}

}  // namespace asda
