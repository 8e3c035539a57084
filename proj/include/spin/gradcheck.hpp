#pragma once

// Central finite-difference gradient checking in 64-bit.
//
// The scalar probed is sum_i r_i * f(x)_i with fixed random weights r, so
// every output element contributes. Relative error per element is
// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
// near-zero gradients from turning finite-difference noise into huge ratios.
// Coordinates whose +-h evaluations change a ReLU or max-pool decision are
// not differentiable within the step; they are counted and left out.

#include <spin/ops.hpp>

#include <functional>
#include <random>

namespace spin {

struct GradcheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose step crossed a kink
};

struct GradcheckOptions {
  double step = 1e-3;
  double floor = 1e-2;
  std::uint64_t seed = 0;
  bool skip_kinks = true;
};

using GradFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline GradcheckResult gradcheck(const GradFn& f, std::vector<Tensor<double>> inputs, GradcheckOptions opt = {}) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.clear_grad();
  }
  Tensor<double> probe_out;
  {
    NoGradGuard ng;
    probe_out = f(inputs);
  }
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> weights(probe_out.numel());
  for (auto& w : weights) w = dist(rng);

  const auto objective = [&](const std::vector<Tensor<double>>& xs, std::uint64_t* branches) {
    BranchProbe probe;
    const Tensor<double> out = f(xs);
    double s = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += out[i] * weights[i];
    *branches = probe.value();
    return s;
  };

  backward(weighted_sum(f(inputs), weights));

  GradcheckResult res;
  NoGradGuard ng;
  std::uint64_t base = 0, b_up = 0, b_down = 0;
  objective(inputs, &base);
  for (auto& in : inputs) {
    const std::vector<double> analytic = in.has_grad() ? in.grad() : std::vector<double>(in.numel(), 0.0);
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double orig = in[i];
      in[i] = orig + opt.step;
      const double up = objective(inputs, &b_up);
      in[i] = orig - opt.step;
      const double down = objective(inputs, &b_down);
      in[i] = orig;
      if (opt.skip_kinks && (b_up != base || b_down != base)) {
        ++res.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opt.step);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
      ++res.checked;
    }
  }
  return res;
}

// Random values in [-1, 1] pushed at least `margin` away from zero, so
// ReLU kinks are not crossed by the finite-difference step.
template <typename Rng>
Tensor<double> gradcheck_input(Shape shape, Rng& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) {
    double x = dist(rng);
    v = x >= 0 ? x + margin : x - margin;
  }
  return t;
}

}  // namespace spin
