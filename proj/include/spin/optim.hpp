#pragma once

#include <spin/tensor.hpp>

#include <string>
#include <vector>

namespace spin {

struct SgdHyper {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

template <typename T>
struct OptimizerState {
  SgdHyper hyper;
  std::vector<std::vector<T>> velocity;  // one buffer per parameter, zero-initialized

  OptimizerState() = default;
  OptimizerState(const std::vector<Tensor<T>>& params, SgdHyper h) : hyper(h) {
    velocity.reserve(params.size());
    for (const auto& p : params) velocity.emplace_back(p.numel(), T(0));
  }
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, OptimizerState<T>& state) {
  if (state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: optimizer state tracks " + std::to_string(state.velocity.size()) +
                                " parameters, got " + std::to_string(params.size()));
  const T lr = static_cast<T>(state.hyper.lr);
  const T mom = static_cast<T>(state.hyper.momentum);
  const T wd = static_cast<T>(state.hyper.weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.has_grad())
      throw std::runtime_error("sgd_step: parameter " + std::to_string(k) + " of shape " + to_string(p.shape()) +
                               " has no gradient");
    auto& v = state.velocity[k];
    if (v.size() != p.numel()) throw ShapeError("sgd_step: velocity buffer size mismatch");
    const auto& g = p.grad();
    auto& w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mom * v[i] + g[i] + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
}

template <typename T>
void zero_grad(std::vector<Tensor<T>>& params) {
  for (auto& p : params) {
    p.grad();
    p.zero_grad();
  }
}

}  // namespace spin
