#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lte4g/dense.hpp"
#include "lte4g/tape.hpp"

namespace lte4g {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // coupled L2: added to the gradient before the moment update
};

struct AdamState {
  AdamConfig config;
  std::vector<DenseMat> first_moment;
  std::vector<DenseMat> second_moment;
  std::uint64_t step = 0;
};

/// One Adam update over parallel lists of parameters and gradients. Moments are created
/// lazily on the first call and must keep matching the parameter shapes afterwards.
inline void adam_step(AdamState& state, std::span<DenseMat* const> params,
                      std::span<const DenseMat* const> grads) {
  LTE4G_REQUIRE(params.size() == grads.size(), ContractError,
                "adam_step: params/grads count mismatch");
  if (state.first_moment.empty()) {
    for (const DenseMat* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  LTE4G_REQUIRE(state.first_moment.size() == params.size(), ContractError,
                "adam_step: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    LTE4G_REQUIRE(params[k]->same_shape(*grads[k]) && params[k]->same_shape(state.first_moment[k]),
                  ContractError,
                  "adam_step: shape mismatch for parameter " + std::to_string(k) + " (" +
                      params[k]->shape_str() + " vs grad " + grads[k]->shape_str() + ")");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    auto g = grads[k]->values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + c.weight_decay * p[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

/// Adam bound to a fixed set of Parameters.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)) {
    state_.config = config;
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    std::vector<DenseMat*> values;
    std::vector<const DenseMat*> grads;
    for (Parameter* p : params_) {
      values.push_back(&p->value);
      grads.push_back(&p->grad);
    }
    adam_step(state_, values, grads);
  }

  const AdamState& state() const noexcept { return state_; }
  std::span<Parameter* const> parameters() const noexcept { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamState state_;
};

/// Glorot/Xavier uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline DenseMat glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  DenseMat m(fan_in, fan_out);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace lte4g
