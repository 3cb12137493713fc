// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlasdi/core/mlp.hpp"
#include "mlasdi/error.hpp"

namespace mlasdi {

struct AdamOptions {
  double lr = 1e-3;
  double beta1m = 0.9;
  double beta2m = 0.999;
  double eps_hat = 1e-8;
};

/// Moment estimates for a fixed set of parameter blocks.
///
/// Moments are sized on the first step; later steps must present the same
/// block layout.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
inline void adam_step(std::span<const ParamBlock> params, std::span<const GradBlock> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) {
    fail(ErrorKind::shape, "adam: " + std::to_string(params.size()) + " parameter blocks but " +
                               std::to_string(grads.size()) + " gradient blocks");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].values.size() != grads[i].values.size()) {
      fail(ErrorKind::shape, "adam: block '" + params[i].name + "' has " +
                                 std::to_string(params[i].values.size()) + " parameters but " +
                                 std::to_string(grads[i].values.size()) + " gradients");
    }
    for (double g : grads[i].values) {
      if (!std::isfinite(g)) {
        fail(ErrorKind::divergence, "adam: non-finite gradient in block '" + grads[i].name + "'");
      }
    }
  }
  if (state.step == 0 && state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.values.size(), 0.0);
      state.second_moment.emplace_back(p.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    fail(ErrorKind::shape, "adam: state tracks " + std::to_string(state.first_moment.size()) +
                               " blocks, update has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].values.size()) {
      fail(ErrorKind::shape, "adam: moment shape mismatch in block '" + params[i].name + "'");
    }
  }

  state.step += 1;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1m, t);
  const double correction2 = 1.0 - std::pow(o.beta2m, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].values;
    auto g = grads[i].values;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = o.beta1m * m[j] + (1.0 - o.beta1m) * g[j];
      v[j] = o.beta2m * v[j] + (1.0 - o.beta2m) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      theta[j] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps_hat);
    }
  }
}

}  // namespace mlasdi
