/*
 * Copyright 2026 The GradOPS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradops/densecore.hpp"

namespace gradops {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t dim, AdamHyper hyper) : m_(dim, 0.0), v_(dim, 0.0), hyper_(hyper) {
    if (!(hyper.lr > 0.0) || !(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0) ||
        !(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0) || !(hyper.epsilon > 0.0)) {
      throw UsageError("AdamState: invalid hyperparameters");
    }
  }

  const Vec& first_moment() const noexcept { return m_; }
  const Vec& second_moment() const noexcept { return v_; }
  long step_count() const noexcept { return t_; }
  const AdamHyper& hyper() const noexcept { return hyper_; }

  // Bias-corrected Adam update of params along grad, in place.
  void step(std::span<double> params, ConstVecView grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw UsageError("adam_step: dimension mismatch");
    }
    require_finite(grad, "adam_step");
    ++t_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = hyper_.beta1 * m_[k] + (1.0 - hyper_.beta1) * grad[k];
      v_[k] = hyper_.beta2 * v_[k] + (1.0 - hyper_.beta2) * grad[k] * grad[k];
      const double m_hat = m_[k] / bc1;
      const double v_hat = v_[k] / bc2;
      params[k] -= hyper_.lr * m_hat / (std::sqrt(v_hat) + hyper_.epsilon);
    }
  }

 private:
  Vec m_;
  Vec v_;
  long t_ = 0;
  AdamHyper hyper_{};
};

inline std::pair<Vec, AdamState> adam_step(AdamState state, ConstVecView params,
                                           ConstVecView grad) {
  Vec out(params.begin(), params.end());
  state.step(out, grad);
  return {std::move(out), std::move(state)};
}

// theta <- theta - step * direction
inline void plain_step(std::span<double> params, ConstVecView direction, double step) {
  axpy(-step, direction, params);
}

// ---------------------------------------------------------------------------
// Step-size bounds under which the deconflicted update is a descent step for
// an objective whose gradient is L-Lipschitz.

enum class BoundKind { kUniform, kWeighted };

struct StepBound {
  double t_max = 0.0;
  BoundKind kind = BoundKind::kUniform;
  std::size_t num_tasks = 0;
  double lipschitz = 0.0;
  std::vector<double> weights;          // weighted only
  std::vector<double> gprime_sqnorms;   // weighted only
};

// Unweighted update sum_i g'_i: t < 2 / (T L).
inline StepBound theorem1_bound(std::size_t num_tasks, double lipschitz) {
  if (num_tasks < 1) throw UsageError("theorem1_bound: need at least one task");
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) {
    throw UsageError("theorem1_bound: Lipschitz constant must be positive");
  }
  StepBound b;
  b.kind = BoundKind::kUniform;
  b.num_tasks = num_tasks;
  b.lipschitz = lipschitz;
  b.t_max = 2.0 / (static_cast<double>(num_tasks) * lipschitz);
  return b;
}

// Weighted update sum_i w_i g'_i:
//   t < min_{i in T+, j} 2 w_i |g'_i|^2 / (T L w_j^2 |g'_j|^2)
// where T+ holds the tasks with |g'_i|^2 > 0. Pairs whose denominator is zero
// impose no constraint.
inline StepBound theorem2_bound(std::span<const double> w, std::span<const double> gprime_sqnorms,
                                std::size_t num_tasks, double lipschitz) {
  if (w.size() != gprime_sqnorms.size() || w.empty()) {
    throw UsageError("theorem2_bound: weights and squared norms must have equal, non-zero length");
  }
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) {
    throw UsageError("theorem2_bound: Lipschitz constant must be positive");
  }
  if (num_tasks < 1) throw UsageError("theorem2_bound: need at least one task");
  const double TL = static_cast<double>(num_tasks) * lipschitz;
  double best = std::numeric_limits<double>::infinity();
  bool any_positive = false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(gprime_sqnorms[i] > 0.0)) continue;
    if (!(w[i] > 0.0)) throw UsageError("theorem2_bound: non-positive weight for a task in T+");
    any_positive = true;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double denom = TL * w[j] * w[j] * gprime_sqnorms[j];
      if (denom > 0.0) best = std::min(best, 2.0 * w[i] * gprime_sqnorms[i] / denom);
    }
  }
  if (!any_positive) {
    throw DegenerateError("theorem2_bound: every deconflicted gradient is zero (Pareto stationary)");
  }
  StepBound b;
  b.kind = BoundKind::kWeighted;
  b.num_tasks = num_tasks;
  b.lipschitz = lipschitz;
  b.weights.assign(w.begin(), w.end());
  b.gprime_sqnorms.assign(gprime_sqnorms.begin(), gprime_sqnorms.end());
  b.t_max = best;
  return b;
}

struct LipschitzEstimate {
  double value = 0.0;
  std::size_t pairs_used = 0;
};

// max over distinct sample pairs of |grad(x) - grad(y)| / |x - y|. This is a
// lower bound on the true constant.
inline LipschitzEstimate estimate_lipschitz(const std::function<Vec(ConstVecView)>& gradient,
                                            std::span<const Vec> samples) {
  if (samples.size() < 2) throw UsageError("estimate_lipschitz: need at least 2 samples");
  std::vector<Vec> grads;
  grads.reserve(samples.size());
  for (const Vec& x : samples) grads.push_back(gradient(x));
  LipschitzEstimate est;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      const double dx = norm(subtract(samples[a], samples[b]));
      if (dx == 0.0) continue;
      est.value = std::max(est.value, norm(subtract(grads[a], grads[b])) / dx);
      ++est.pairs_used;
    }
  }
  if (est.pairs_used == 0) throw UsageError("estimate_lipschitz: all samples coincide");
  return est;
}

}  // namespace gradops
