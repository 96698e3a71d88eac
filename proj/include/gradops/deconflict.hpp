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

#include <cstddef>
#include <string>
#include <vector>

#include "gradops/densecore.hpp"

namespace gradops {

// Per-task gradients with respect to the shared parameters; row i is task i.
class TaskGradients {
 public:
  explicit TaskGradients(std::vector<Vec> rows) : rows_(std::move(rows)) {
    if (rows_.size() < 2) throw UsageError("TaskGradients: need at least 2 tasks");
    const std::size_t d = rows_.front().size();
    if (d == 0) throw UsageError("TaskGradients: zero-dimensional gradients");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      if (rows_[i].size() != d) {
        throw UsageError("TaskGradients: row " + std::to_string(i) + " has dimension " +
                         std::to_string(rows_[i].size()) + ", expected " + std::to_string(d));
      }
      if (!all_finite(rows_[i])) {
        throw UsageError("TaskGradients: row " + std::to_string(i) + " has a non-finite entry");
      }
    }
  }

  std::size_t num_tasks() const noexcept { return rows_.size(); }
  std::size_t dim() const noexcept { return rows_.front().size(); }
  const Vec& operator[](std::size_t i) const { return rows_[i]; }
  const std::vector<Vec>& rows() const noexcept { return rows_; }

  Vec sum() const {
    Vec out = zeros(dim());
    for (const Vec& g : rows_) axpy(1.0, g, out);
    return out;
  }

  void check_index(std::size_t i) const {
    if (i >= rows_.size()) {
      throw UsageError("task index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(rows_.size()) + ")");
    }
  }

 private:
  std::vector<Vec> rows_;
};

struct DeconflictOptions {
  GramSchmidtOptions basis{};
  // |g'_i| <= zero_tol * |g_i| is snapped to the zero vector.
  double zero_tol = 1e-12;
};

struct DeconflictOutcome {
  std::vector<Vec> modified;
  std::vector<bool> conflicted;
  bool all_zero = false;

  Vec sum() const {
    Vec out = zeros(modified.front().size());
    for (const Vec& g : modified) axpy(1.0, g, out);
    return out;
  }
};

// True iff some other task's gradient has a strictly negative dot product
// with task i's gradient. A dot product of exactly zero is not a conflict.
inline bool has_conflict(std::size_t i, const TaskGradients& grads) {
  grads.check_index(i);
  for (std::size_t k = 0; k < grads.num_tasks(); ++k) {
    if (k != i && dot(grads[i], grads[k]) < 0.0) return true;
  }
  return false;
}

// Component of g_i orthogonal to span{g_j : j != i}, or g_i itself when it
// conflicts with nobody.
inline Vec deconflict_one(std::size_t i, const TaskGradients& grads,
                          const DeconflictOptions& options = {}) {
  if (!has_conflict(i, grads)) return grads[i];

  std::vector<Vec> others;
  others.reserve(grads.num_tasks() - 1);
  for (std::size_t j = 0; j < grads.num_tasks(); ++j) {
    if (j != i) others.push_back(grads[j]);
  }
  const Basis basis = gram_schmidt(others, options.basis);
  // The others span the whole space, so its orthogonal complement is {0}.
  if (basis.size() >= grads.dim()) return zeros(grads.dim());

  Vec out = basis.residual(grads[i]);
  if (options.basis.reorthogonalize) out = basis.residual(out);
  if (norm(out) <= options.zero_tol * norm(grads[i])) return zeros(grads.dim());
  return out;
}

// Deconflicts every task against the original (never the already modified)
// gradients, so the result does not depend on task order.
inline DeconflictOutcome deconflict_all(const TaskGradients& grads,
                                        const DeconflictOptions& options = {}) {
  DeconflictOutcome outcome;
  const std::size_t T = grads.num_tasks();
  outcome.modified.reserve(T);
  outcome.conflicted.reserve(T);
  outcome.all_zero = true;
  for (std::size_t i = 0; i < T; ++i) {
    const bool conflict = has_conflict(i, grads);
    outcome.conflicted.push_back(conflict);
    outcome.modified.push_back(conflict ? deconflict_one(i, grads, options) : grads[i]);
    if (!is_zero(outcome.modified.back())) outcome.all_zero = false;
  }
  return outcome;
}

}  // namespace gradops
