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

// Multi-task gradient aggregation: uniform summation, PCGrad, min-norm MGDA,
// IMTL-G and GradOPS behind one dispatch point.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gradops/deconflict.hpp"
#include "gradops/densecore.hpp"
#include "gradops/reweight.hpp"

namespace gradops {

enum class MethodKind { kGd, kPcgrad, kMgda, kImtlG, kGradops };

inline const char* to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::kGd: return "gd";
    case MethodKind::kPcgrad: return "pcgrad";
    case MethodKind::kMgda: return "mgda";
    case MethodKind::kImtlG: return "imtl-g";
    case MethodKind::kGradops: return "gradops";
  }
  return "?";
}

inline MethodKind parse_method_kind(const std::string& s) {
  if (s == "gd") return MethodKind::kGd;
  if (s == "pcgrad") return MethodKind::kPcgrad;
  if (s == "mgda") return MethodKind::kMgda;
  if (s == "imtl-g") return MethodKind::kImtlG;
  if (s == "gradops") return MethodKind::kGradops;
  throw UsageError("unknown method '" + s + "' (expected gd|pcgrad|mgda|imtl-g|gradops)");
}

struct Tolerances {
  DeconflictOptions deconflict{};
  double weight_eps = 1e-8;
  // Negative scalar projections down to -ratio_slack * max_k |g_k| are
  // treated as rounding noise.
  double ratio_slack = 1e-8;
  int minnorm_max_iter = 250;
  double minnorm_tol = 1e-7;
};

struct MethodSpec {
  MethodKind kind = MethodKind::kGradops;
  double alpha = 0.0;                                 // gradops only
  WeightVariant variant = WeightVariant::kIdentity;  // gradops only
  std::uint64_t seed = 0;                             // pcgrad only
  Tolerances tolerances{};
};

struct AggregationDiagnostics {
  // dot(update, g_j) for every task j.
  std::vector<double> dots;
  // Per-task coefficients the method used: w for gradops, the convex weights
  // for mgda (and for the gradops fallback), beta for imtl-g, ones for gd and
  // pcgrad.
  std::vector<double> weights;
  // gradops only: r_i and per-task conflict flags.
  std::vector<double> ratios;
  std::vector<bool> conflicted;
  bool fallback = false;
  // False when the min-norm solver stopped at its iteration cap.
  bool converged = true;
};

struct AggregationResult {
  Vec update;
  AggregationDiagnostics diagnostics;
};

// ---------------------------------------------------------------------------
// PCGrad

// Each task's working copy is projected, in `order` (task i skipped), onto the
// normal plane of every original gradient it still conflicts with. Returns the
// modified gradients.
inline std::vector<Vec> pcgrad_modified(const TaskGradients& grads,
                                        std::span<const std::vector<std::size_t>> orders) {
  const std::size_t T = grads.num_tasks();
  if (orders.size() != T) throw UsageError("pcgrad: need one processing order per task");
  std::vector<Vec> out;
  out.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    Vec g = grads[i];
    for (std::size_t j : orders[i]) {
      grads.check_index(j);
      if (j == i) continue;
      const double d = dot(g, grads[j]);
      if (d < 0.0) axpy(-d / squared_norm(grads[j]), grads[j], g);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Same processing order for every task.
inline Vec pcgrad_in_order(const TaskGradients& grads, const std::vector<std::size_t>& order) {
  const std::vector<std::vector<std::size_t>> orders(grads.num_tasks(), order);
  Vec out = zeros(grads.dim());
  for (const Vec& g : pcgrad_modified(grads, orders)) axpy(1.0, g, out);
  return out;
}

// Each task draws its own random order over the other tasks from the seed.
inline Vec pcgrad_aggregate(const TaskGradients& grads, std::uint64_t seed) {
  const std::size_t T = grads.num_tasks();
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> orders(T);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) {
      if (j != i) orders[i].push_back(j);
    }
    std::shuffle(orders[i].begin(), orders[i].end(), rng);
  }
  Vec out = zeros(grads.dim());
  for (const Vec& g : pcgrad_modified(grads, orders)) axpy(1.0, g, out);
  return out;
}

// ---------------------------------------------------------------------------
// Min-norm point of the convex hull (MGDA)

struct MinNormResult {
  std::vector<double> weights;  // convex coefficients
  Vec point;                    // sum_i weights_i g_i
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline constexpr std::size_t kExactMinNormMaxTasks = 10;

// Minimum-norm point of the affine hull of the tasks in `mask`, as simplex
// weights. Returns false if the solve fails or a weight is negative.
inline bool affine_minnorm(const std::vector<double>& gram, std::size_t T, unsigned mask,
                           std::vector<double>& weights) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < T; ++i) {
    if (mask & (1u << i)) idx.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m + 1);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) A(r, c) = gram[idx[r] * T + idx[c]];
    A(r, m) = 1.0;
    A(m, r) = 1.0;
  }
  b(m) = 1.0;
  const Eigen::VectorXd x = A.completeOrthogonalDecomposition().solve(b);
  if (!x.allFinite() || (A * x - b).norm() > 1e-9 * (1.0 + A.norm())) return false;
  weights.assign(T, 0.0);
  double sum = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    if (x(r) < -1e-12) return false;
    weights[idx[r]] = std::max(x(r), 0.0);
    sum += weights[idx[r]];
  }
  if (!(sum > 0.0)) return false;
  for (double& w : weights) w /= sum;
  return true;
}

inline double quad_form(const std::vector<double>& gram, std::size_t T, const std::vector<double>& w) {
  double q = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = 0; j < T; ++j) q += w[i] * gram[i * T + j] * w[j];
  }
  return q;
}

}  // namespace detail

// Frank-Wolfe on the Gram matrix with exact line search toward the best
// vertex. Stops when the duality gap falls below tol * max_i |g_i|^2.
//
// For small task counts the result is then refined exactly by searching the
// supports for one whose affine min-norm point satisfies the optimality
// conditions. A tiny result that still conflicts with some g_j is rounding
// noise around the origin and is returned as zero.
inline MinNormResult minnorm_weights(const TaskGradients& grads, int max_iter = 250,
                                     double tol = 1e-7) {
  const std::size_t T = grads.num_tasks();
  if (max_iter < 0) throw UsageError("minnorm_weights: negative iteration budget");

  std::vector<double> gram(T * T);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i; j < T; ++j) {
      gram[i * T + j] = gram[j * T + i] = dot(grads[i], grads[j]);
    }
    max_diag = std::max(max_diag, gram[i * T + i]);
  }

  MinNormResult res;
  res.weights.assign(T, 1.0 / static_cast<double>(T));
  std::vector<double> mg(T);
  auto gap = [&](const std::vector<double>& w) {
    double quad = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
      mg[i] = 0.0;
      for (std::size_t j = 0; j < T; ++j) mg[i] += gram[i * T + j] * w[j];
      quad += w[i] * mg[i];
    }
    return quad - *std::min_element(mg.begin(), mg.end());
  };
  for (; res.iterations < max_iter; ++res.iterations) {
    if (gap(res.weights) <= tol * max_diag) {
      res.converged = true;
      break;
    }
    const std::size_t t = static_cast<std::size_t>(
        std::min_element(mg.begin(), mg.end()) - mg.begin());
    double quad = 0.0;
    for (std::size_t i = 0; i < T; ++i) quad += res.weights[i] * mg[i];
    // Minimize |(1 - s) v + s g_t|^2 over s in [0, 1], v the current point.
    const double denom = quad - 2.0 * mg[t] + gram[t * T + t];
    if (denom <= 0.0) {
      res.converged = true;
      break;
    }
    const double s = std::clamp((quad - mg[t]) / denom, 0.0, 1.0);
    for (double& w : res.weights) w *= 1.0 - s;
    res.weights[t] += s;
  }
  if (!res.converged) res.converged = gap(res.weights) <= tol * max_diag;

  if (T <= detail::kExactMinNormMaxTasks) {
    const double slack = 1e-12 * max_diag;
    double best = detail::quad_form(gram, T, res.weights);
    std::vector<double> w;
    for (unsigned mask = 1; mask < (1u << T); ++mask) {
      if (!detail::affine_minnorm(gram, T, mask, w)) continue;
      const double q = detail::quad_form(gram, T, w);
      if (q <= best && gap(w) <= slack) {
        best = q;
        res.weights = w;
        res.converged = true;
      }
    }
  }

  res.point = zeros(grads.dim());
  for (std::size_t i = 0; i < T; ++i) axpy(res.weights[i], grads[i], res.point);
  const double pn = norm(res.point);
  if (pn > 0.0 && pn <= 1e-6 * std::sqrt(max_diag)) {
    for (std::size_t j = 0; j < T; ++j) {
      if (dot(res.point, grads[j]) < 0.0) {
        res.point = zeros(grads.dim());
        break;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// IMTL-G

struct ImtlGResult {
  std::vector<double> beta;  // sums to 1; zero for zero-norm tasks
  Vec update;
};

// Finds G = sum_i beta_i g_i with sum beta = 1 whose projections onto every
// unit task direction are equal. Zero-norm tasks carry no direction and are
// left out of both the combination and the constraints. The bordered system
// is solved in the minimum-norm least-squares sense.
inline ImtlGResult imtlg_solve(const TaskGradients& grads) {
  const std::size_t T = grads.num_tasks();
  std::vector<std::size_t> active;
  std::vector<double> norms(T);
  for (std::size_t i = 0; i < T; ++i) {
    norms[i] = norm(grads[i]);
    if (norms[i] > 0.0) active.push_back(i);
  }
  if (active.empty()) throw DegenerateError("imtl-g: all task gradients are zero");

  const auto m = static_cast<Eigen::Index>(active.size());
  // Unknowns (beta_active, c): sum_j beta_j (g_j . u_i) - c = 0, sum beta = 1.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m + 1);
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = active[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m; ++c) {
      const std::size_t j = active[static_cast<std::size_t>(c)];
      A(r, c) = dot(grads[j], grads[i]) / norms[i];
    }
    A(r, m) = -1.0;
  }
  A.block(m, 0, 1, m).setOnes();
  b(m) = 1.0;

  const Eigen::VectorXd x = A.completeOrthogonalDecomposition().solve(b);
  const double residual = (A * x - b).norm();
  double scale = 1.0;
  for (std::size_t i : active) scale = std::max(scale, norms[i]);
  if (!x.allFinite() || residual > 1e-8 * scale) {
    throw DegenerateError("imtl-g: equal-projection system has no solution");
  }

  ImtlGResult res;
  res.beta.assign(T, 0.0);
  res.update = zeros(grads.dim());
  for (Eigen::Index r = 0; r < m; ++r) {
    const std::size_t i = active[static_cast<std::size_t>(r)];
    res.beta[i] = x(r);
    axpy(x(r), grads[i], res.update);
  }
  return res;
}

inline Vec imtlg_aggregate(const TaskGradients& grads) { return imtlg_solve(grads).update; }

// ---------------------------------------------------------------------------
// GradOPS

// Deconflict, then reweight and combine. When every deconflicted gradient
// vanishes the update falls back to the min-norm point of the originals.
inline AggregationResult gradops_aggregate(const TaskGradients& grads, double alpha,
                                           WeightVariant variant = WeightVariant::kIdentity,
                                           const Tolerances& tolerances = {}) {
  AggregationResult result;
  auto& diag = result.diagnostics;
  const DeconflictOutcome outcome = deconflict_all(grads, tolerances.deconflict);
  diag.conflicted = outcome.conflicted;
  if (outcome.all_zero) {
    const MinNormResult mn =
        minnorm_weights(grads, tolerances.minnorm_max_iter, tolerances.minnorm_tol);
    result.update = mn.point;
    diag.weights = mn.weights;
    diag.fallback = true;
    diag.converged = mn.converged;
  } else {
    const TradeoffWeights tw =
        tradeoff_weights(outcome, grads, alpha, variant, tolerances.weight_eps,
                         tolerances.ratio_slack);
    result.update = combine(outcome.modified, tw.w);
    diag.weights = tw.w;
    diag.ratios = tw.r;
  }
  return result;
}

// ---------------------------------------------------------------------------

inline AggregationResult aggregate(const MethodSpec& spec, const TaskGradients& grads) {
  AggregationResult result;
  const std::size_t T = grads.num_tasks();
  switch (spec.kind) {
    case MethodKind::kGd:
      result.update = grads.sum();
      result.diagnostics.weights.assign(T, 1.0);
      break;
    case MethodKind::kPcgrad:
      result.update = pcgrad_aggregate(grads, spec.seed);
      result.diagnostics.weights.assign(T, 1.0);
      break;
    case MethodKind::kMgda: {
      const MinNormResult mn = minnorm_weights(grads, spec.tolerances.minnorm_max_iter,
                                               spec.tolerances.minnorm_tol);
      result.update = mn.point;
      result.diagnostics.weights = mn.weights;
      result.diagnostics.converged = mn.converged;
      break;
    }
    case MethodKind::kImtlG: {
      ImtlGResult im = imtlg_solve(grads);
      result.update = std::move(im.update);
      result.diagnostics.weights = std::move(im.beta);
      break;
    }
    case MethodKind::kGradops:
      result = gradops_aggregate(grads, spec.alpha, spec.variant, spec.tolerances);
      break;
    default:
      throw UsageError("aggregate: unknown method kind");
  }
  result.diagnostics.dots.resize(T);
  for (std::size_t j = 0; j < T; ++j) result.diagnostics.dots[j] = dot(result.update, grads[j]);
  return result;
}

}  // namespace gradops
