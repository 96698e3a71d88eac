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

// Dominance-based reweighting of deconflicted gradients.
//
// R_i is the scalar projection of G' = sum_i g'_i onto the original g_i, r_i
// is R_i relative to the mean of R, and w_i = r_i^alpha relative to the mean
// of r^alpha. Tasks with r_i > 1 are dominating; alpha > 0 favours them and
// alpha < 0 favours the dominated ones. Both r and w sum to T.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gradops/deconflict.hpp"
#include "gradops/densecore.hpp"

namespace gradops {

enum class WeightVariant {
  kIdentity,  // ratios from R_i directly; R_i must be non-negative
  kExp,       // ratios from exp(R_i); any finite R_i
};

inline const char* to_string(WeightVariant v) {
  return v == WeightVariant::kExp ? "exp" : "identity";
}

inline WeightVariant parse_weight_variant(const std::string& s) {
  if (s == "identity") return WeightVariant::kIdentity;
  if (s == "exp") return WeightVariant::kExp;
  throw UsageError("unknown weight variant '" + s + "' (expected identity|exp)");
}

struct TradeoffWeights {
  std::vector<double> R;
  std::vector<double> r;
  std::vector<double> w;
  double alpha = 0.0;
  WeightVariant variant = WeightVariant::kIdentity;
};

// R_i = (G' . g_i) / |g_i|; zero-norm g_i gives R_i = 0.
inline std::vector<double> scalar_projections(ConstVecView g_prime_sum,
                                              const TaskGradients& grads) {
  require_same_dim(g_prime_sum, grads[0], "scalar_projections");
  std::vector<double> R(grads.num_tasks(), 0.0);
  for (std::size_t i = 0; i < grads.num_tasks(); ++i) {
    const double n = norm(grads[i]);
    if (n > 0.0) R[i] = dot(g_prime_sum, grads[i]) / n;
  }
  return R;
}

// r_i = t_i / (sum t / T) with t_i = R_i or exp(R_i).
//
// Identity variant: entries in [-max(negative_slack * sum|R|, abs_slack), 0)
// are rounding noise and are read as 0; anything more negative is a usage
// error. If every R_i is zero, all ratios are 1.
inline std::vector<double> normalize_ratios(std::span<const double> R, WeightVariant variant,
                                            double negative_slack = 1e-10,
                                            double abs_slack = 0.0) {
  if (R.empty()) throw UsageError("normalize_ratios: empty input");
  const double T = static_cast<double>(R.size());
  std::vector<double> t(R.begin(), R.end());

  if (variant == WeightVariant::kExp) {
    // Shifting by the max cancels in the ratio and keeps exp finite.
    const double shift = *std::max_element(t.begin(), t.end());
    for (double& x : t) x = std::exp(x - shift);
  } else {
    double abs_sum = 0.0;
    for (double x : t) abs_sum += std::fabs(x);
    for (double& x : t) {
      if (x < 0.0) {
        if (x < -std::max(negative_slack * abs_sum, abs_slack)) {
          throw UsageError("normalize_ratios: negative R with identity variant");
        }
        x = 0.0;
      }
    }
  }

  double sum = 0.0;
  for (double x : t) sum += x;
  std::vector<double> r(t.size(), 1.0);
  if (sum == 0.0) return r;
  const double mean = sum / T;
  for (std::size_t i = 0; i < t.size(); ++i) r[i] = t[i] / mean;
  return r;
}

// w_i = max(r_i, eps)^alpha / (sum_k max(r_k, eps)^alpha / T). alpha = 0 gives
// exactly 1 for every task.
inline std::vector<double> weights(std::span<const double> r, double alpha, double eps = 1e-8) {
  if (r.empty()) throw UsageError("weights: empty input");
  if (!std::isfinite(alpha)) throw UsageError("weights: alpha must be finite");
  const double T = static_cast<double>(r.size());
  std::vector<double> p(r.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    p[i] = std::pow(std::max(r[i], eps), alpha);
    sum += p[i];
  }
  const double mean = sum / T;
  for (double& x : p) x /= mean;
  return p;
}

// sum_i w_i g'_i
inline Vec combine(std::span<const Vec> modified, std::span<const double> w) {
  if (modified.empty() || modified.size() != w.size()) {
    throw UsageError("combine: need one weight per gradient");
  }
  Vec out = zeros(modified.front().size());
  for (std::size_t i = 0; i < modified.size(); ++i) {
    if (w[i] < 0.0) throw UsageError("combine: negative weight for task " + std::to_string(i));
    axpy(w[i], modified[i], out);
  }
  return out;
}

// R_i inherits rounding error of order eps * max_k |g_k| from the projections,
// which can exceed R itself when the gradient norms are badly imbalanced.
// Negative R above -r_slack * max_k |g_k| is therefore read as 0.
inline TradeoffWeights tradeoff_weights(const DeconflictOutcome& outcome,
                                        const TaskGradients& grads, double alpha,
                                        WeightVariant variant = WeightVariant::kIdentity,
                                        double eps = 1e-8, double r_slack = 1e-8) {
  TradeoffWeights tw;
  tw.alpha = alpha;
  tw.variant = variant;
  tw.R = scalar_projections(outcome.sum(), grads);
  double max_norm = 0.0;
  for (const Vec& g : grads.rows()) max_norm = std::max(max_norm, norm(g));
  tw.r = normalize_ratios(tw.R, variant, 1e-10, r_slack * max_norm);
  tw.w = weights(tw.r, alpha, eps);
  return tw;
}

}  // namespace gradops
