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

// Two-task landscape on R^2 with a deep valley and a large gradient-magnitude
// imbalance between the tasks. For theta2 > 0 the log-valley terms f_i are
// active, for theta2 < 0 the bowl terms g_i are; the blend factors c1, c2
// vanish on theta2 = 0.
//
//   a_1 = 5(-x - 0.7) - tanh(-3y)         a_2 = 5(-x + 0.7) - tanh(-3y)
//   f_i = log(max(|a_i|, 0.0005)) + 1
//   g_1 = 1.5 tanh(2(-x + 0.7)^2)(x^2 + 1) + (-y - 0.8)^2 - 2.5
//   g_2 = 1.5 tanh(2(-x - 0.7)^2)(x^2 + 1) + (-y - 0.8)^2 - 2.5
//   c_1 = max(tanh(5y), 0)                c_2 = max(tanh(-5y), 0)
//   L_1 = c_1 f_1 + c_2 g_1               L_2 = c_1 f_2 + c_2 g_2
//
// Derivative conventions at kinks: d|a|/da = 0 at a = 0, and max(p, q) takes
// the derivative of p on ties.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gradops/aggregators.hpp"
#include "gradops/densecore.hpp"
#include "gradops/optim.hpp"

namespace gradops::toy2d {

struct ToyPoint {
  double theta1 = 0.0;
  double theta2 = 0.0;

  Vec as_vec() const { return {theta1, theta2}; }
};

struct ToyLosses {
  double loss1 = 0.0;
  double loss2 = 0.0;
};

struct ToyGrads {
  Vec g1;
  Vec g2;
};

inline constexpr double kLogFloor = 0.0005;

inline const std::array<ToyPoint, 3>& preset_inits() {
  static const std::array<ToyPoint, 3> inits{
      ToyPoint{-0.85, 0.75}, ToyPoint{-0.85, -0.3}, ToyPoint{0.9, 0.9}};
  return inits;
}

namespace detail {

struct Term {
  double value;
  double d1;
  double d2;
};

inline double sech2(double x) {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

// log(max(|5(-x + shift) - tanh(-3y)|, floor)) + 1
inline Term log_valley(double x, double y, double shift) {
  const double a = 5.0 * (-x + shift) - std::tanh(-3.0 * y);
  const double da_dx = -5.0;
  const double da_dy = 3.0 * sech2(3.0 * y);
  const double abs_a = std::fabs(a);
  if (abs_a >= kLogFloor) {
    const double sign = a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    return {std::log(abs_a) + 1.0, sign * da_dx / abs_a, sign * da_dy / abs_a};
  }
  return {std::log(kLogFloor) + 1.0, 0.0, 0.0};
}

// 1.5 tanh(2(x - center)^2)(x^2 + 1) + (y + 0.8)^2 - 2.5
inline Term bowl(double x, double y, double center) {
  const double s = x - center;
  const double th = std::tanh(2.0 * s * s);
  const double q = x * x + 1.0;
  const double value = 1.5 * th * q + (y + 0.8) * (y + 0.8) - 2.5;
  const double d1 = 1.5 * sech2(2.0 * s * s) * 4.0 * s * q + 1.5 * th * 2.0 * x;
  const double d2 = 2.0 * (y + 0.8);
  return {value, d1, d2};
}

// max(tanh(k y), 0) and its derivative in y
inline Term gate(double y, double k) {
  const double t = std::tanh(k * y);
  if (t >= 0.0) return {t, 0.0, k * sech2(k * y)};
  return {0.0, 0.0, 0.0};
}

struct Pieces {
  Term f1, f2, g1, g2, c1, c2;
};

inline Pieces pieces(const ToyPoint& p) {
  const double x = p.theta1;
  const double y = p.theta2;
  return {log_valley(x, y, -0.7), log_valley(x, y, 0.7), bowl(x, y, 0.7),
          bowl(x, y, -0.7),       gate(y, 5.0),          gate(y, -5.0)};
}

inline Vec blend_grad(const Term& c1, const Term& f, const Term& c2, const Term& g) {
  return {c1.d1 * f.value + c1.value * f.d1 + c2.d1 * g.value + c2.value * g.d1,
          c1.d2 * f.value + c1.value * f.d2 + c2.d2 * g.value + c2.value * g.d2};
}

}  // namespace detail

inline ToyLosses toy_losses(const ToyPoint& p) {
  const detail::Pieces s = detail::pieces(p);
  return {s.c1.value * s.f1.value + s.c2.value * s.g1.value,
          s.c1.value * s.f2.value + s.c2.value * s.g2.value};
}

inline ToyGrads toy_grads(const ToyPoint& p) {
  const detail::Pieces s = detail::pieces(p);
  return {detail::blend_grad(s.c1, s.f1, s.c2, s.g1), detail::blend_grad(s.c1, s.f2, s.c2, s.g2)};
}

// min over gamma in [0, 1] of |gamma g1 + (1 - gamma) g2|.
inline double stationarity_residual(ConstVecView g1, ConstVecView g2) {
  require_same_dim(g1, g2, "stationarity_residual");
  const Vec diff = subtract(g1, g2);
  const double dd = squared_norm(diff);
  double gamma = 0.5;
  if (dd > 0.0) gamma = std::clamp(-dot(g2, diff) / dd, 0.0, 1.0);
  Vec point(g2.begin(), g2.end());
  axpy(gamma, diff, point);
  return norm(point);
}

struct TrajectoryStep {
  std::size_t step = 0;
  ToyPoint theta;
  ToyLosses losses;
  Vec g1;
  Vec g2;
  Vec update;
  double residual = 0.0;
};

struct TrajectoryRecord {
  std::vector<TrajectoryStep> steps;
  MethodSpec method;
  ToyPoint init;
  AdamHyper adam;
  // Set when a non-finite value stopped the run early.
  bool diverged = false;
  std::string diagnostic;

  const TrajectoryStep& last() const { return steps.back(); }
};

// `steps` Adam updates from `init`. Step k records the state before update k
// is applied; a final entry records the terminal point, so a complete run has
// steps + 1 entries.
inline TrajectoryRecord run_trajectory(const MethodSpec& method, const ToyPoint& init,
                                       std::size_t steps, const AdamHyper& adam = {}) {
  if (steps < 1) throw UsageError("run_trajectory: steps must be >= 1");
  if (!std::isfinite(init.theta1) || !std::isfinite(init.theta2)) {
    throw UsageError("run_trajectory: non-finite initial point");
  }
  TrajectoryRecord rec;
  rec.method = method;
  rec.init = init;
  rec.adam = adam;
  rec.steps.reserve(steps + 1);

  Vec theta = init.as_vec();
  AdamState state(2, adam);
  for (std::size_t k = 0; k <= steps; ++k) {
    TrajectoryStep s;
    s.step = k;
    s.theta = {theta[0], theta[1]};
    s.losses = toy_losses(s.theta);
    ToyGrads g = toy_grads(s.theta);
    s.g1 = std::move(g.g1);
    s.g2 = std::move(g.g2);
    if (!std::isfinite(s.losses.loss1) || !std::isfinite(s.losses.loss2) || !all_finite(s.g1) ||
        !all_finite(s.g2)) {
      rec.diverged = true;
      rec.diagnostic = "non-finite loss or gradient at step " + std::to_string(k);
      break;
    }
    s.residual = stationarity_residual(s.g1, s.g2);
    if (k < steps) {
      s.update = aggregate(method, TaskGradients({s.g1, s.g2})).update;
      if (!all_finite(s.update)) {
        rec.diverged = true;
        rec.diagnostic = "non-finite update at step " + std::to_string(k);
        rec.steps.push_back(std::move(s));
        break;
      }
      state.step(theta, s.update);
    } else {
      s.update = zeros(2);
    }
    rec.steps.push_back(std::move(s));
  }
  return rec;
}

}  // namespace gradops::toy2d
