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

#include "gradops/reweight.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradops/deconflict.hpp"
#include "gradops/errors.hpp"
#include "oracles.hpp"

namespace gradops {
namespace {

std::vector<double> R_of(const Vec& gp, const std::vector<Vec>& rows) {
  return scalar_projections(gp, TaskGradients(rows));
}

TEST(ScalarProjections, Examples) {
  EXPECT_EQ(R_of({2, 0}, {{1, 0}, {1, 0}})[0], 2.0);
  EXPECT_EQ(R_of({1, 1}, {{0, 3}, {1, 0}})[0], 1.0);
  EXPECT_EQ(R_of({1, 0}, {{0, 5}, {1, 0}})[0], 0.0);
  EXPECT_THROW(R_of({1, 0, 0}, {{0, 5}, {1, 0}}), UsageError);
}

TEST(NormalizeRatios, Examples) {
  const std::vector<double> ones{1, 1, 1};
  EXPECT_EQ(normalize_ratios(ones, WeightVariant::kIdentity), ones);
  const std::vector<double> R{3, 1, 2};
  const auto r = normalize_ratios(R, WeightVariant::kIdentity);
  EXPECT_DOUBLE_EQ(r[0], 1.5);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
  EXPECT_DOUBLE_EQ(r[2], 1.0);
  const std::vector<double> zero{0, 0};
  EXPECT_EQ(normalize_ratios(zero, WeightVariant::kIdentity), (std::vector<double>{1, 1}));
}

TEST(NormalizeRatios, ExpVariant) {
  const std::vector<double> R{0.0, std::log(3.0)};
  const auto r = normalize_ratios(R, WeightVariant::kExp);
  EXPECT_NEAR(r[0], 0.5, 1e-15);
  EXPECT_NEAR(r[1], 1.5, 1e-15);
  // Large R stays finite.
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_EQ(normalize_ratios(big, WeightVariant::kExp), (std::vector<double>{1, 1}));
}

TEST(NormalizeRatios, NegativeIdentityIsUsageError) {
  const std::vector<double> R{1.0, -0.5};
  EXPECT_THROW(normalize_ratios(R, WeightVariant::kIdentity), UsageError);
}

TEST(NormalizeRatios, MeanIsOne) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> R(2 + trial % 6);
    for (double& x : R) x = u(rng);
    for (auto variant : {WeightVariant::kIdentity, WeightVariant::kExp}) {
      const auto r = normalize_ratios(R, variant);
      double s = 0;
      for (double x : r) s += x;
      EXPECT_NEAR(s, static_cast<double>(R.size()), 1e-12);
    }
  }
}

TEST(Weights, Examples) {
  const std::vector<double> r{1.5, 1.0, 0.5};
  EXPECT_EQ(weights(r, 0.0), (std::vector<double>{1, 1, 1}));
  const auto w1 = weights(r, 1.0);
  EXPECT_DOUBLE_EQ(w1[0], 1.5);
  EXPECT_DOUBLE_EQ(w1[1], 1.0);
  EXPECT_DOUBLE_EQ(w1[2], 0.5);
  const auto wm1 = weights(r, -1.0);
  EXPECT_NEAR(wm1[0], 6.0 / 11.0, 1e-15);
  EXPECT_NEAR(wm1[1], 9.0 / 11.0, 1e-15);
  EXPECT_NEAR(wm1[2], 18.0 / 11.0, 1e-15);
}

TEST(Weights, SumToTaskCountAndOrderWithAlpha) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(2 + trial % 5);
    for (double& x : r) x = u(rng);
    for (double alpha : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
      const auto w = weights(r, alpha);
      double s = 0;
      for (double x : w) s += x;
      EXPECT_NEAR(s, static_cast<double>(r.size()), 1e-12);
      for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t j = 0; j < r.size(); ++j) {
          if (r[i] <= r[j]) continue;
          if (alpha > 0) EXPECT_GT(w[i], w[j]);
          if (alpha < 0) EXPECT_LT(w[i], w[j]);
        }
      }
    }
  }
}

TEST(Weights, ZeroRatioClampedByEps) {
  const std::vector<double> r{0.0, 2.0};
  const auto w = weights(r, -1.0, 1e-8);
  EXPECT_TRUE(std::isfinite(w[0]));
  EXPECT_NEAR(w[0] + w[1], 2.0, 1e-12);
  EXPECT_GT(w[0], w[1]);
}

TEST(Combine, Examples) {
  const std::vector<Vec> g{{1, 0}, {0, 1}};
  EXPECT_EQ(combine(g, std::vector<double>{1, 1}), (Vec{1, 1}));
  EXPECT_EQ(combine(g, std::vector<double>{2, 0}), (Vec{2, 0}));
  EXPECT_THROW(combine(g, std::vector<double>{1, -1}), UsageError);
  EXPECT_THROW(combine(g, std::vector<double>{1}), UsageError);
}

TEST(Combine, WeakNonConflictOnFuzzedInstances) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rows = oracle::random_rows(rng, 2 + trial % 5, 3 + trial % 30);
    const TaskGradients g(rows);
    const DeconflictOutcome out = deconflict_all(g);
    if (out.all_zero) continue;
    for (double alpha : {-3.0, 0.0, 2.0}) {
      const TradeoffWeights tw = tradeoff_weights(out, g, alpha);
      const Vec u = combine(out.modified, tw.w);
      for (std::size_t j = 0; j < g.num_tasks(); ++j) {
        EXPECT_GE(oracle::dot(u, g[j]), -1e-8 * norm(u) * norm(g[j]));
      }
    }
  }
}

TEST(TradeoffWeights, ScaleEquivariant) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    auto rows = oracle::random_rows(rng, 3, 8);
    const TaskGradients g(rows);
    const auto a = tradeoff_weights(deconflict_all(g), g, -2.0);
    for (auto& r : rows) {
      for (double& x : r) x *= 7.5;
    }
    const TaskGradients g2(rows);
    const auto b = tradeoff_weights(deconflict_all(g2), g2, -2.0);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(a.r[i], b.r[i], 1e-9 * (1 + a.r[i]));
      EXPECT_NEAR(a.w[i], b.w[i], 1e-9 * (1 + a.w[i]));
    }
  }
}

TEST(Variant, RoundTrip) {
  EXPECT_EQ(parse_weight_variant("identity"), WeightVariant::kIdentity);
  EXPECT_EQ(parse_weight_variant("exp"), WeightVariant::kExp);
  EXPECT_EQ(to_string(WeightVariant::kExp), "exp");
  EXPECT_THROW(parse_weight_variant("log"), UsageError);
}

}  // namespace
}  // namespace gradops
