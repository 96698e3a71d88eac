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

#include "gradops/aggregators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gradops/errors.hpp"
#include "oracles.hpp"

namespace gradops {
namespace {

MethodSpec spec_of(MethodKind kind, double alpha = 0.0) {
  MethodSpec s;
  s.kind = kind;
  s.alpha = alpha;
  return s;
}

TEST(MethodKind, RoundTrip) {
  for (auto k : {MethodKind::kGd, MethodKind::kPcgrad, MethodKind::kMgda, MethodKind::kImtlG,
                 MethodKind::kGradops}) {
    EXPECT_EQ(parse_method_kind(to_string(k)), k);
  }
  EXPECT_EQ(to_string(MethodKind::kImtlG), "imtl-g");
  EXPECT_THROW(parse_method_kind("cagrad"), UsageError);
}

TEST(Aggregate, GdIsPlainSum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto rows = oracle::random_rows(rng, 3, 6);
    const auto res = aggregate(spec_of(MethodKind::kGd), TaskGradients(rows));
    EXPECT_LT(oracle::max_abs_diff(res.update, oracle::sum_rows(rows)), 1e-14);
  }
}

TEST(Aggregate, DotsDiagnosticMatchesUpdate) {
  const TaskGradients g({{1, 0}, {-1, 1}, {0.2, 0.3}});
  const auto res = aggregate(spec_of(MethodKind::kGradops, -1.0), g);
  ASSERT_EQ(res.diagnostics.dots.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(res.diagnostics.dots[j], dot(res.update, g[j]));
}

TEST(Pcgrad, TwoTaskExample) {
  const TaskGradients g({{1, 0}, {-1, 1}});
  const std::vector<std::vector<std::size_t>> orders{{1}, {0}};
  const auto mod = pcgrad_modified(g, orders);
  EXPECT_LT(oracle::max_abs_diff(mod[0], {0.5, 0.5}), 1e-15);
  EXPECT_LT(oracle::max_abs_diff(mod[1], {0.0, 1.0}), 1e-15);
  const Vec ops = gradops_aggregate(g, 0.0).update;
  EXPECT_LT(oracle::max_abs_diff(pcgrad_aggregate(g, 3), ops), 1e-15);
}

TEST(Pcgrad, NonConflictingUnchanged) {
  const TaskGradients g({{1, 0.5, 0}, {0.3, 1, 0}, {0, 0, 2}});
  EXPECT_EQ(pcgrad_aggregate(g, 0), g.sum());
}

TEST(Pcgrad, OrderDependenceAndConflictExist) {
  std::mt19937_64 rng(12);
  bool order_dependent = false, conflicts = false;
  for (int trial = 0; trial < 500 && !(order_dependent && conflicts); ++trial) {
    const auto rows = oracle::random_rows(rng, 3 + trial % 3, 2 + trial % 5);
    const TaskGradients g(rows);
    std::vector<std::size_t> order(g.num_tasks());
    std::iota(order.begin(), order.end(), 0);
    const Vec a = pcgrad_in_order(g, order);
    std::reverse(order.begin(), order.end());
    const Vec b = pcgrad_in_order(g, order);
    if (oracle::max_abs_diff(a, b) > 1e-8 * (1 + oracle::norm(a))) order_dependent = true;
    for (std::size_t j = 0; j < g.num_tasks(); ++j) {
      if (oracle::dot(a, g[j]) < -1e-8 * oracle::norm(a) * oracle::norm(g[j])) conflicts = true;
    }
  }
  EXPECT_TRUE(order_dependent);
  EXPECT_TRUE(conflicts);
}

TEST(Pcgrad, SeedDeterminism) {
  std::mt19937_64 rng(13);
  const TaskGradients g(oracle::random_rows(rng, 5, 4));
  EXPECT_EQ(pcgrad_aggregate(g, 42), pcgrad_aggregate(g, 42));
}

TEST(MinNorm, Examples) {
  const auto a = minnorm_weights(TaskGradients({{1, 0}, {0, 1}}));
  EXPECT_NEAR(a.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(a.weights[1], 0.5, 1e-12);
  EXPECT_LT(oracle::max_abs_diff(a.point, {0.5, 0.5}), 1e-12);
  EXPECT_TRUE(a.converged);

  const auto b = minnorm_weights(TaskGradients({{1, 0}, {-1, 0}}));
  EXPECT_NEAR(b.weights[0], 0.5, 1e-12);
  EXPECT_LT(oracle::norm(b.point), 1e-12);
}

TEST(MinNorm, MatchesTwoTaskClosedForm) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 500; ++trial) {
    const auto rows = oracle::random_rows(rng, 2, 2 + trial % 30);
    const auto res = minnorm_weights(TaskGradients(rows));
    const double gamma = oracle::two_task_gamma(rows[0], rows[1]);
    EXPECT_NEAR(res.weights[0], gamma, 1e-6);
    EXPECT_NEAR(res.weights[1], 1 - gamma, 1e-6);
  }
}

TEST(MinNorm, ConvexWeightsAndNoBetterVertex) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const auto rows = oracle::random_rows(rng, 2 + trial % 5, 3 + trial % 10);
    const TaskGradients g(rows);
    const auto res = minnorm_weights(g);
    double s = 0;
    for (double w : res.weights) {
      EXPECT_GE(w, 0.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    // Optimality: no vertex improves on the point to first order.
    EXPECT_TRUE(res.converged);
    Vec p(rows.front().size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < p.size(); ++k) p[k] += res.weights[i] * rows[i][k];
    }
    const double pp = oracle::dot(p, p);
    double max_sq = 0;
    for (const auto& r : rows) max_sq = std::max(max_sq, oracle::dot(r, r));
    for (const auto& r : rows) EXPECT_GE(oracle::dot(p, r) - pp, -1e-10 * max_sq);
    // The returned point is either that combination or snapped to zero.
    if (oracle::norm(res.point) > 0) EXPECT_LT(oracle::max_abs_diff(res.point, p), 1e-12 * (1 + max_sq));
  }
}

TEST(ImtlG, Examples) {
  const auto a = imtlg_solve(TaskGradients({{1, 0}, {0, 1}}));
  EXPECT_LT(oracle::max_abs_diff(a.update, {0.5, 0.5}), 1e-14);
  EXPECT_NEAR(a.beta[0], 0.5, 1e-14);
  const auto b = imtlg_solve(TaskGradients({{0.3, -2}, {0.3, -2}}));
  EXPECT_LT(oracle::max_abs_diff(b.update, {0.3, -2}), 1e-12);
}

TEST(ImtlG, EqualProjectionsOnFuzzedInstances) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 2 + trial % 5;
    const auto rows = oracle::random_rows(rng, T, T + trial % 20);
    const auto res = imtlg_solve(TaskGradients(rows));
    double bsum = 0;
    for (double b : res.beta) bsum += b;
    EXPECT_NEAR(bsum, 1.0, 1e-10);
    std::vector<double> p;
    for (const auto& r : rows) p.push_back(oracle::dot(res.update, r) / oracle::norm(r));
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    EXPECT_LE(*hi - *lo, 1e-8 * oracle::norm(res.update));
  }
}

TEST(ImtlG, AllZeroIsDegenerate) {
  EXPECT_THROW(imtlg_solve(TaskGradients({{0, 0}, {0, 0}})), DegenerateError);
}

TEST(Gradops, NonConflictingAlphaZeroIsGd) {
  const TaskGradients g({{1, 0.5, 0}, {0.3, 1, 0}, {0, 0, 2}});
  EXPECT_EQ(gradops_aggregate(g, 0.0).update, g.sum());
}

TEST(Gradops, AntipodalFallsBackToMinNorm) {
  const auto res = aggregate(spec_of(MethodKind::kGradops), TaskGradients({{1, 0}, {-1, 0}}));
  EXPECT_TRUE(res.diagnostics.fallback);
  EXPECT_LT(oracle::norm(res.update), 1e-12);
}

TEST(Gradops, FixesTheGdConflictOfAThreeTaskInstance) {
  // Sum of gradients points against task 3.
  const TaskGradients g({{1, 0, 0}, {0, 1, 0}, {-0.6, -0.6, 0.2}});
  const Vec gd = g.sum();
  EXPECT_LT(dot(gd, g[2]), 0.0);
  const auto res = gradops_aggregate(g, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_GE(dot(res.update, g[j]), -1e-8 * norm(res.update) * norm(g[j]));
  }
}

TEST(Gradops, AlphaRedirectsUpdate) {
  const TaskGradients g({{3, 0, 0.2}, {-1, 1, 0}, {0, 0.1, 1}});
  const auto base = gradops_aggregate(g, 0.0);
  ASSERT_FALSE(base.diagnostics.fallback);
  const auto& r = base.diagnostics.ratios;
  std::vector<Vec> dirs;
  std::vector<std::vector<double>> ws;
  for (double alpha : {-2.0, 0.0, 2.0}) {
    const auto res = gradops_aggregate(g, alpha);
    Vec u = res.update;
    const double n = norm(u);
    for (double& x : u) x /= n;
    dirs.push_back(u);
    ws.push_back(res.diagnostics.weights);
    // Ratios do not depend on alpha.
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(res.diagnostics.ratios[i], r[i]);
  }
  EXPECT_GT(oracle::max_abs_diff(dirs[0], dirs[1]), 1e-3);
  EXPECT_GT(oracle::max_abs_diff(dirs[1], dirs[2]), 1e-3);
  const std::size_t top = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  EXPECT_LT(ws[0][top], ws[1][top]);
  EXPECT_LT(ws[1][top], ws[2][top]);
}

TEST(Gradops, WeakNonConflictFuzz) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pickT(2, 6), pickd(2, 50);
  std::size_t violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const TaskGradients g(oracle::random_rows(rng, pickT(rng), pickd(rng)));
    for (double alpha : {-3.0, 0.0, 2.0}) {
      const auto res = gradops_aggregate(g, alpha);
      for (std::size_t j = 0; j < g.num_tasks(); ++j) {
        if (oracle::dot(res.update, g[j]) < -1e-8 * oracle::norm(res.update) * oracle::norm(g[j])) {
          ++violations;
        }
      }
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Gradops, EqualsPcgradForTwoTasksAlphaZero) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 500; ++trial) {
    const TaskGradients g(oracle::random_rows(rng, 2, 2 + trial % 20));
    EXPECT_LT(oracle::max_abs_diff(gradops_aggregate(g, 0.0).update, pcgrad_aggregate(g, trial)), 1e-10);
  }
}

TEST(Gradops, PermutationInvariant) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 3 + trial % 4;
    const auto rows = oracle::random_rows(rng, T, T + 2);
    const auto base = gradops_aggregate(TaskGradients(rows), -1.0);
    std::vector<std::size_t> perm(T);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec> permuted;
    for (std::size_t p : perm) permuted.push_back(rows[p]);
    const auto res = gradops_aggregate(TaskGradients(permuted), -1.0);
    EXPECT_LT(oracle::max_abs_diff(res.update, base.update), 1e-9 * (1 + oracle::norm(base.update)));
    for (std::size_t k = 0; k < T; ++k) {
      EXPECT_NEAR(res.diagnostics.weights[k], base.diagnostics.weights[perm[k]], 1e-9);
    }
  }
}

}  // namespace
}  // namespace gradops
