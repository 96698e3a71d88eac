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

// Dense double-precision vector kernels. Every routine here is a pure function
// of its arguments and sums in index order, so identical inputs give
// bit-identical outputs.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gradops/errors.hpp"

namespace gradops {

using Vec = std::vector<double>;
using ConstVecView = std::span<const double>;

inline void require_same_dim(ConstVecView a, ConstVecView b, const char* where) {
  if (a.size() != b.size()) {
    throw UsageError(std::string(where) + ": dimension mismatch (" +
                     std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
}

inline bool all_finite(ConstVecView v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_finite(ConstVecView v, const char* where) {
  if (!all_finite(v)) throw UsageError(std::string(where) + ": non-finite entry");
}

inline double dot(ConstVecView v, ConstVecView w) {
  require_same_dim(v, w, "dot");
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += v[k] * w[k];
  return s;
}

inline double squared_norm(ConstVecView v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double norm(ConstVecView v) { return std::sqrt(squared_norm(v)); }

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

// y += a * x
inline void axpy(double a, ConstVecView x, std::span<double> y) {
  if (x.size() != y.size()) throw UsageError("axpy: dimension mismatch");
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

inline Vec scaled(double a, ConstVecView x) {
  Vec out(x.begin(), x.end());
  for (double& e : out) e *= a;
  return out;
}

inline Vec add(ConstVecView a, ConstVecView b) {
  require_same_dim(a, b, "add");
  Vec out(a.begin(), a.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b[k];
  return out;
}

inline Vec subtract(ConstVecView a, ConstVecView b) {
  require_same_dim(a, b, "subtract");
  Vec out(a.begin(), a.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b[k];
  return out;
}

inline bool is_zero(ConstVecView v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

// Projection of v onto the line spanned by u: (u.v / |u|^2) u.
// Throws DegenerateError when |u| <= min_norm.
inline Vec proj(ConstVecView u, ConstVecView v, double min_norm = 0.0) {
  require_same_dim(u, v, "proj");
  const double uu = squared_norm(u);
  if (!(std::sqrt(uu) > min_norm)) {
    throw DegenerateError("proj: direction has near-zero norm");
  }
  return scaled(dot(u, v) / uu, u);
}

struct GramSchmidtOptions {
  // A candidate is dropped when its orthogonalized norm is <= tol times its
  // original norm.
  double tol = 1e-10;
  // Run a second classical pass over each candidate (CGS2).
  bool reorthogonalize = false;
};

// Mutually orthogonal vectors spanning the same space as the inputs they
// were built from.
struct Basis {
  std::vector<Vec> vectors;
  std::vector<double> squared_norms;
  double tol = 0.0;

  std::size_t size() const noexcept { return vectors.size(); }
  bool empty() const noexcept { return vectors.empty(); }

  // v minus its component in span(vectors). Coefficients for every basis
  // vector are taken against the same v (classical form).
  Vec residual(ConstVecView v) const {
    Vec out(v.begin(), v.end());
    for (std::size_t j = 0; j < vectors.size(); ++j) {
      axpy(-dot(vectors[j], v) / squared_norms[j], vectors[j], out);
    }
    return out;
  }
};

// Classical Gram-Schmidt in input order with rank-deficiency dropping.
inline Basis gram_schmidt(std::span<const Vec> vectors, GramSchmidtOptions options = {}) {
  if (vectors.empty()) throw UsageError("gram_schmidt: empty input");
  const std::size_t d = vectors.front().size();
  if (d == 0) throw UsageError("gram_schmidt: zero-dimensional vectors");
  if (options.tol < 0.0) throw UsageError("gram_schmidt: negative tolerance");

  Basis basis;
  basis.tol = options.tol;
  for (const Vec& candidate : vectors) {
    if (candidate.size() != d) throw UsageError("gram_schmidt: non-uniform dimension");
    require_finite(candidate, "gram_schmidt");
    Vec u = basis.residual(candidate);
    if (options.reorthogonalize) u = basis.residual(u);
    const double original = norm(candidate);
    const double remaining = norm(u);
    if (remaining <= options.tol * original) continue;
    basis.squared_norms.push_back(squared_norm(u));
    basis.vectors.push_back(std::move(u));
  }
  return basis;
}

}  // namespace gradops
