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

// Multi-task binary classification data: synthetic generation with tunable
// task relatedness, CSV ingestion, and reproducible train/validation/test
// assignment.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gradops/errors.hpp"

namespace gradops {

enum class Split { kTrain, kValidation, kTest };

struct SplitFractions {
  double train = 0.5;
  double validation = 0.25;
  double test = 0.25;
};

struct Dataset {
  Eigen::MatrixXd features;  // N x F
  Eigen::MatrixXd labels;    // N x T, entries 0 or 1
  std::vector<Split> split;  // per row
  std::vector<std::string> feature_names;
  std::vector<std::string> task_names;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t num_tasks() const { return static_cast<std::size_t>(labels.cols()); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == s) out.push_back(i);
    }
    return out;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Row r goes to a split chosen by a seeded hash of r, so membership depends
// only on (seed, row index, fractions).
inline std::vector<Split> assign_splits(std::size_t n, const SplitFractions& fractions,
                                        std::uint64_t seed) {
  const double total = fractions.train + fractions.validation + fractions.test;
  if (!(fractions.train > 0.0) || fractions.validation < 0.0 || fractions.test < 0.0 ||
      !(total > 0.0)) {
    throw UsageError("assign_splits: fractions must be non-negative with a positive train share");
  }
  const double train_cut = fractions.train / total;
  const double val_cut = (fractions.train + fractions.validation) / total;
  std::vector<Split> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(r)));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    out[r] = u < train_cut ? Split::kTrain : (u < val_cut ? Split::kValidation : Split::kTest);
  }
  return out;
}

struct SynthSpec {
  std::size_t samples = 4000;
  std::size_t features = 16;
  std::size_t tasks = 3;
  // Pairwise cosine between the tasks' label-generating directions. Must lie
  // in [-1/(T-1), 1].
  double conflict = 0.0;
  // Per-task std of the logit noise; a single entry applies to every task.
  std::vector<double> noise{0.1};
  SplitFractions fractions{};
};

// Features are standard normal; task t's label is [x . u_t + noise_t * e > 0]
// where the unit directions u_t have pairwise cosine `conflict`.
inline Dataset synth_dataset(std::uint64_t seed, const SynthSpec& spec) {
  const std::size_t N = spec.samples, F = spec.features, T = spec.tasks;
  if (N == 0 || F == 0 || T == 0) throw UsageError("synth_dataset: sizes must be positive");
  if (T > F) throw UsageError("synth_dataset: need at least as many features as tasks");
  const double rho = spec.conflict;
  const double lower = T > 1 ? -1.0 / static_cast<double>(T - 1) : -1.0;
  if (!(rho >= lower - 1e-12 && rho <= 1.0)) {
    throw UsageError("synth_dataset: conflict must lie in [-1/(T-1), 1]");
  }
  if (spec.noise.size() != 1 && spec.noise.size() != T) {
    throw UsageError("synth_dataset: noise needs 1 or T entries");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Cholesky factor of the equicorrelation matrix (1 - rho) I + rho 11^T;
  // pivots that round to <= 0 (rho at an endpoint) are zeroed.
  Eigen::MatrixXd C = Eigen::MatrixXd::Constant(T, T, rho);
  C.diagonal().setOnes();
  Eigen::MatrixXd Lc = Eigen::MatrixXd::Zero(T, T);
  for (std::size_t j = 0; j < T; ++j) {
    double diag = C(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= Lc(j, k) * Lc(j, k);
    Lc(j, j) = diag > 1e-14 ? std::sqrt(diag) : 0.0;
    for (std::size_t i = j + 1; i < T; ++i) {
      double v = C(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= Lc(i, k) * Lc(j, k);
      Lc(i, j) = Lc(j, j) > 0.0 ? v / Lc(j, j) : 0.0;
    }
  }

  // Random orthonormal frame in R^F for the T directions.
  Eigen::MatrixXd frame(F, T);
  for (std::size_t c = 0; c < T; ++c) {
    for (std::size_t r = 0; r < F; ++r) frame(r, c) = normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(frame);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(F, T);
  const Eigen::MatrixXd directions = Q * Lc.transpose();  // F x T, unit columns

  Dataset ds;
  ds.features.resize(N, F);
  ds.labels.resize(N, T);
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t c = 0; c < F; ++c) ds.features(r, c) = normal(rng);
  }
  const Eigen::MatrixXd logits = ds.features * directions;
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t t = 0; t < T; ++t) {
      const double sigma = spec.noise.size() == 1 ? spec.noise[0] : spec.noise[t];
      ds.labels(r, t) = logits(r, t) + sigma * normal(rng) > 0.0 ? 1.0 : 0.0;
    }
  }
  for (std::size_t c = 0; c < F; ++c) ds.feature_names.push_back("x" + std::to_string(c));
  for (std::size_t t = 0; t < T; ++t) ds.task_names.push_back("task" + std::to_string(t));
  ds.split = assign_splits(N, spec.fractions, seed);
  return ds;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
    throw ParseError("column '" + column + "': non-numeric value '" + cell + "'", row);
  }
  return v;
}

}  // namespace detail

// Reads a headered, comma-separated numeric file. Empty `feature_columns`
// selects every column that is not a task column. Task columns must hold 0/1.
inline Dataset load_csv(std::istream& in, const std::vector<std::string>& feature_columns,
                        const std::vector<std::string>& task_columns,
                        const SplitFractions& fractions = {}, std::uint64_t seed = 0) {
  if (task_columns.empty()) throw UsageError("load_csv: no task columns declared");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t c = 0; c < header.size(); ++c) where.emplace(header[c], c);

  auto column_index = [&](const std::string& name) {
    const auto it = where.find(name);
    if (it == where.end()) throw ParseError("declared column '" + name + "' not found in header", 1);
    return it->second;
  };
  std::vector<std::size_t> task_idx;
  for (const auto& t : task_columns) task_idx.push_back(column_index(t));
  std::vector<std::string> feature_names = feature_columns;
  if (feature_names.empty()) {
    for (const auto& h : header) {
      if (std::find(task_columns.begin(), task_columns.end(), h) == task_columns.end()) {
        feature_names.push_back(h);
      }
    }
  }
  std::vector<std::size_t> feature_idx;
  for (const auto& f : feature_names) feature_idx.push_back(column_index(f));
  if (feature_idx.empty()) throw UsageError("load_csv: no feature columns");

  std::vector<std::vector<double>> feats;
  std::vector<std::vector<double>> labs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    }
    std::vector<double> f, l;
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      f.push_back(detail::parse_number(cells[feature_idx[k]], row, feature_names[k]));
    }
    for (std::size_t k = 0; k < task_idx.size(); ++k) {
      const double v = detail::parse_number(cells[task_idx[k]], row, task_columns[k]);
      if (v != 0.0 && v != 1.0) {
        throw ParseError("task column '" + task_columns[k] + "' must be 0 or 1", row);
      }
      l.push_back(v);
    }
    feats.push_back(std::move(f));
    labs.push_back(std::move(l));
  }
  if (feats.empty()) throw ParseError("no data rows");

  Dataset ds;
  const auto N = static_cast<Eigen::Index>(feats.size());
  ds.features.resize(N, static_cast<Eigen::Index>(feature_idx.size()));
  ds.labels.resize(N, static_cast<Eigen::Index>(task_idx.size()));
  for (Eigen::Index r = 0; r < N; ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) ds.features(r, c) = feats[r][c];
    for (Eigen::Index c = 0; c < ds.labels.cols(); ++c) ds.labels(r, c) = labs[r][c];
  }
  ds.feature_names = feature_names;
  ds.task_names = task_columns;
  ds.split = assign_splits(feats.size(), fractions, seed);
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::vector<std::string>& feature_columns,
                        const std::vector<std::string>& task_columns,
                        const SplitFractions& fractions = {}, std::uint64_t seed = 0) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return load_csv(in, feature_columns, task_columns, fractions, seed);
}

}  // namespace gradops
