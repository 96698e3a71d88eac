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

// Cross-method summaries over a method x task table of scalar metrics:
// relative performance change against a baseline (delta_m) and mean rank.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradops/dataset.hpp"
#include "gradops/errors.hpp"

namespace gradops {

enum class Direction { kHigherBetter, kLowerBetter };

// How tied values share rank positions.
enum class TieRule {
  kMin,      // competition ranking: ties take the best position (1, 2, 2, 4)
  kAverage,  // fractional ranking: ties take the mean position (1, 2.5, 2.5, 4)
};

inline TieRule parse_tie_rule(const std::string& s) {
  if (s == "min") return TieRule::kMin;
  if (s == "average") return TieRule::kAverage;
  throw UsageError("unknown tie rule '" + s + "' (expected min|average)");
}

inline const char* to_string(TieRule r) { return r == TieRule::kMin ? "min" : "average"; }

struct MetricTable {
  std::vector<std::string> methods;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> values;  // [method][task]
  std::vector<Direction> directions;        // per task

  std::size_t row_of(const std::string& method) const {
    const auto it = std::find(methods.begin(), methods.end(), method);
    if (it == methods.end()) throw UsageError("metric table has no row named '" + method + "'");
    return static_cast<std::size_t>(it - methods.begin());
  }

  void validate() const {
    if (tasks.empty()) throw UsageError("metric table has no task columns");
    if (directions.size() != tasks.size()) throw UsageError("metric table: one direction per task required");
    if (values.size() != methods.size()) throw UsageError("metric table: one value row per method required");
    for (std::size_t m = 0; m < values.size(); ++m) {
      if (values[m].size() != tasks.size()) {
        throw UsageError("metric table: row '" + methods[m] + "' is incomplete");
      }
    }
  }
};

// (1/T) sum_i (-1)^{l_i} (M_{m,i} - M_{b,i}) / M_{b,i}, l_i = 1 when higher is
// better. Positive means the method is worse than the baseline on average.
inline double delta_m(const MetricTable& table, const std::string& method,
                      const std::string& baseline) {
  table.validate();
  const auto& m = table.values[table.row_of(method)];
  const auto& b = table.values[table.row_of(baseline)];
  double sum = 0.0;
  for (std::size_t i = 0; i < table.tasks.size(); ++i) {
    if (b[i] == 0.0) {
      throw MetricUndefinedError("delta_m: baseline value for task '" + table.tasks[i] + "' is zero");
    }
    const double sign = table.directions[i] == Direction::kHigherBetter ? -1.0 : 1.0;
    sum += sign * (m[i] - b[i]) / b[i];
  }
  return sum / static_cast<double>(table.tasks.size());
}

// Per-method average over tasks of the method's rank within the task column
// (rank 1 = best).
inline std::vector<double> mean_rank(const MetricTable& table, TieRule rule = TieRule::kMin) {
  table.validate();
  const std::size_t K = table.methods.size();
  if (K < 2) throw UsageError("mean_rank: need at least 2 methods");
  std::vector<double> total(K, 0.0);
  for (std::size_t i = 0; i < table.tasks.size(); ++i) {
    const bool higher = table.directions[i] == Direction::kHigherBetter;
    for (std::size_t a = 0; a < K; ++a) {
      const double va = table.values[a][i];
      std::size_t better = 0, tied = 0;
      for (std::size_t b = 0; b < K; ++b) {
        const double vb = table.values[b][i];
        if (vb == va) {
          ++tied;
        } else if (higher ? vb > va : vb < va) {
          ++better;
        }
      }
      const double rank = rule == TieRule::kMin
                              ? static_cast<double>(better + 1)
                              : static_cast<double>(better) + 0.5 * static_cast<double>(tied + 1);
      total[a] += rank;
    }
  }
  for (double& t : total) t /= static_cast<double>(table.tasks.size());
  return total;
}

// CSV layout:
//   method,<task 1>,...,<task T>
//   direction,higher|lower,...
//   <method name>,<value>,...
inline MetricTable read_metric_table(std::istream& in) {
  MetricTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "method") {
    throw ParseError("header must start with 'method' followed by task names", 1);
  }
  table.tasks.assign(header.begin() + 1, header.end());

  if (!std::getline(in, line)) throw ParseError("missing direction row", 2);
  auto dirs = detail::split_csv_line(line);
  if (dirs.size() != header.size() || dirs[0] != "direction") {
    throw ParseError("second row must be 'direction' with one entry per task", 2);
  }
  for (std::size_t k = 1; k < dirs.size(); ++k) {
    if (dirs[k] == "higher") {
      table.directions.push_back(Direction::kHigherBetter);
    } else if (dirs[k] == "lower") {
      table.directions.push_back(Direction::kLowerBetter);
    } else {
      throw ParseError("direction must be 'higher' or 'lower', got '" + dirs[k] + "'", 2);
    }
  }

  std::size_t row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    }
    table.methods.push_back(cells[0]);
    std::vector<double> vals;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      vals.push_back(detail::parse_number(cells[k], row, table.tasks[k - 1]));
    }
    table.values.push_back(std::move(vals));
  }
  if (table.methods.empty()) throw ParseError("no method rows");
  return table;
}

inline MetricTable read_metric_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_metric_table(in);
}

inline void write_metric_table(std::ostream& out, const MetricTable& table) {
  table.validate();
  out << "method";
  for (const auto& t : table.tasks) out << ',' << t;
  out << "\ndirection";
  for (auto d : table.directions) out << ',' << (d == Direction::kHigherBetter ? "higher" : "lower");
  out << '\n';
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    out << table.methods[m];
    for (double v : table.values[m]) out << ',' << std::setprecision(10) << v;
    out << '\n';
  }
}

}  // namespace gradops
