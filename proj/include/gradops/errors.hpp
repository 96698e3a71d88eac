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
#include <stdexcept>
#include <string>

namespace gradops {

// Caller violated a precondition (dimension mismatch, bad index, bad flag).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is well-formed but the requested quantity does not exist for it
// (zero-length direction, empty positive task set, singular system).
class DegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A metric is undefined for the given data (single-class AUC, zero baseline).
class MetricUndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed file content. `row` is 1-based and counts the header line; 0 when
// the error is not tied to a particular row.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row = 0)
      : std::runtime_error(row == 0 ? what
                                    : "row " + std::to_string(row) + ": " + what),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Non-finite values appeared during an iterative computation.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A property the algorithms guarantee did not hold at run time.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gradops
