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

// Mini-batch multi-task training of a shared-bottom network. Per batch, each
// task's gradient with respect to the shared parameters goes through the
// configured aggregator and the result drives an Adam step on the shared
// parameters; each head is stepped with its own task gradient.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gradops/aggregators.hpp"
#include "gradops/auc.hpp"
#include "gradops/dataset.hpp"
#include "gradops/mtl_network.hpp"
#include "gradops/optim.hpp"

namespace gradops {

enum class TrainMode {
  kMultiTask,   // one shared network, aggregated shared updates
  kSingleTask,  // one independent network per task
};

enum class DataSource { kSynthetic, kCsv };

struct RunConfig {
  std::string name = "run";
  MethodSpec method{};
  TrainMode mode = TrainMode::kMultiTask;
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{32, 32};
  AdamHyper adam{};
  DataSource source = DataSource::kSynthetic;
  SynthSpec synth{};
  std::string csv_path;
  std::vector<std::string> feature_columns;
  std::vector<std::string> task_columns;
  SplitFractions fractions{};
  // Throw InvariantError when a gradops update conflicts with a task gradient
  // beyond invariant_slack * |update| * |g_i|.
  bool check_invariants = false;
  double invariant_slack = 1e-6;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::vector<double> train_loss;      // mean per-batch loss, per task
  std::vector<double> validation_auc;  // per task
  std::vector<double> test_auc;        // per task
};

struct RunReport {
  RunConfig config;
  std::vector<std::string> task_names;
  std::vector<EpochRecord> epochs;
  std::vector<double> final_validation_auc;
  std::vector<double> final_test_auc;
  std::size_t batches = 0;
  std::size_t conflict_batches = 0;   // some pair of task gradients conflicted
  std::size_t fallback_batches = 0;   // gradops min-norm fallback engaged
  std::size_t invariant_violations = 0;
  double min_normalized_dot = 1.0;    // min over batches/tasks of cos(update, g_i)
  // gradops only: per-task averages of r_i and w_i over non-fallback batches.
  std::vector<double> mean_ratio;
  std::vector<double> mean_weight;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& cell : split_csv_line(s)) {
    if (!cell.empty()) out.push_back(cell);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out)) {
    throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': integer out of range");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config key '" + key + "': expected true|false, got '" + v + "'");
}

inline std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

}  // namespace detail

// Applies one `key = value` setting. Throws UsageError for unknown keys.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "name") c.name = v;
  else if (key == "method") c.method.kind = parse_method_kind(v);
  else if (key == "alpha") c.method.alpha = to_double(key, v);
  else if (key == "variant") c.method.variant = parse_weight_variant(v);
  else if (key == "mode") {
    if (v == "multi_task") c.mode = TrainMode::kMultiTask;
    else if (v == "single_task") c.mode = TrainMode::kSingleTask;
    else throw UsageError("config key 'mode': expected multi_task|single_task");
  } else if (key == "epochs") c.epochs = to_unsigned(key, v);
  else if (key == "batch_size") c.batch_size = to_unsigned(key, v);
  else if (key == "seed") c.seed = to_unsigned(key, v);
  else if (key == "hidden") {
    c.hidden.clear();
    for (const auto& h : split_list(v)) c.hidden.push_back(to_unsigned(key, h));
  } else if (key == "lr") c.adam.lr = to_double(key, v);
  else if (key == "beta1") c.adam.beta1 = to_double(key, v);
  else if (key == "beta2") c.adam.beta2 = to_double(key, v);
  else if (key == "adam_eps") c.adam.epsilon = to_double(key, v);
  else if (key == "dataset") {
    if (v == "synthetic") c.source = DataSource::kSynthetic;
    else if (v == "csv") c.source = DataSource::kCsv;
    else throw UsageError("config key 'dataset': expected synthetic|csv");
  } else if (key == "synth_samples") c.synth.samples = to_unsigned(key, v);
  else if (key == "synth_features") c.synth.features = to_unsigned(key, v);
  else if (key == "synth_tasks") c.synth.tasks = to_unsigned(key, v);
  else if (key == "synth_conflict") c.synth.conflict = to_double(key, v);
  else if (key == "synth_noise") {
    c.synth.noise.clear();
    for (const auto& x : split_list(v)) c.synth.noise.push_back(to_double(key, x));
  } else if (key == "csv_path") c.csv_path = v;
  else if (key == "feature_columns") c.feature_columns = split_list(v);
  else if (key == "task_columns") c.task_columns = split_list(v);
  else if (key == "train_fraction") c.fractions.train = to_double(key, v);
  else if (key == "validation_fraction") c.fractions.validation = to_double(key, v);
  else if (key == "test_fraction") c.fractions.test = to_double(key, v);
  else if (key == "check_invariants") c.check_invariants = to_bool(key, v);
  else if (key == "invariant_slack") c.invariant_slack = to_double(key, v);
  else throw UsageError("unknown config key '" + key + "'");
}

// Flat `key = value` lines; blank lines and lines starting with '#' are
// ignored.
inline RunConfig parse_run_config(std::istream& in) {
  RunConfig c;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", row);
    try {
      apply_config_key(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw ParseError(e.what(), row);
    }
  }
  return c;
}

inline RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  RunConfig c = parse_run_config(in);
  // Relative dataset paths are taken from the config file's directory.
  if (!c.csv_path.empty() && std::filesystem::path(c.csv_path).is_relative()) {
    c.csv_path = (std::filesystem::path(path).parent_path() / c.csv_path).string();
  }
  return c;
}

// Every RunConfig field as ordered key/value pairs; feeding them back through
// apply_config_key reproduces the config.
inline std::vector<std::pair<std::string, std::string>> config_key_values(const RunConfig& c) {
  using detail::fmt_double;
  std::vector<std::string> hidden, noise;
  for (auto h : c.hidden) hidden.push_back(std::to_string(h));
  for (auto n : c.synth.noise) noise.push_back(fmt_double(n));
  return {
      {"name", c.name},
      {"method", to_string(c.method.kind)},
      {"alpha", fmt_double(c.method.alpha)},
      {"variant", to_string(c.method.variant)},
      {"mode", c.mode == TrainMode::kMultiTask ? "multi_task" : "single_task"},
      {"epochs", std::to_string(c.epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"hidden", detail::join(hidden)},
      {"lr", fmt_double(c.adam.lr)},
      {"beta1", fmt_double(c.adam.beta1)},
      {"beta2", fmt_double(c.adam.beta2)},
      {"adam_eps", fmt_double(c.adam.epsilon)},
      {"dataset", c.source == DataSource::kSynthetic ? "synthetic" : "csv"},
      {"synth_samples", std::to_string(c.synth.samples)},
      {"synth_features", std::to_string(c.synth.features)},
      {"synth_tasks", std::to_string(c.synth.tasks)},
      {"synth_conflict", fmt_double(c.synth.conflict)},
      {"synth_noise", detail::join(noise)},
      {"csv_path", c.csv_path},
      {"feature_columns", detail::join(c.feature_columns)},
      {"task_columns", detail::join(c.task_columns)},
      {"train_fraction", fmt_double(c.fractions.train)},
      {"validation_fraction", fmt_double(c.fractions.validation)},
      {"test_fraction", fmt_double(c.fractions.test)},
      {"check_invariants", c.check_invariants ? "true" : "false"},
      {"invariant_slack", fmt_double(c.invariant_slack)},
  };
}

inline Dataset load_run_dataset(const RunConfig& c) {
  if (c.source == DataSource::kCsv) {
    if (c.csv_path.empty()) throw UsageError("config: dataset = csv requires csv_path");
    return load_csv(c.csv_path, c.feature_columns, c.task_columns, c.fractions, c.seed);
  }
  SynthSpec spec = c.synth;
  spec.fractions = c.fractions;
  return synth_dataset(c.seed, spec);
}

namespace detail {

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

inline std::vector<double> column_aucs(const MtlNetwork& net, const Dataset& ds,
                                       const std::vector<std::size_t>& rows,
                                       const std::vector<Eigen::Index>& label_cols) {
  if (rows.empty()) throw MetricUndefinedError("evaluation split is empty");
  const Eigen::MatrixXd x = gather_rows(ds.features, rows);
  const Eigen::MatrixXd z = net.logits(x);
  std::vector<double> out;
  for (std::size_t t = 0; t < label_cols.size(); ++t) {
    std::vector<double> scores(rows.size()), labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      scores[r] = z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t));
      labels[r] = ds.labels(static_cast<Eigen::Index>(rows[r]), label_cols[t]);
    }
    out.push_back(auc(scores, labels));
  }
  return out;
}

struct CoreResult {
  std::vector<EpochRecord> epochs;
  std::size_t batches = 0, conflict_batches = 0, fallback_batches = 0, invariant_violations = 0;
  double min_normalized_dot = 1.0;
  std::vector<double> ratio_sum, weight_sum;
  std::size_t weighted_batches = 0;
};

// Trains one network on the label columns `label_cols` of `ds`.
inline CoreResult train_core(const Dataset& ds, const RunConfig& cfg,
                             const std::vector<Eigen::Index>& label_cols, std::uint64_t seed) {
  const std::size_t T = label_cols.size();
  MtlNetwork net(ds.num_features(), cfg.hidden, T, splitmix64(seed ^ 0x1ULL));
  Vec shared = net.shared_params();
  AdamState shared_opt(shared.size(), cfg.adam);
  std::vector<AdamState> head_opt(T, AdamState(net.head_param_count(), cfg.adam));

  std::vector<std::size_t> train = ds.indices(Split::kTrain);
  const std::vector<std::size_t> val = ds.indices(Split::kValidation);
  const std::vector<std::size_t> test = ds.indices(Split::kTest);
  if (train.empty()) throw UsageError("training split is empty");

  Eigen::MatrixXd labels(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(T));
  for (std::size_t t = 0; t < T; ++t) labels.col(static_cast<Eigen::Index>(t)) = ds.labels.col(label_cols[t]);

  std::mt19937_64 shuffle_rng(splitmix64(seed ^ 0x2ULL));
  CoreResult res;
  res.ratio_sum.assign(T, 0.0);
  res.weight_sum.assign(T, 0.0);
  const bool is_gradops = cfg.method.kind == MethodKind::kGradops;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss.assign(T, 0.0);
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(train.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(train.data() + start, stop - start);
      const Eigen::MatrixXd x = gather_rows(ds.features, rows);
      const Eigen::MatrixXd y = gather_rows(labels, rows);
      ForwardBackwardResult fb = net.forward_backward(x, y);
      for (std::size_t t = 0; t < T; ++t) rec.train_loss[t] += fb.losses[t];

      Vec update;
      if (T == 1) {
        update = fb.shared[0];
      } else {
        MethodSpec spec = cfg.method;
        spec.seed = splitmix64(cfg.method.seed ^ splitmix64(seed + res.batches));
        const TaskGradients grads(fb.shared);
        bool conflict = false;
        for (std::size_t i = 0; i < T && !conflict; ++i) conflict = has_conflict(i, grads);
        if (conflict) ++res.conflict_batches;
        AggregationResult agg = aggregate(spec, grads);
        const double un = norm(agg.update);
        for (std::size_t i = 0; i < T; ++i) {
          const double scale = un * norm(grads[i]);
          if (scale > 0.0) res.min_normalized_dot = std::min(res.min_normalized_dot, agg.diagnostics.dots[i] / scale);
          if (is_gradops && agg.diagnostics.dots[i] < -cfg.invariant_slack * scale) {
            ++res.invariant_violations;
            if (cfg.check_invariants) {
              throw InvariantError("gradops update conflicts with task " + std::to_string(i) +
                                   " at batch " + std::to_string(res.batches));
            }
          }
        }
        if (agg.diagnostics.fallback) ++res.fallback_batches;
        if (is_gradops && !agg.diagnostics.fallback) {
          for (std::size_t i = 0; i < T; ++i) {
            res.ratio_sum[i] += agg.diagnostics.ratios[i];
            res.weight_sum[i] += agg.diagnostics.weights[i];
          }
          ++res.weighted_batches;
        }
        update = std::move(agg.update);
      }
      shared_opt.step(shared, update);
      net.set_shared_params(shared);
      for (std::size_t t = 0; t < T; ++t) {
        Vec head = net.head_params(t);
        head_opt[t].step(head, fb.heads[t]);
        net.set_head_params(t, head);
      }
      ++res.batches;
      ++epoch_batches;
    }
    for (double& l : rec.train_loss) l /= static_cast<double>(epoch_batches);
    rec.validation_auc = val.empty() ? std::vector<double>(T, std::nan("")) : column_aucs(net, ds, val, label_cols);
    rec.test_auc = test.empty() ? std::vector<double>(T, std::nan("")) : column_aucs(net, ds, test, label_cols);
    res.epochs.push_back(std::move(rec));
  }
  return res;
}

}  // namespace detail

inline RunReport train_on(const Dataset& ds, const RunConfig& cfg) {
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw UsageError("epochs and batch_size must be positive");
  const std::size_t T = ds.num_tasks();
  if (cfg.mode == TrainMode::kMultiTask && T < 2 && cfg.method.kind != MethodKind::kGd) {
    throw UsageError("multi-task training with a single task only supports method = gd");
  }
  RunReport report;
  report.config = cfg;
  report.task_names = ds.task_names;

  auto absorb = [&](const detail::CoreResult& r) {
    report.batches += r.batches;
    report.conflict_batches += r.conflict_batches;
    report.fallback_batches += r.fallback_batches;
    report.invariant_violations += r.invariant_violations;
    report.min_normalized_dot = std::min(report.min_normalized_dot, r.min_normalized_dot);
  };

  if (cfg.mode == TrainMode::kMultiTask) {
    std::vector<Eigen::Index> cols(T);
    std::iota(cols.begin(), cols.end(), Eigen::Index{0});
    detail::CoreResult r = detail::train_core(ds, cfg, cols, cfg.seed);
    absorb(r);
    report.epochs = std::move(r.epochs);
    if (r.weighted_batches > 0) {
      for (std::size_t t = 0; t < T; ++t) {
        report.mean_ratio.push_back(r.ratio_sum[t] / static_cast<double>(r.weighted_batches));
        report.mean_weight.push_back(r.weight_sum[t] / static_cast<double>(r.weighted_batches));
      }
    }
  } else {
    report.epochs.resize(cfg.epochs);
    for (std::size_t t = 0; t < T; ++t) {
      detail::CoreResult r =
          detail::train_core(ds, cfg, {static_cast<Eigen::Index>(t)}, cfg.seed + t);
      absorb(r);
      for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochRecord& rec = report.epochs[e];
        rec.epoch = e;
        rec.train_loss.push_back(r.epochs[e].train_loss[0]);
        rec.validation_auc.push_back(r.epochs[e].validation_auc[0]);
        rec.test_auc.push_back(r.epochs[e].test_auc[0]);
      }
    }
  }
  report.final_validation_auc = report.epochs.back().validation_auc;
  report.final_test_auc = report.epochs.back().test_auc;
  return report;
}

inline RunReport train_run(const RunConfig& cfg) { return train_on(load_run_dataset(cfg), cfg); }

}  // namespace gradops
