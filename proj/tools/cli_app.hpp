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

// Command-line front end. Exit codes: 0 ok, 2 usage or parse error, 3 internal
// invariant violation, 4 numeric divergence.

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gradops.hpp"

namespace gradops::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInvariant = 3;
inline constexpr int kExitDivergence = 4;

// Stationarity residual below which a toy run counts as converged.
inline constexpr double kConvergedResidual = 1e-2;

using nlohmann::ordered_json;

inline std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Round to 10 significant digits for JSON output.
inline ordered_json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(fmt10(v));
}

inline ordered_json nums(const std::vector<double>& xs) {
  ordered_json a = ordered_json::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

inline ordered_json rows_json(const std::vector<Vec>& rows) {
  ordered_json a = ordered_json::array();
  for (const auto& r : rows) a.push_back(nums(r));
  return a;
}

inline std::vector<double> parse_number_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& cell : detail::split_csv_line(s)) {
    if (cell.empty()) continue;
    out.push_back(detail::parse_number(cell, 0, what));
  }
  return out;
}

inline std::vector<std::string> parse_name_list(const std::string& s) {
  return detail::split_list(s);
}

// "paper1" | "paper2" | "paper3" | "x,y"
inline toy2d::ToyPoint parse_init(const std::string& s) {
  const auto& presets = toy2d::preset_inits();
  if (s == "paper1") return presets[0];
  if (s == "paper2") return presets[1];
  if (s == "paper3") return presets[2];
  const auto xs = detail::split_csv_line(s);
  if (xs.size() != 2) throw UsageError("--init must be paper1|paper2|paper3 or 'x,y', got '" + s + "'");
  return {detail::parse_number(xs[0], 0, "init x"), detail::parse_number(xs[1], 0, "init y")};
}

// Rows of numbers, one task gradient per row, no header.
inline TaskGradients read_gradient_csv(std::istream& in) {
  std::vector<Vec> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    Vec v;
    std::size_t col = 0;
    for (const auto& cell : detail::split_csv_line(line)) {
      v.push_back(detail::parse_number(cell, row, "column " + std::to_string(++col)));
    }
    if (!rows.empty() && v.size() != rows.front().size()) {
      throw ParseError("expected " + std::to_string(rows.front().size()) + " columns, found " +
                           std::to_string(v.size()),
                       row);
    }
    rows.push_back(std::move(v));
  }
  if (rows.size() < 2) throw ParseError("need at least 2 gradient rows, found " + std::to_string(rows.size()));
  return TaskGradients(std::move(rows));
}

inline ordered_json dot_matrix(const std::vector<Vec>& a, const TaskGradients& g) {
  ordered_json m = ordered_json::array();
  for (const auto& ai : a) {
    ordered_json row = ordered_json::array();
    for (const auto& gj : g.rows()) row.push_back(num(dot(ai, gj)));
    m.push_back(row);
  }
  return m;
}

struct MethodFlags {
  std::string method = "gradops";
  double alpha = 0.0;
  std::string variant = "identity";

  MethodSpec spec(std::uint64_t seed) const {
    MethodSpec s;
    s.kind = parse_method_kind(method);
    s.alpha = alpha;
    s.variant = parse_weight_variant(variant);
    s.seed = seed;
    return s;
  }
};

inline void add_method_flags(CLI::App* app, MethodFlags& f) {
  app->add_option("--method", f.method, "Aggregator: gd|pcgrad|mgda|imtl-g|gradops");
  app->add_option("--alpha", f.alpha, "GradOPS trade-off exponent");
  app->add_option("--variant", f.variant, "GradOPS ratio transform: identity|exp");
}

struct AdamFlags {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamHyper hyper() const { return {lr, beta1, beta2, eps}; }
};

inline void add_adam_flags(CLI::App* app, AdamFlags& f) {
  app->add_option("--lr", f.lr, "Adam learning rate");
  app->add_option("--beta1", f.beta1, "Adam first-moment decay");
  app->add_option("--beta2", f.beta2, "Adam second-moment decay");
  app->add_option("--adam-eps", f.eps, "Adam denominator epsilon");
}

inline ordered_json method_json(const MethodSpec& s) {
  return {{"method", to_string(s.kind)},
          {"alpha", num(s.alpha)},
          {"variant", to_string(s.variant)},
          {"seed", s.seed}};
}

inline ordered_json adam_json(const AdamHyper& h) {
  return {{"lr", num(h.lr)}, {"beta1", num(h.beta1)}, {"beta2", num(h.beta2)}, {"adam_eps", num(h.epsilon)}};
}

// ---------------------------------------------------------------------------
// deconflict

struct DeconflictArgs {
  std::string input;
  std::string output = "-";
  MethodFlags method;
  std::uint64_t seed = 0;
};

inline int cmd_deconflict(const DeconflictArgs& a, std::ostream& out) {
  const MethodSpec spec = a.method.spec(a.seed);
  std::ifstream in(a.input);
  if (!in) throw ParseError("cannot open '" + a.input + "'");
  const TaskGradients grads = read_gradient_csv(in);

  ordered_json config = method_json(spec);
  config["input"] = a.input;
  config["output"] = a.output;
  out << ordered_json{{"config", config}}.dump() << '\n';

  const AggregationResult agg = aggregate(spec, grads);
  std::vector<Vec> modified = grads.rows();
  if (spec.kind == MethodKind::kGradops) {
    modified = deconflict_all(grads, spec.tolerances.deconflict).modified;
  } else if (spec.kind == MethodKind::kPcgrad) {
    // Reproduce the orders pcgrad_aggregate drew from the same seed.
    std::mt19937_64 rng(spec.seed);
    std::vector<std::vector<std::size_t>> orders(grads.num_tasks());
    for (std::size_t i = 0; i < grads.num_tasks(); ++i) {
      for (std::size_t j = 0; j < grads.num_tasks(); ++j) {
        if (j != i) orders[i].push_back(j);
      }
      std::shuffle(orders[i].begin(), orders[i].end(), rng);
    }
    modified = pcgrad_modified(grads, orders);
  }

  ordered_json doc;
  doc["config"] = config;
  doc["tasks"] = grads.num_tasks();
  doc["dim"] = grads.dim();
  doc["modified"] = rows_json(modified);
  std::vector<bool> conflicted(grads.num_tasks());
  for (std::size_t i = 0; i < grads.num_tasks(); ++i) conflicted[i] = has_conflict(i, grads);
  doc["conflicted"] = conflicted;
  doc["weights"] = nums(agg.diagnostics.weights);
  if (!agg.diagnostics.ratios.empty()) doc["ratios"] = nums(agg.diagnostics.ratios);
  doc["update"] = nums(agg.update);
  doc["fallback"] = agg.diagnostics.fallback;
  doc["dots_before"] = dot_matrix(grads.rows(), grads);
  doc["dots_after"] = dot_matrix(modified, grads);
  doc["update_dots"] = nums(agg.diagnostics.dots);

  const std::string text = doc.dump(2) + "\n";
  if (a.output == "-") {
    out << text;
  } else {
    std::ofstream f(a.output);
    if (!f) throw ParseError("cannot write '" + a.output + "'");
    f << text;
  }

  if (spec.kind == MethodKind::kGradops) {
    for (std::size_t i = 0; i < modified.size(); ++i) {
      for (std::size_t j = 0; j < grads.num_tasks(); ++j) {
        const double scale = norm(modified[i]) * norm(grads[j]);
        if (dot(modified[i], grads[j]) < -1e-8 * scale) {
          throw InvariantError("deconflicted gradient " + std::to_string(i) +
                               " conflicts with task " + std::to_string(j));
        }
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// toy2d / sweep

inline void write_trajectory_csv(std::ostream& out, const toy2d::TrajectoryRecord& rec) {
  out << "step,theta1,theta2,loss1,loss2,residual\n";
  for (const auto& s : rec.steps) {
    out << s.step << ',' << fmt10(s.theta.theta1) << ',' << fmt10(s.theta.theta2) << ','
        << fmt10(s.losses.loss1) << ',' << fmt10(s.losses.loss2) << ',' << fmt10(s.residual) << '\n';
  }
}

inline ordered_json trajectory_summary(const toy2d::TrajectoryRecord& rec, const std::string& init_name) {
  const auto& last = rec.last();
  ordered_json j = method_json(rec.method);
  j["init_name"] = init_name;
  j["init"] = nums({rec.init.theta1, rec.init.theta2});
  j["steps_completed"] = last.step;
  j["terminal_point"] = nums({last.theta.theta1, last.theta.theta2});
  j["terminal_losses"] = nums({last.losses.loss1, last.losses.loss2});
  j["terminal_residual"] = num(last.residual);
  j["converged"] = last.residual < kConvergedResidual;
  j["residual_threshold"] = num(kConvergedResidual);
  j["diverged"] = rec.diverged;
  if (rec.diverged) j["diagnostic"] = rec.diagnostic;
  return j;
}

struct ToyArgs {
  MethodFlags method;
  std::uint64_t seed = 0;
  std::string init = "paper1";
  std::size_t steps = 20000;
  AdamFlags adam;
  std::string out;
  std::string summary;
};

inline int cmd_toy2d(const ToyArgs& a, std::ostream& out) {
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  const MethodSpec spec = a.method.spec(a.seed);
  const toy2d::ToyPoint init = parse_init(a.init);
  const std::string summary_path = a.summary.empty() ? a.out + ".summary.json" : a.summary;

  ordered_json config = method_json(spec);
  config["init"] = a.init;
  config["steps"] = a.steps;
  config.update(adam_json(a.adam.hyper()));
  config["out"] = a.out;
  config["summary"] = summary_path;
  out << ordered_json{{"config", config}}.dump() << '\n';

  const toy2d::TrajectoryRecord rec = toy2d::run_trajectory(spec, init, a.steps, a.adam.hyper());
  {
    std::ofstream f(a.out);
    if (!f) throw ParseError("cannot write '" + a.out + "'");
    write_trajectory_csv(f, rec);
  }
  const ordered_json summary = trajectory_summary(rec, a.init);
  {
    std::ofstream f(summary_path);
    if (!f) throw ParseError("cannot write '" + summary_path + "'");
    f << summary.dump(2) << '\n';
  }
  out << summary.dump() << '\n';
  if (rec.diverged) throw DivergenceError(rec.diagnostic);
  return kExitOk;
}

struct SweepArgs {
  std::string alphas = "0,-2,-5";
  std::string methods = "gradops";
  std::string inits = "paper1,paper2,paper3";
  std::string variant = "identity";
  std::uint64_t seed = 0;
  std::size_t steps = 20000;
  AdamFlags adam;
  std::string out_dir;
};

inline std::string cell_file_name(const std::string& method, double alpha, bool uses_alpha,
                                  std::size_t init_index) {
  std::string name = method;
  if (uses_alpha) name += "_alpha" + fmt10(alpha);
  return name + "_init" + std::to_string(init_index + 1) + ".csv";
}

// One trajectory per (method, alpha, init); alpha only fans out for gradops.
inline int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const std::vector<double> alphas = parse_number_list(a.alphas, "alphas");
  const std::vector<std::string> methods = parse_name_list(a.methods);
  const std::vector<std::string> init_names = parse_name_list(a.inits);
  if (alphas.empty()) throw UsageError("--alphas must list at least one value");
  if (methods.empty()) throw UsageError("--methods must list at least one method");
  if (init_names.empty()) throw UsageError("--inits must list at least one initial point");
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  if (a.out_dir.empty()) throw UsageError("--out-dir is required");

  struct Cell {
    MethodSpec spec;
    std::string method;
    bool uses_alpha;
    std::size_t init_index;
    std::string file;
  };
  std::vector<Cell> cells;
  const WeightVariant variant = parse_weight_variant(a.variant);
  for (const auto& m : methods) {
    const MethodKind kind = parse_method_kind(m);
    const bool uses_alpha = kind == MethodKind::kGradops;
    const std::vector<double> cell_alphas = uses_alpha ? alphas : std::vector<double>{0.0};
    for (double alpha : cell_alphas) {
      for (std::size_t k = 0; k < init_names.size(); ++k) {
        MethodSpec spec;
        spec.kind = kind;
        spec.alpha = alpha;
        spec.variant = variant;
        spec.seed = a.seed;
        cells.push_back({spec, m, uses_alpha, k, cell_file_name(m, alpha, uses_alpha, k)});
      }
    }
  }
  std::vector<toy2d::ToyPoint> inits;
  for (const auto& n : init_names) inits.push_back(parse_init(n));

  ordered_json config{{"alphas", nums(alphas)},          {"methods", methods},
                      {"inits", init_names},             {"variant", a.variant},
                      {"seed", a.seed},                  {"steps", a.steps},
                      {"out_dir", a.out_dir}};
  config.update(adam_json(a.adam.hyper()));
  out << ordered_json{{"config", config}}.dump() << '\n';

  std::filesystem::create_directories(a.out_dir);
  const std::filesystem::path dir(a.out_dir);

  std::vector<std::future<std::string>> jobs;
  for (const Cell& c : cells) {
    jobs.push_back(std::async(std::launch::async, [&, c]() -> std::string {
      try {
        const auto rec = toy2d::run_trajectory(c.spec, inits[c.init_index], a.steps, a.adam.hyper());
        std::ofstream f(dir / c.file);
        if (!f) return "error: cannot write file";
        write_trajectory_csv(f, rec);
        return rec.diverged ? "diverged" : "ok";
      } catch (const std::exception& e) {
        return std::string("error: ") + e.what();
      }
    }));
  }

  std::ostringstream summary;
  summary << "method,alpha,init,file,status,theta1,theta2,residual,converged\n";
  std::size_t succeeded = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const std::string status = jobs[i].get();
    summary << c.method << ',' << (c.uses_alpha ? fmt10(c.spec.alpha) : "") << ','
            << init_names[c.init_index] << ',' << c.file << ',' << status;
    if (status == "ok" || status == "diverged") {
      // Re-read the terminal row from the written trajectory.
      std::ifstream f(dir / c.file);
      std::string line, last;
      while (std::getline(f, line)) {
        if (!line.empty()) last = line;
      }
      const auto cols = detail::split_csv_line(last);
      const double residual = std::stod(cols[5]);
      summary << ',' << cols[1] << ',' << cols[2] << ',' << cols[5] << ','
              << (residual < kConvergedResidual ? "true" : "false");
      if (status == "ok") ++succeeded;
    } else {
      summary << ",,,,";
    }
    summary << '\n';
  }
  {
    std::ofstream f(dir / "summary.csv");
    if (!f) throw ParseError("cannot write summary in '" + a.out_dir + "'");
    f << summary.str();
  }
  out << summary.str();
  return succeeded > 0 ? kExitOk : kExitDivergence;
}

// ---------------------------------------------------------------------------
// train / metrics

inline ordered_json report_json(const RunReport& r) {
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config_key_values(r.config)) cfg[k] = v;
  ordered_json epochs = ordered_json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", nums(e.train_loss)},
                      {"validation_auc", nums(e.validation_auc)},
                      {"test_auc", nums(e.test_auc)}});
  }
  ordered_json j{{"config", cfg},
                 {"tasks", r.task_names},
                 {"epochs", epochs},
                 {"final_validation_auc", nums(r.final_validation_auc)},
                 {"final_test_auc", nums(r.final_test_auc)},
                 {"batches", r.batches},
                 {"conflict_batches", r.conflict_batches},
                 {"fallback_batches", r.fallback_batches},
                 {"invariant_violations", r.invariant_violations},
                 {"min_normalized_dot", num(r.min_normalized_dot)}};
  if (!r.mean_ratio.empty()) {
    j["mean_ratio"] = nums(r.mean_ratio);
    j["mean_weight"] = nums(r.mean_weight);
  }
  return j;
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string report;
  std::string table;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = parse_run_config_file(a.config);
  if (a.seed) cfg.seed = *a.seed;
  ordered_json echo = ordered_json::object();
  for (const auto& [k, v] : config_key_values(cfg)) echo[k] = v;
  out << ordered_json{{"config", echo}}.dump() << '\n';

  const RunReport report = train_run(cfg);
  const std::string text = report_json(report).dump(2) + "\n";
  if (a.report.empty()) {
    out << text;
  } else {
    std::ofstream f(a.report);
    if (!f) throw ParseError("cannot write '" + a.report + "'");
    f << text;
  }

  MetricTable row;
  row.methods = {cfg.name};
  row.tasks = report.task_names;
  row.values = {report.final_test_auc};
  row.directions.assign(row.tasks.size(), Direction::kHigherBetter);
  if (!a.table.empty()) {
    std::ofstream f(a.table);
    if (!f) throw ParseError("cannot write '" + a.table + "'");
    write_metric_table(f, row);
  } else {
    write_metric_table(out, row);
  }
  return kExitOk;
}

struct MetricsArgs {
  std::string table;
  std::string baseline;
  std::string tie_rule = "min";
};

inline int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const TieRule rule = parse_tie_rule(a.tie_rule);
  const MetricTable table = read_metric_table(a.table);
  table.row_of(a.baseline);
  out << ordered_json{{"config", {{"table", a.table}, {"baseline", a.baseline}, {"tie_rule", a.tie_rule}}}}.dump()
      << '\n';
  const std::vector<double> mr = mean_rank(table, rule);
  out << "method,delta_m,delta_m_percent,mean_rank\n";
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    const double dm = delta_m(table, table.methods[m], a.baseline);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.2f%%,%.2f\n", table.methods[m].c_str(), dm, 100.0 * dm, mr[m]);
    out << buf;
  }
  out << "# mean rank tie rule: " << to_string(rule) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gradops: multi-task gradient deconfliction and aggregation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  DeconflictArgs dc;
  auto* sc_dc = app.add_subcommand("deconflict", "Aggregate a CSV of task gradients (one row per task)");
  sc_dc->add_option("--input", dc.input, "CSV with one task gradient per row")->required();
  sc_dc->add_option("--output", dc.output, "Output JSON document path ('-' for stdout)");
  add_method_flags(sc_dc, dc.method);
  sc_dc->add_option("--seed", dc.seed, "Seed for PCGrad processing orders");

  ToyArgs ty;
  auto* sc_ty = app.add_subcommand("toy2d", "Run one trajectory on the two-task 2D benchmark");
  add_method_flags(sc_ty, ty.method);
  sc_ty->add_option("--seed", ty.seed, "Seed for PCGrad processing orders");
  sc_ty->add_option("--init", ty.init, "Initial point: paper1|paper2|paper3 or 'x,y'");
  sc_ty->add_option("--steps", ty.steps, "Number of Adam updates");
  add_adam_flags(sc_ty, ty.adam);
  sc_ty->add_option("--out", ty.out, "Trajectory CSV path")->required();
  sc_ty->add_option("--summary", ty.summary, "Summary JSON path (default: <out>.summary.json)");

  SweepArgs sw;
  auto* sc_sw = app.add_subcommand("sweep", "Trajectories over methods x alphas x initial points");
  sc_sw->add_option("--alphas", sw.alphas, "Comma-separated GradOPS alphas");
  sc_sw->add_option("--methods", sw.methods, "Comma-separated methods");
  sc_sw->add_option("--inits", sw.inits, "Comma-separated presets (paper1|paper2|paper3)");
  sc_sw->add_option("--variant", sw.variant, "GradOPS ratio transform: identity|exp");
  sc_sw->add_option("--seed", sw.seed, "Seed for PCGrad processing orders");
  sc_sw->add_option("--steps", sw.steps, "Number of Adam updates per trajectory");
  add_adam_flags(sc_sw, sw.adam);
  sc_sw->add_option("--out-dir", sw.out_dir, "Directory for trajectories and summary.csv")->required();

  TrainArgs tr;
  auto* sc_tr = app.add_subcommand("train", "Train a shared-bottom multi-task network from a config file");
  sc_tr->add_option("--config", tr.config, "Flat key = value run config")->required();
  sc_tr->add_option("--seed", tr.seed, "Override the config seed");
  sc_tr->add_option("--report", tr.report, "Run report JSON path (default: stdout)");
  sc_tr->add_option("--table", tr.table, "Metric table CSV path for the final test AUC row (default: stdout)");

  MetricsArgs mt;
  auto* sc_mt = app.add_subcommand("metrics", "Delta_m and mean rank over a metric table CSV");
  sc_mt->add_option("--table", mt.table, "Metric table CSV")->required();
  sc_mt->add_option("--baseline", mt.baseline, "Baseline row for delta_m")->required();
  sc_mt->add_option("--tie-rule", mt.tie_rule, "Rank tie rule: min|average");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sc_dc->parsed()) return cmd_deconflict(dc, out);
    if (sc_ty->parsed()) return cmd_toy2d(ty, out);
    if (sc_sw->parsed()) return cmd_sweep(sw, out);
    if (sc_tr->parsed()) return cmd_train(tr, out);
    if (sc_mt->parsed()) return cmd_metrics(mt, out);
  } catch (const InvariantError& e) {
    err << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace gradops::cli
