// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlasdi/core/dense_matrix.hpp"
#include "mlasdi/data.hpp"
#include "mlasdi/error.hpp"
#include "mlasdi/multistage.hpp"
#include "mlasdi/parallel.hpp"

namespace mlasdi {

/// max_j ||u(t_j) - u~(t_j)|| / ||u(t_j)|| over the rows of two trajectories.
inline double max_relative_error(const DenseMatrix& truth, const DenseMatrix& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols()) {
    fail(ErrorKind::shape, "truth " + truth.shape_string() + " vs prediction " + pred.shape_string());
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < truth.rows(); ++j) {
    double num = 0.0, den = 0.0;
    auto u = truth.row(j);
    auto v = pred.row(j);
    for (std::size_t i = 0; i < u.size(); ++i) {
      num += (u[i] - v[i]) * (u[i] - v[i]);
      den += u[i] * u[i];
    }
    if (den == 0.0) fail(ErrorKind::undefined_metric, "truth snapshot at time index " + std::to_string(j) + " has zero norm");
    worst = std::max(worst, std::sqrt(num) / std::sqrt(den));
  }
  return worst;
}

struct PercentileSummary {
  double max = 0.0;
  double p90 = 0.0;
  double p75 = 0.0;
};

/// Nearest-rank order statistic: sorted[ceil(q n / 100) - 1].
inline double nearest_rank(std::vector<double> sorted_values, double q) {
  const auto n = static_cast<double>(sorted_values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, sorted_values.size());
  return sorted_values[rank - 1];
}

inline PercentileSummary percentile_summary(std::vector<double> errors) {
  if (errors.empty()) fail(ErrorKind::argument, "percentile summary of an empty list");
  std::sort(errors.begin(), errors.end());
  return {errors.back(), nearest_rank(errors, 90.0), nearest_rank(errors, 75.0)};
}

struct ErrorReport {
  DenseMatrix params;
  std::vector<double> errors;
  PercentileSummary summary;
  std::size_t stage_cutoff = 0;
  std::vector<double> train_seconds;  // per stage, when known
  std::size_t param_count = 0;
};

/// Predicts every test trajectory from its initial condition, truncating the
/// composition at `cutoff` stages, and scores it with max_relative_error.
inline ErrorReport evaluate_stack(const StageStack& stack, const SnapshotTensor& test,
                                  std::optional<std::size_t> cutoff = std::nullopt, std::size_t threads = 1) {
  if (test.n_params() == 0) fail(ErrorKind::argument, "empty test set");
  if (test.state_dim() != stack.state_dim) {
    fail(ErrorKind::shape, "test state dim " + std::to_string(test.state_dim()) + " does not match checkpoint state dim " +
                               std::to_string(stack.state_dim));
  }
  const std::size_t k = cutoff.value_or(stack.n_stages());
  if (k < 1 || k > stack.n_stages()) {
    fail(ErrorKind::argument, "stage cutoff " + std::to_string(k) + " not available; available stages 1.." +
                                  std::to_string(stack.n_stages()));
  }
  ErrorReport report;
  report.params = test.params;
  report.errors.assign(test.n_params(), 0.0);
  report.stage_cutoff = k;
  report.param_count = stack.parameter_count(k);
  parallel_for(test.n_params(), threads, [&](std::size_t p) {
    try {
      const DenseMatrix pred = predict(stack, test.params.row(p), test.initial_condition(p), test.n_times() - 1, k);
      report.errors[p] = max_relative_error(test.trajectory(p), pred);
    } catch (const Error& e) {
      std::string mu;
      for (double v : test.params.row(p)) mu += (mu.empty() ? "" : ",") + std::to_string(v);
      fail(e.kind(), "at mu=(" + mu + "): " + e.what());
    }
  });
  report.summary = percentile_summary(report.errors);
  return report;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `mu_1,...,mu_N,max_rel_error` then one row per parameter.
inline void write_report_csv(const ErrorReport& r, std::ostream& out) {
  for (std::size_t c = 0; c < r.params.cols(); ++c) out << "mu_" << (c + 1) << ',';
  out << "max_rel_error\n";
  for (std::size_t p = 0; p < r.errors.size(); ++p) {
    for (double v : r.params.row(p)) out << format_double(v) << ',';
    out << format_double(r.errors[p]) << '\n';
  }
}

inline void write_report_summary(const ErrorReport& r, std::ostream& out) {
  out << "max=" << format_double(r.summary.max) << '\n';
  out << "p90=" << format_double(r.summary.p90) << '\n';
  out << "p75=" << format_double(r.summary.p75) << '\n';
  for (std::size_t k = 0; k < r.train_seconds.size(); ++k) {
    out << "train_seconds_stage_" << (k + 1) << '=' << format_double(r.train_seconds[k]) << '\n';
  }
  out << "param_count=" << r.param_count << '\n';
}

}  // namespace mlasdi
