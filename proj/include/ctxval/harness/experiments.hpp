#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctxval/core/types.hpp"
#include "ctxval/gateway/gateway.hpp"
#include "ctxval/harness/config.hpp"
#include "ctxval/harness/scorers.hpp"
#include "ctxval/metrics.hpp"
#include "ctxval/valuation.hpp"

namespace ctxval::harness {

/// Context indices ranked by score (descending or ascending), ties going to
/// the lower index.
std::vector<std::size_t> rank_contexts(const std::vector<double>& scores, Order order);

struct CurvePoint {
  std::size_t k = 0;
  /// Dataset mean of the measure on the top-k prefix (samples with fewer
  /// than k contexts contribute their full list).
  double score = 0.0;
  /// Mean oracle CI of the context added at step k, over samples that have a
  /// k-th context; absent at k = 0 or without CI values.
  std::optional<double> mean_added_ci;

  bool operator==(const CurvePoint&) const = default;
};

struct CurveResult {
  std::string scorer;
  Order order = Order::Descending;
  std::vector<CurvePoint> points;
  /// Last k before the mean added CI first drops to zero or below.
  std::optional<std::size_t> k_star;
  std::size_t samples = 0;

  /// Smallest k attaining the maximum score.
  std::size_t argmax_k() const;
};

struct CurveOptions {
  Order order = Order::Descending;
  /// "metric" or "utility".
  std::string measure = "metric";
  metrics::MetricKind metric = metrics::MetricKind::ExactMatch;
  valuation::UtilitySpec utility;
  std::size_t max_samples = 1000;
};

/// For k = 0..n, generates from the k best-ranked contexts (passed to the
/// generator in list order; k = 0 is vanilla generation) and averages the
/// measure over the first max_samples samples.
CurveResult run_curves(gateway::Gateway& gw, const std::vector<Sample>& samples, Scorer& scorer,
                       const CurveOptions& options);

struct EvalRow {
  std::string strategy;
  double score = 0.0;
  double mean_kept = 0.0;
  std::size_t samples = 0;

  bool operator==(const EvalRow&) const = default;
};

struct EvalOptions {
  metrics::MetricKind metric = metrics::MetricKind::ExactMatch;
  std::size_t top_k = 5;
  std::size_t max_samples = 1000;
  std::uint64_t seed = 2024;
};

/// Rows: vanilla, keep-all, oracle-positive-ci, oracle-keep-poison,
/// <scorer>-top-<k>, <scorer>-positive, random-top-<k>. Samples need CI
/// values for the oracle rows.
std::vector<EvalRow> run_eval(gateway::Gateway& gw, const std::vector<Sample>& samples, Scorer& scorer,
                              const EvalOptions& options);

struct SpearmanReport {
  /// Mean of per-sample correlations over samples where it is defined.
  std::optional<double> mean_rho;
  std::size_t samples_used = 0;
  /// Samples with fewer than two contexts or constant ranks on either side.
  std::size_t samples_skipped = 0;
  /// One correlation over all (sample, context) pairs.
  std::optional<double> pooled_rho;
  std::size_t pairs = 0;
};

/// Aligns predictions with oracle CI by (sample id, context id); every
/// sample and context must appear on both sides.
SpearmanReport run_spearman(const std::vector<ScoreRecord>& predicted, const std::vector<Sample>& oracle);

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveResult>& curves);
void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows, metrics::MetricKind metric);
void write_spearman_csv(const std::filesystem::path& path, const SpearmanReport& report);

}  // namespace ctxval::harness
