#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ctxval/core/types.hpp"
#include "ctxval/gateway/gateway.hpp"
#include "ctxval/metrics.hpp"

namespace ctxval::valuation {

enum class UtilityKind { CrossEntropy, Metric };

std::string_view to_string(UtilityKind kind);
UtilityKind utility_kind_from_string(std::string_view s);

struct UtilitySpec {
  UtilityKind kind = UtilityKind::CrossEntropy;
  /// Used by the metric kind only.
  metrics::MetricKind metric = metrics::MetricKind::ExactMatch;
};

/// v(S). Cross-entropy: the largest forced log-probability over the answer
/// aliases (one gateway evaluation). Metric: the metric applied to the text
/// generated from `subset`.
double utility(gateway::Gateway& gw, const Query& query, const AnswerSet& answers, const ContextList& subset,
               const UtilitySpec& spec);

enum class DedupKind { NormalizedText, EmbeddingCosine };

struct DedupPolicy {
  DedupKind kind = DedupKind::NormalizedText;
  double threshold = 0.95;
  /// One vector per input context, required by the embedding policy.
  std::vector<Eigen::VectorXd> vectors;
};

/// Indices of the contexts that survive deduplication: the first member of
/// each duplicate group, in list order.
std::vector<std::size_t> dedup_indices(const ContextList& contexts, const DedupPolicy& policy = {});

ContextList dedup(const ContextList& contexts, const DedupPolicy& policy = {});

/// Leave-one-out values over the deduplicated context list.
struct CIResult {
  ContextList contexts;
  CIVector ci;
};

/// phi_i = v(C) - v(C \ c_i) over the deduplicated list. Issues exactly n+1
/// utility evaluations (none when n = 0), up to the gateway's concurrency
/// limit at a time.
CIResult ci_values(gateway::Gateway& gw, const Sample& sample, const UtilitySpec& spec,
                   const DedupPolicy& policy = {});

/// Copy of `sample` with its context list deduplicated and `ci` filled in.
Sample value_sample(gateway::Gateway& gw, const Sample& sample, const UtilitySpec& spec,
                    const DedupPolicy& policy = {});

/// Keeps contexts with phi > 0, in list order.
SelectionResult select_positive(const ContextList& contexts, std::span<const double> ci);

/// Sum of phi over the member indices; throws DataError on an out-of-range or
/// repeated index.
double group_influence(std::span<const double> ci, std::span<const std::size_t> members);

/// Keeps the k highest scores, ties going to the lower index; kept contexts
/// stay in list order.
SelectionResult top_k_select(const ContextList& contexts, std::span<const double> scores, std::size_t k);

/// Divides every value by the largest absolute value across all vectors.
/// All-zero input stays zero.
std::vector<CIVector> scale_ci(const std::vector<CIVector>& values);

}  // namespace ctxval::valuation
