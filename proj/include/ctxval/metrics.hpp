#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxval/core/types.hpp"

namespace ctxval::metrics {

enum class MetricKind { ExactMatch, TokenF1, Accuracy };

std::string_view to_string(MetricKind kind);
MetricKind metric_kind_from_string(std::string_view s);

/// Open-domain QA normalization: ASCII lowercase, ASCII punctuation removed,
/// the articles a/an/the dropped as whole tokens, whitespace collapsed to
/// single spaces with no leading or trailing space.
std::string normalize_answer(std::string_view text);

/// Whitespace tokens of the normalized text.
std::vector<std::string> normalized_tokens(std::string_view text);

/// 1.0 iff the normalized prediction equals some normalized alias.
double exact_match(std::string_view prediction, const AnswerSet& answers);

/// Best token-level F1 against any alias. Both sides empty scores 1; exactly
/// one side empty scores 0.
double token_f1(std::string_view prediction, const AnswerSet& answers);

/// Choice-label accuracy; the label set plays the role of the alias list.
inline double accuracy(std::string_view prediction, const AnswerSet& labels) {
  return exact_match(prediction, labels);
}

double score(MetricKind kind, std::string_view prediction, const AnswerSet& answers);

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of the average ranks of `x` and `y`.
/// Throws DataError on length mismatch, fewer than two points, or a side whose
/// ranks have zero variance (correlation undefined).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ctxval::metrics
