#include "ctxval/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "ctxval/core/error.hpp"
#include "ctxval/util/parallel.hpp"

namespace ctxval::valuation {

std::string_view to_string(UtilityKind kind) {
  return kind == UtilityKind::Metric ? "metric" : "cross-entropy";
}

UtilityKind utility_kind_from_string(std::string_view s) {
  if (s == "cross-entropy") return UtilityKind::CrossEntropy;
  if (s == "metric") return UtilityKind::Metric;
  throw ConfigError("unknown utility kind '" + std::string(s) + "' (expected cross-entropy or metric)");
}

double utility(gateway::Gateway& gw, const Query& query, const AnswerSet& answers, const ContextList& subset,
               const UtilitySpec& spec) {
  if (spec.kind == UtilityKind::Metric) {
    return metrics::score(spec.metric, gw.generate(query, subset).text, answers);
  }
  const auto scores = gw.score_answers(query, subset, answers.answers);
  if (scores.empty()) throw DataError("sample " + query.id + " has no answers to score");
  return *std::max_element(scores.begin(), scores.end());
}

std::vector<std::size_t> dedup_indices(const ContextList& contexts, const DedupPolicy& policy) {
  std::vector<std::size_t> kept;
  if (policy.kind == DedupKind::NormalizedText) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      if (seen.insert(metrics::normalize_answer(contexts[i].text)).second) kept.push_back(i);
    }
    return kept;
  }
  if (policy.vectors.size() != contexts.size()) {
    throw DataError("embedding dedup needs one vector per context (got " + std::to_string(policy.vectors.size()) +
                    " for " + std::to_string(contexts.size()) + " contexts)");
  }
  std::vector<Eigen::VectorXd> unit;
  unit.reserve(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const double norm = policy.vectors[i].norm();
    if (i > 0 && policy.vectors[i].size() != policy.vectors[0].size()) {
      throw DataError("embedding dedup vectors differ in dimension");
    }
    unit.push_back(norm > 0.0 ? Eigen::VectorXd(policy.vectors[i] / norm) : policy.vectors[i]);
  }
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(),
                                       [&](std::size_t j) { return unit[i].dot(unit[j]) >= policy.threshold; });
    if (!duplicate) kept.push_back(i);
  }
  return kept;
}

ContextList dedup(const ContextList& contexts, const DedupPolicy& policy) {
  ContextList out;
  for (std::size_t i : dedup_indices(contexts, policy)) out.push_back(contexts[i]);
  return out;
}

CIResult ci_values(gateway::Gateway& gw, const Sample& sample, const UtilitySpec& spec, const DedupPolicy& policy) {
  CIResult result;
  result.contexts = dedup(sample.contexts, policy);
  const std::size_t n = result.contexts.size();
  result.ci.assign(n, 0.0);
  if (n == 0) return result;

  // Slot n holds v(C); slot i holds v(C \ c_i).
  std::vector<double> v(n + 1, 0.0);
  parallel_for(n + 1, static_cast<std::size_t>(gw.config().concurrency), [&](std::size_t slot) {
    ContextList subset;
    subset.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != slot) subset.push_back(result.contexts[j]);
    }
    v[slot] = utility(gw, sample.query, sample.answers, subset, spec);
  });
  for (std::size_t i = 0; i < n; ++i) result.ci[i] = v[n] - v[i];
  return result;
}

Sample value_sample(gateway::Gateway& gw, const Sample& sample, const UtilitySpec& spec, const DedupPolicy& policy) {
  auto r = ci_values(gw, sample, spec, policy);
  Sample out = sample;
  out.contexts = std::move(r.contexts);
  out.ci = std::move(r.ci);
  return out;
}

namespace {

void check_aligned(const ContextList& contexts, std::size_t values, const char* what) {
  if (contexts.size() != values) {
    throw DataError(std::string(what) + " length mismatch: " + std::to_string(values) + " values for " +
                    std::to_string(contexts.size()) + " contexts");
  }
}

}  // namespace

SelectionResult select_positive(const ContextList& contexts, std::span<const double> ci) {
  check_aligned(contexts, ci.size(), "ci");
  SelectionResult r;
  r.strategy = SelectionStrategy::PositiveCi;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    if (ci[i] > 0.0) {
      r.kept_ids.push_back(contexts[i].id);
      r.scores.push_back(ci[i]);
    }
  }
  return r;
}

double group_influence(std::span<const double> ci, std::span<const std::size_t> members) {
  std::vector<bool> used(ci.size(), false);
  double total = 0.0;
  for (std::size_t i : members) {
    if (i >= ci.size()) throw DataError("group member index " + std::to_string(i) + " out of range");
    if (used[i]) throw DataError("group member index " + std::to_string(i) + " repeated");
    used[i] = true;
    total += ci[i];
  }
  return total;
}

SelectionResult top_k_select(const ContextList& contexts, std::span<const double> scores, std::size_t k) {
  check_aligned(contexts, scores.size(), "scores");
  std::vector<std::size_t> order(contexts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  SelectionResult r;
  r.strategy = SelectionStrategy::TopK;
  for (std::size_t i : order) {
    r.kept_ids.push_back(contexts[i].id);
    r.scores.push_back(scores[i]);
  }
  return r;
}

std::vector<CIVector> scale_ci(const std::vector<CIVector>& values) {
  double max_abs = 0.0;
  for (const auto& v : values) {
    for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  }
  std::vector<CIVector> out = values;
  if (max_abs == 0.0) return out;
  for (auto& v : out) {
    for (double& x : v) x /= max_abs;
  }
  return out;
}

}  // namespace ctxval::valuation
