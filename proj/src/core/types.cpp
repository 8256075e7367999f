#include "ctxval/core/types.hpp"

#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ctxval/core/error.hpp"
#include "ctxval/metrics.hpp"

namespace ctxval {

namespace {

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\n\r\f\v") == std::string_view::npos;
}

}  // namespace

std::string_view to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::PositiveCi: return "positive-ci";
    case SelectionStrategy::TopK: return "top-k";
    case SelectionStrategy::ExternalScore: return "external-score";
    case SelectionStrategy::Random: return "random";
  }
  return "positive-ci";
}

SelectionStrategy selection_strategy_from_string(std::string_view s) {
  if (s == "positive-ci") return SelectionStrategy::PositiveCi;
  if (s == "top-k") return SelectionStrategy::TopK;
  if (s == "external-score") return SelectionStrategy::ExternalScore;
  if (s == "random") return SelectionStrategy::Random;
  throw DataError("unknown selection strategy '" + std::string(s) + "'");
}

Sample validate_sample(Sample sample) {
  if (sample.query.id.empty()) throw ValidationError("id", "empty query id");
  if (blank(sample.query.text)) throw ValidationError("query", "empty query text");

  if (sample.answers.answers.empty()) throw ValidationError("answers", "empty answer set");
  std::set<std::string> normalized;
  for (const auto& a : sample.answers.answers) {
    if (a.empty()) throw ValidationError("answers", "empty answer alias");
    if (!normalized.insert(metrics::normalize_answer(a)).second) {
      throw ValidationError("answers", "duplicate alias after normalization: '" + a + "'");
    }
  }

  std::unordered_set<std::string_view> ids;
  for (const auto& c : sample.contexts) {
    if (c.id.empty()) throw ValidationError("contexts.id", "empty context id");
    if (!ids.insert(c.id).second) throw ValidationError("contexts.id", "duplicate id '" + c.id + "'");
    if (blank(c.text)) throw ValidationError("contexts.text", "empty text for context '" + c.id + "'");
  }

  if (sample.ci) {
    if (sample.ci->size() != sample.contexts.size()) {
      throw ValidationError("ci", "length mismatch (" + std::to_string(sample.ci->size()) + " values for " +
                                      std::to_string(sample.contexts.size()) + " contexts)");
    }
    for (double v : *sample.ci) {
      if (!std::isfinite(v)) throw ValidationError("ci", "non-finite value");
    }
  }
  if (!sample.meta.is_object()) throw ValidationError("meta", "must be an object");
  return sample;
}

void validate_selection(const SelectionResult& result, const ContextList& contexts) {
  if (result.scores.size() != result.kept_ids.size()) {
    throw ValidationError("scores", "length mismatch with kept_ids");
  }
  std::unordered_map<std::string_view, std::size_t> position;
  for (std::size_t i = 0; i < contexts.size(); ++i) position.emplace(contexts[i].id, i);
  std::size_t last = 0;
  bool first = true;
  for (const auto& id : result.kept_ids) {
    auto it = position.find(id);
    if (it == position.end()) throw ValidationError("kept_ids", "unknown context id '" + id + "'");
    if (!first && it->second <= last) {
      throw ValidationError("kept_ids", "duplicate or out-of-order id '" + id + "'");
    }
    last = it->second;
    first = false;
  }
}

ContextList subset_by_ids(const ContextList& contexts, const std::vector<std::string>& ids) {
  std::unordered_set<std::string_view> wanted(ids.begin(), ids.end());
  ContextList out;
  for (const auto& c : contexts) {
    if (wanted.count(c.id)) out.push_back(c);
  }
  return out;
}

}  // namespace ctxval
