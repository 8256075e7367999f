#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ctxval {

struct Query {
  std::string id;
  std::string text;

  bool operator==(const Query&) const = default;
};

/// Gold answer aliases, in the order the dataset lists them.
struct AnswerSet {
  std::vector<std::string> answers;

  bool operator==(const AnswerSet&) const = default;
};

struct Context {
  std::string id;
  std::string text;
  std::optional<std::string> origin;

  bool operator==(const Context&) const = default;
};

using ContextList = std::vector<Context>;

/// Per-context influence values, index-aligned with a ContextList.
using CIVector = std::vector<double>;

struct Sample {
  Query query;
  AnswerSet answers;
  ContextList contexts;
  std::optional<CIVector> ci;
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const Sample&) const = default;
};

enum class SelectionStrategy { PositiveCi, TopK, ExternalScore, Random };

std::string_view to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(std::string_view s);

struct SelectionResult {
  std::vector<std::string> kept_ids;
  std::vector<double> scores;  // one per kept context
  SelectionStrategy strategy = SelectionStrategy::PositiveCi;

  bool operator==(const SelectionResult&) const = default;
};

/// Returns `sample` unchanged when every type invariant holds; otherwise
/// throws ValidationError naming the first failing field.
Sample validate_sample(Sample sample);

/// Checks `result` against the list it was selected from: kept ids are a
/// duplicate-free subsequence of `contexts`.
void validate_selection(const SelectionResult& result, const ContextList& contexts);

/// Contexts of `contexts` whose ids appear in `ids`, in list order.
ContextList subset_by_ids(const ContextList& contexts, const std::vector<std::string>& ids);

}  // namespace ctxval
