#include "ctxval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctxval/core/error.hpp"

namespace ctxval::metrics {

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_article(std::string_view token) {
  return token == "a" || token == "an" || token == "the";
}

double f1_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string_view, int> counts;
  for (const auto& t : gold) ++counts[t];
  int same = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double precision = static_cast<double>(same) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(same) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::ExactMatch: return "em";
    case MetricKind::TokenF1: return "f1";
    case MetricKind::Accuracy: return "accuracy";
  }
  return "em";
}

MetricKind metric_kind_from_string(std::string_view s) {
  if (s == "em" || s == "exact-match") return MetricKind::ExactMatch;
  if (s == "f1" || s == "token-f1") return MetricKind::TokenF1;
  if (s == "accuracy" || s == "acc") return MetricKind::Accuracy;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected em, f1 or accuracy)");
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::string token;
  auto flush = [&] {
    if (!token.empty() && !is_article(token)) {
      if (!out.empty()) out.push_back(' ');
      out += token;
    }
    token.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      continue;
    } else {
      token.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c));
    }
  }
  flush();
  return out;
}

std::vector<std::string> normalized_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  const std::string norm = normalize_answer(text);
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    tokens.emplace_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

double exact_match(std::string_view prediction, const AnswerSet& answers) {
  const std::string pred = normalize_answer(prediction);
  for (const auto& alias : answers.answers) {
    if (normalize_answer(alias) == pred) return 1.0;
  }
  return 0.0;
}

double token_f1(std::string_view prediction, const AnswerSet& answers) {
  const auto pred = normalized_tokens(prediction);
  double best = 0.0;
  for (const auto& alias : answers.answers) {
    best = std::max(best, f1_tokens(pred, normalized_tokens(alias)));
  }
  return best;
}

double score(MetricKind kind, std::string_view prediction, const AnswerSet& answers) {
  switch (kind) {
    case MetricKind::ExactMatch: return exact_match(prediction, answers);
    case MetricKind::TokenF1: return token_f1(prediction, answers);
    case MetricKind::Accuracy: return accuracy(prediction, answers);
  }
  return 0.0;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) hold ranks i+1..j+1.
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("spearman: length mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DataError("spearman: need at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // mean of average ranks is always (n+1)/2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DataError("spearman: undefined correlation (zero rank variance)");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace ctxval::metrics
