#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctxval/forge.hpp"
#include "ctxval/gateway/config.hpp"
#include "ctxval/metrics.hpp"
#include "ctxval/valuation.hpp"

namespace ctxval::harness {

/// Parses the TOML subset the run configuration uses: [section] headers,
/// `key = value` pairs, # comments, basic and literal strings, integers,
/// floats, booleans and single-line arrays of those. Returns
/// {section: {key: value}}; keys before any header land in section "".
/// Throws ConfigError with the line number on anything else.
nlohmann::json parse_toml(std::string_view text, const std::string& source = "<config>");

/// Parses the right-hand side of a `--set section.key=value` override. Text
/// that is not a valid TOML value is taken as a bare string.
nlohmann::json parse_override_value(std::string_view text);

enum class Order { Descending, Ascending };

std::string_view to_string(Order o);
Order order_from_string(std::string_view s);

struct EmbeddingsConfig {
  std::string backend;  // "", "file" or "remote"
  std::filesystem::path path;
  std::string endpoint;
  std::string model;
  int dimension = 0;
  std::string api_key_env = "OPENAI_API_KEY";
};

struct RunConfig {
  std::filesystem::path config_dir;

  // [run]
  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  std::uint64_t seed = 2024;
  valuation::UtilitySpec utility;
  metrics::MetricKind task_metric = metrics::MetricKind::ExactMatch;
  std::string scorer = "oracle-ci";
  Order order = Order::Descending;
  std::size_t top_k = 5;
  std::size_t max_samples = 1000;
  /// "metric" (task metric on generated text) or "utility" (v(S)).
  std::string curve_measure = "metric";
  valuation::DedupKind dedup = valuation::DedupKind::NormalizedText;
  double dedup_threshold = 0.95;

  gateway::GeneratorConfig generator;
  forge::ForgeConfig forge;
  std::filesystem::path csm_weights;
  EmbeddingsConfig embeddings;
  std::filesystem::path scores_path;

  std::filesystem::path out(const std::string& name) const { return output_dir / name; }

  /// Throws ConfigError when a value is out of range or a referenced input
  /// file is missing.
  void validate() const;
};

/// Builds a RunConfig from parsed TOML. Relative paths resolve against
/// `config_dir`. Unknown sections or keys are errors.
RunConfig run_config_from_toml(const nlohmann::json& doc, const std::filesystem::path& config_dir);

/// Reads the file, applies `section.key=value` overrides, then converts.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace ctxval::harness
