#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxval::gateway {

enum class BackendKind { Remote, Simulated };

std::string_view to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view s);

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 32;
};

struct GeneratorConfig {
  BackendKind backend = BackendKind::Simulated;

  // Remote backend. `endpoint` is the API base, e.g. https://host/v1; chat
  // requests go to {endpoint}/chat/completions.
  std::string endpoint;
  std::string api_key_env = "OPENAI_API_KEY";
  /// The endpoint scores supplied continuations via /completions with
  /// echo + logprobs. Without it, cross-entropy utility is unavailable.
  bool forced_scoring = false;
  int max_retries = 4;
  double backoff_initial_s = 0.5;
  double timeout_s = 120.0;

  // Simulated backend.
  std::filesystem::path world_path;

  std::string model = "simworld";
  std::string template_id = "numbered-v1";
  DecodingParams decoding;
  int concurrency = 4;
  /// Empty means an in-memory cache only.
  std::filesystem::path cache_dir;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct GeneratorResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  Usage usage;

  bool operator==(const GeneratorResponse&) const = default;
};

}  // namespace ctxval::gateway
