#pragma once

#include <string>

#include <json.hpp>

#include "ctxval/gateway/gateway.hpp"

namespace ctxval::gateway {

/// Base URL split into the part cpp-httplib connects to and a path prefix.
struct HttpTarget {
  std::string scheme_host_port;  // e.g. "https://api.example.com:443"
  std::string base_path;         // e.g. "/v1", never with a trailing slash

  static HttpTarget parse(const std::string& url);
};

struct RetryPolicy {
  int max_retries = 4;
  double backoff_initial_s = 0.5;
  double timeout_s = 120.0;
};

/// POSTs a JSON body and returns the parsed JSON response. Retries 429 and
/// 5xx responses (and connection failures) with exponential backoff, honoring
/// a numeric Retry-After header. Other failures raise GatewayError carrying
/// the HTTP status and any Retry-After value.
nlohmann::json post_json(const HttpTarget& target, const std::string& path, const nlohmann::json& body,
                         const std::string& api_key, const RetryPolicy& policy);

/// Reads the API key from the named environment variable; empty when unset.
std::string api_key_from_env(const std::string& env_name);

/// OpenAI-compatible endpoint. Generation uses {base}/chat/completions;
/// forced-answer scoring uses {base}/completions with echo + logprobs and
/// max_tokens 0, summing the log-probabilities of tokens past the prompt.
class RemoteBackend final : public GeneratorBackend {
 public:
  explicit RemoteBackend(const GeneratorConfig& config);

  std::string tag() const override { return "remote"; }
  GeneratorResponse generate(const Query& query, const ContextList& contexts, const std::string& prompt,
                             const GeneratorConfig& config) override;
  double score_answer(const Query& query, const ContextList& contexts, const std::string& prompt,
                      const std::string& answer, const GeneratorConfig& config) override;

 private:
  HttpTarget target_;
  RetryPolicy policy_;
};

}  // namespace ctxval::gateway
