#include "ctxval/gateway/remote.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "ctxval/core/error.hpp"

namespace ctxval::gateway {

using nlohmann::json;

HttpTarget HttpTarget::parse(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  HttpTarget t;
  t.scheme_host_port = url.substr(0, path_start);
  t.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!t.base_path.empty() && t.base_path.back() == '/') t.base_path.pop_back();
  return t;
}

std::string api_key_from_env(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string();
}

namespace {

std::optional<double> parse_retry_after(const httplib::Result& res) {
  if (!res || !res->has_header("Retry-After")) return std::nullopt;
  const std::string v = res->get_header_value("Retry-After");
  char* end = nullptr;
  const double seconds = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || !std::isfinite(seconds) || seconds < 0) return std::nullopt;
  return seconds;
}

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

json post_json(const HttpTarget& target, const std::string& path, const json& body, const std::string& api_key,
               const RetryPolicy& policy) {
  httplib::Client client(target.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(policy.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  const std::string url_path = target.base_path + path;
  const std::string payload = body.dump();
  double backoff = policy.backoff_initial_s;
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(url_path, headers, payload, "application/json");
    const int status = res ? res->status : 0;
    if (res && status >= 200 && status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        throw GatewayError("malformed JSON from " + target.scheme_host_port + url_path + ": " + e.what(), status);
      }
    }
    const auto retry_after = parse_retry_after(res);
    const bool can_retry = (!res || retryable(status)) && attempt < policy.max_retries;
    if (!can_retry) {
      std::string what = res ? "HTTP " + std::to_string(status) + " from " + target.scheme_host_port + url_path
                             : "request to " + target.scheme_host_port + url_path + " failed: " +
                                   httplib::to_string(res.error());
      if (res && !res->body.empty()) what += ": " + res->body.substr(0, 200);
      throw GatewayError(what, status, retry_after);
    }
    const double wait = retry_after.value_or(backoff);
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    backoff *= 2.0;
  }
}

RemoteBackend::RemoteBackend(const GeneratorConfig& config)
    : target_(HttpTarget::parse(config.endpoint)),
      policy_{config.max_retries, config.backoff_initial_s, config.timeout_s} {}

GeneratorResponse RemoteBackend::generate(const Query&, const ContextList&, const std::string& prompt,
                                          const GeneratorConfig& config) {
  json body{{"model", config.model},
            {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", config.decoding.temperature},
            {"max_tokens", config.decoding.max_tokens}};
  const json res = post_json(target_, "/chat/completions", body, api_key_from_env(config.api_key_env), policy_);
  GeneratorResponse out;
  try {
    const json& choice = res.at("choices").at(0);
    const json& content = choice.at("message").at("content");
    out.text = content.is_null() ? std::string() : content.get<std::string>();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object() && lp->contains("content")) {
      std::vector<TokenLogprob> tokens;
      for (const auto& t : lp->at("content")) {
        tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
      out.token_logprobs = std::move(tokens);
    }
    if (auto usage = res.find("usage"); usage != res.end() && usage->is_object()) {
      out.usage.prompt_tokens = usage->value("prompt_tokens", 0);
      out.usage.completion_tokens = usage->value("completion_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw GatewayError(std::string("unexpected chat completion shape: ") + e.what());
  }
  return out;
}

double RemoteBackend::score_answer(const Query&, const ContextList&, const std::string& prompt,
                                   const std::string& answer, const GeneratorConfig& config) {
  if (!config.forced_scoring) {
    throw CapabilityUnsupported(
        "endpoint does not support forced-answer scoring; use a metric-based utility (utility = \"metric\")");
  }
  const std::string continuation = " " + answer;
  json body{{"model", config.model},
            {"prompt", prompt + continuation},
            {"max_tokens", 0},
            {"echo", true},
            {"logprobs", 1},
            {"temperature", 0.0}};
  const json res = post_json(target_, "/completions", body, api_key_from_env(config.api_key_env), policy_);
  try {
    const json& lp = res.at("choices").at(0).at("logprobs");
    if (!lp.is_object() || !lp.contains("token_logprobs") || !lp.contains("text_offset")) {
      throw CapabilityUnsupported("endpoint returned no echoed log-probabilities; use a metric-based utility");
    }
    const auto& offsets = lp.at("text_offset");
    const auto& logprobs = lp.at("token_logprobs");
    double total = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < logprobs.size() && i < offsets.size(); ++i) {
      if (offsets[i].get<std::size_t>() < prompt.size() || logprobs[i].is_null()) continue;
      total += logprobs[i].get<double>();
      any = true;
    }
    if (!any) throw CapabilityUnsupported("endpoint echoed no answer tokens; use a metric-based utility");
    return total;
  } catch (const json::exception& e) {
    throw CapabilityUnsupported(std::string("unexpected completion logprob shape: ") + e.what());
  }
}

}  // namespace ctxval::gateway
