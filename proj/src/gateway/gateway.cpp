#include "ctxval/gateway/gateway.hpp"

#include <algorithm>

#include "ctxval/core/error.hpp"
#include "ctxval/gateway/prompt.hpp"
#include "ctxval/gateway/remote.hpp"

namespace ctxval::gateway {

using nlohmann::json;

std::string_view to_string(BackendKind kind) { return kind == BackendKind::Remote ? "remote" : "simulated"; }

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "remote") return BackendKind::Remote;
  if (s == "simulated") return BackendKind::Simulated;
  throw ConfigError("unknown generator backend '" + std::string(s) + "' (expected remote or simulated)");
}

void GeneratorConfig::validate() const {
  if (decoding.temperature < 0.0) throw ConfigError("generator.temperature must be >= 0");
  if (decoding.max_tokens < 1) throw ConfigError("generator.max_tokens must be >= 1");
  if (concurrency < 1) throw ConfigError("generator.concurrency must be >= 1");
  if (max_retries < 0) throw ConfigError("generator.max_retries must be >= 0");
  if (backend == BackendKind::Remote && endpoint.empty()) {
    throw ConfigError("generator.endpoint is required for the remote backend");
  }
  if (backend == BackendKind::Simulated && world_path.empty()) {
    throw ConfigError("generator.world is required for the simulated backend");
  }
  const auto ids = prompt_template_ids();
  if (std::find(ids.begin(), ids.end(), template_id) == ids.end()) {
    throw ConfigError("unknown prompt template '" + template_id + "'");
  }
}

void to_json(json& j, const GeneratorResponse& r) {
  j = json{{"text", r.text},
           {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}}};
  if (r.token_logprobs) {
    json lp = json::array();
    for (const auto& t : *r.token_logprobs) lp.push_back({{"token", t.token}, {"logprob", t.logprob}});
    j["token_logprobs"] = std::move(lp);
  }
}

void from_json(const json& j, GeneratorResponse& r) {
  r.text = j.at("text").get<std::string>();
  r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0);
  r.usage.completion_tokens = j.at("usage").value("completion_tokens", 0);
  r.token_logprobs.reset();
  if (auto it = j.find("token_logprobs"); it != j.end()) {
    std::vector<TokenLogprob> tokens;
    for (const auto& t : *it) tokens.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
    r.token_logprobs = std::move(tokens);
  }
}

namespace {

std::vector<std::string> context_ids(const ContextList& contexts) {
  std::vector<std::string> ids;
  ids.reserve(contexts.size());
  for (const auto& c : contexts) ids.push_back(c.id);
  return ids;
}

class SemaphoreSlot {
 public:
  explicit SemaphoreSlot(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SemaphoreSlot() { sem_.release(); }
  SemaphoreSlot(const SemaphoreSlot&) = delete;
  SemaphoreSlot& operator=(const SemaphoreSlot&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

int word_count(const std::string& s) {
  int n = 0;
  bool in_word = false;
  for (char c : s) {
    const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

SimulatedBackend::SimulatedBackend(SimWorld world) : world_(std::move(world)), fingerprint_(world_.fingerprint()) {}

json SimulatedBackend::identity(const Query& query, const ContextList& contexts) const {
  return json{{"world", fingerprint_}, {"query", query.id}, {"contexts", context_ids(contexts)}};
}

GeneratorResponse SimulatedBackend::generate(const Query& query, const ContextList& contexts,
                                             const std::string& prompt, const GeneratorConfig&) {
  const auto ids = context_ids(contexts);
  GeneratorResponse r;
  r.text = world_.emitted_answer(query.id, ids);
  r.usage.prompt_tokens = word_count(prompt);
  r.usage.completion_tokens = word_count(r.text);
  return r;
}

double SimulatedBackend::score_answer(const Query& query, const ContextList& contexts, const std::string&,
                                      const std::string& answer, const GeneratorConfig&) {
  const auto ids = context_ids(contexts);
  return world_.answer_logprob(query.id, ids, answer);
}

Gateway::Gateway(GeneratorConfig config, std::unique_ptr<GeneratorBackend> backend)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      cache_(config_.cache_dir),
      in_flight_(std::max(config_.concurrency, 1)) {}

std::unique_ptr<Gateway> Gateway::create(const GeneratorConfig& config) {
  config.validate();
  std::unique_ptr<GeneratorBackend> backend;
  if (config.backend == BackendKind::Simulated) {
    backend = std::make_unique<SimulatedBackend>(load_simworld(config.world_path));
  } else {
    backend = std::make_unique<RemoteBackend>(config);
  }
  return std::make_unique<Gateway>(config, std::move(backend));
}

json Gateway::key_material(std::string_view kind, const Query& query, const ContextList& contexts,
                           const std::string& prompt) const {
  return json{{"kind", kind},
              {"backend", backend_->tag()},
              {"model", config_.model},
              {"template", config_.template_id},
              {"prompt", prompt},
              {"temperature", config_.decoding.temperature},
              {"max_tokens", config_.decoding.max_tokens},
              {"identity", backend_->identity(query, contexts)}};
}

GeneratorResponse Gateway::generate(const Query& query, const ContextList& contexts) {
  ++evaluations_;
  const std::string prompt = render_prompt(config_.template_id, query, contexts);
  bool hit = false;
  const json value = cache_.get_or_compute(
      key_material("generate", query, contexts, prompt),
      [&] {
        SemaphoreSlot slot(in_flight_);
        ++backend_requests_;
        return json(backend_->generate(query, contexts, prompt, config_));
      },
      hit);
  if (hit) ++cache_hits_;
  return value.get<GeneratorResponse>();
}

std::vector<double> Gateway::score_answers(const Query& query, const ContextList& contexts,
                                           const std::vector<std::string>& answers) {
  ++evaluations_;
  const std::string prompt = render_prompt(config_.template_id, query, contexts);
  json material = key_material("score", query, contexts, prompt);
  material["answers"] = answers;
  bool hit = false;
  const json value = cache_.get_or_compute(
      material,
      [&] {
        json scores = json::array();
        for (const auto& a : answers) {
          SemaphoreSlot slot(in_flight_);
          ++backend_requests_;
          scores.push_back(backend_->score_answer(query, contexts, prompt, a, config_));
        }
        return scores;
      },
      hit);
  if (hit) ++cache_hits_;
  return value.get<std::vector<double>>();
}

void Gateway::reset_counters() {
  evaluations_ = 0;
  backend_requests_ = 0;
  cache_hits_ = 0;
}

}  // namespace ctxval::gateway
