#include "ctxval/harness/scorers.hpp"

#include <set>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/csm/select.hpp"
#include "ctxval/util/rng.hpp"

namespace ctxval::harness {

using nlohmann::json;

void to_json(json& j, const ScoreRecord& r) {
  j = json{{"id", r.id}, {"context_ids", r.context_ids}, {"scores", r.scores}, {"scorer", r.scorer}};
}

void from_json(const json& j, ScoreRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.context_ids = j.at("context_ids").get<std::vector<std::string>>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.scorer = j.value("scorer", std::string());
  if (r.context_ids.size() != r.scores.size()) {
    throw DataError("score record '" + r.id + "': context_ids and scores differ in length");
  }
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::vector<ScoreRecord> out;
  std::size_t n = 0;
  for (const auto& j : read_jsonl(path)) {
    ++n;
    try {
      out.push_back(j.get<ScoreRecord>());
    } catch (const json::exception& e) {
      throw DataError(path.string() + " record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  std::vector<json> lines;
  for (const auto& r : records) lines.emplace_back(r);
  write_jsonl(path, lines);
}

std::vector<double> align_scores(const Sample& sample, const ScoreRecord& record) {
  if (record.scores.size() != record.context_ids.size()) {
    throw DataError("score record '" + record.id + "' has " + std::to_string(record.scores.size()) + " scores for " +
                    std::to_string(record.context_ids.size()) + " context ids");
  }
  std::map<std::string, double> by_id;
  for (std::size_t i = 0; i < record.context_ids.size(); ++i) {
    if (!by_id.emplace(record.context_ids[i], record.scores[i]).second) {
      throw DataError("score record '" + record.id + "' repeats context '" + record.context_ids[i] + "'");
    }
  }
  if (by_id.size() != sample.contexts.size()) {
    throw DataError("score record '" + record.id + "' has " + std::to_string(by_id.size()) + " contexts, sample has " +
                    std::to_string(sample.contexts.size()));
  }
  std::vector<double> out;
  for (const auto& c : sample.contexts) {
    auto it = by_id.find(c.id);
    if (it == by_id.end()) {
      throw DataError("score record '" + record.id + "' has no score for context '" + c.id + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

std::vector<double> OracleScorer::scores(const Sample& sample) {
  if (!sample.ci) throw DataError("oracle-ci scorer: sample '" + sample.query.id + "' has no CI values");
  return *sample.ci;
}

std::vector<double> RandomScorer::scores(const Sample& sample) {
  Rng rng(derive_seed(seed_, "random:" + sample.query.id));
  std::vector<double> out;
  for (std::size_t i = 0; i < sample.contexts.size(); ++i) out.push_back(rng.uniform());
  return out;
}

ExternalScorer::ExternalScorer(const std::filesystem::path& path) {
  for (auto& r : read_scores(path)) {
    const std::string id = r.id;
    if (!records_.emplace(id, std::move(r)).second) {
      throw DataError(path.string() + ": duplicate score record for '" + id + "'");
    }
  }
}

std::vector<double> ExternalScorer::scores(const Sample& sample) {
  auto it = records_.find(sample.query.id);
  if (it == records_.end()) throw DataError("score file has no record for sample '" + sample.query.id + "'");
  return align_scores(sample, it->second);
}

CsmScorer::CsmScorer(csm::CsmWeights<double> weights, std::unique_ptr<csm::EmbeddingProvider> provider)
    : weights_(std::move(weights)), provider_(std::move(provider)) {}

std::vector<double> CsmScorer::scores(const Sample& sample) {
  return csm::csm_scores(sample.query, sample.contexts, weights_, *provider_);
}

std::unique_ptr<csm::EmbeddingProvider> make_embedding_provider(const RunConfig& config) {
  const auto& e = config.embeddings;
  if (e.backend.empty()) return nullptr;
  if (e.backend == "file") {
    if (e.path.empty()) throw ConfigError("embeddings.path is required for the file backend");
    return std::make_unique<csm::FileEmbeddings>(e.path);
  }
  gateway::RetryPolicy policy{config.generator.max_retries, config.generator.backoff_initial_s,
                              config.generator.timeout_s};
  return std::make_unique<csm::RemoteEmbeddings>(e.endpoint, e.model, e.dimension, e.api_key_env, policy);
}

std::unique_ptr<Scorer> make_scorer(const std::string& name, const RunConfig& config) {
  if (name == "oracle-ci") return std::make_unique<OracleScorer>();
  if (name == "random") return std::make_unique<RandomScorer>(config.seed);
  if (name == "external-score-file") {
    if (config.scores_path.empty()) throw ConfigError("scores.path is required for the external-score-file scorer");
    return std::make_unique<ExternalScorer>(config.scores_path);
  }
  if (name == "csm") {
    if (config.csm_weights.empty()) throw ConfigError("csm.weights is required for the csm scorer");
    auto provider = make_embedding_provider(config);
    if (!provider) throw ConfigError("the csm scorer needs an [embeddings] backend");
    auto weights = csm::load_weights(config.csm_weights);
    if (provider->dimension() != 0 && provider->dimension() != weights.meta.d_model) {
      throw ConfigError("embedding dimension " + std::to_string(provider->dimension()) +
                        " does not match CSM d_model " + std::to_string(weights.meta.d_model));
    }
    return std::make_unique<CsmScorer>(weights.cast<double>(), std::move(provider));
  }
  throw ConfigError("unknown scorer '" + name + "'");
}

}  // namespace ctxval::harness
