#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxval/core/types.hpp"
#include "ctxval/csm/embeddings.hpp"
#include "ctxval/csm/weights.hpp"
#include "ctxval/harness/config.hpp"

namespace ctxval::harness {

/// Per-context quality scores for one sample, index-aligned with its contexts.
struct ScoreRecord {
  std::string id;
  std::vector<std::string> context_ids;
  std::vector<double> scores;
  std::string scorer;

  bool operator==(const ScoreRecord&) const = default;
};

void to_json(nlohmann::json& j, const ScoreRecord& r);
void from_json(const nlohmann::json& j, ScoreRecord& r);

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);
void write_scores(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);

/// Scores for `sample` taken from `record`, reordered to the sample's
/// context order. Throws DataError unless both name exactly the same context
/// ids.
std::vector<double> align_scores(const Sample& sample, const ScoreRecord& record);

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  /// Throws DataError when the scorer has nothing for this sample.
  virtual std::vector<double> scores(const Sample& sample) = 0;
};

/// The sample's own CI vector.
class OracleScorer final : public Scorer {
 public:
  std::string name() const override { return "oracle-ci"; }
  std::vector<double> scores(const Sample& sample) override;
};

/// Uniform draws seeded per sample id.
class RandomScorer final : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "random"; }
  std::vector<double> scores(const Sample& sample) override;

 private:
  std::uint64_t seed_;
};

class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(const std::filesystem::path& path);
  std::string name() const override { return "external-score-file"; }
  std::vector<double> scores(const Sample& sample) override;

 private:
  std::map<std::string, ScoreRecord> records_;
};

class CsmScorer final : public Scorer {
 public:
  CsmScorer(csm::CsmWeights<double> weights, std::unique_ptr<csm::EmbeddingProvider> provider);
  std::string name() const override { return "csm"; }
  std::vector<double> scores(const Sample& sample) override;

 private:
  csm::CsmWeights<double> weights_;
  std::unique_ptr<csm::EmbeddingProvider> provider_;
};

/// The embedding provider named by the config, or null when none is set.
std::unique_ptr<csm::EmbeddingProvider> make_embedding_provider(const RunConfig& config);

/// The scorer named `name` ("oracle-ci", "csm", "external-score-file",
/// "random"), built from the config.
std::unique_ptr<Scorer> make_scorer(const std::string& name, const RunConfig& config);

}  // namespace ctxval::harness
