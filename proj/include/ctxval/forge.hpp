#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ctxval/core/types.hpp"
#include "ctxval/gateway/gateway.hpp"
#include "ctxval/valuation.hpp"

namespace ctxval::forge {

struct RarityStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  double alpha = 0.0;
  double r = 0.0;      // mu + alpha * sigma
};

RarityStats rarity(std::span<const double> ci, double alpha);

enum class SampleCategory { Trivial, Hard, Neither };

std::string_view to_string(SampleCategory c);
SampleCategory sample_category_from_string(std::string_view s);

/// Trivial iff r < delta1, hard iff r > delta2, neither otherwise.
SampleCategory categorize(double r, double delta1, double delta2);

/// Keeps each sample independently with probability keep_rate.
std::vector<Sample> downsample(const std::vector<Sample>& trivial, double keep_rate, std::uint64_t seed);

struct InterventionParams {
  double gamma = 0.1;
  std::size_t donor_subset_size = 4;
  std::uint64_t seed = 2024;
  /// Queries count as distinct when the cosine of their vectors is below this.
  double distinct_cosine = 0.5;
  /// Query embeddings. When both are present they decide distinctness;
  /// otherwise the samples' meta "cluster" tags must both exist and differ.
  std::optional<Eigen::VectorXd> host_query_vector;
  std::optional<Eigen::VectorXd> donor_query_vector;
  /// Recomputes the new sample's CI when set; otherwise the CI is left absent.
  gateway::Gateway* recompute = nullptr;
  valuation::UtilitySpec utility;
};

/// Throws DataError unless the donor's query is distinct from the host's.
void check_donor(const Sample& host, const Sample& donor, const InterventionParams& params);

/// Indices of the host contexts with phi > gamma (C^P).
std::vector<std::size_t> high_ci_indices(const Sample& host, double gamma);

/// Donor contexts drawn uniformly without replacement, in donor list order.
ContextList sample_donor_contexts(const Sample& donor, std::size_t count, std::uint64_t seed);

/// (q_h, Y_h, C^P_h + sampled donor contexts).
Sample intervene_high(const Sample& host, const Sample& donor, const InterventionParams& params);

/// (q_d, Y_d, C^P_h + sampled donor contexts): the host's high-CI contexts
/// placed under the donor's query.
Sample intervene_low(const Sample& host, const Sample& donor, const InterventionParams& params);

struct FrequencyTable {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> edges;  // bin_count + 1 values
  std::vector<std::size_t> counts;
  std::size_t total = 0;

  std::size_t bin_of(double r) const;
  /// Empirical probability of the bin holding r.
  double p(double r) const;
};

FrequencyTable empirical_freq(std::span<const double> rarity_values, std::size_t bin_count);

struct ContrastivePairSet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
  double epsilon1 = 0.0;
  double epsilon2 = 0.0;

  bool operator==(const ContrastivePairSet&) const = default;
};

/// For every anchor, the positive is the other context with the smallest CI
/// gap below epsilon1 (lower index on ties); negatives are all contexts with a
/// gap above epsilon2, capped at max_negatives by seeded sampling (0 means no
/// cap). Anchors lacking either role are skipped.
std::vector<ContrastivePairSet> contrastive_pairs(std::span<const double> ci, double epsilon1, double epsilon2,
                                                  std::size_t max_negatives, std::uint64_t seed);

struct ForgeConfig {
  double alpha = 10.0;
  double delta1 = 5.0;
  double delta2 = 5.0;
  double keep_rate = 0.2;
  double gamma = 0.1;
  double epsilon1 = 0.05;
  double epsilon2 = 0.3;
  std::size_t max_negatives = 8;
  std::size_t bin_count = 20;
  std::size_t donor_subset_size = 4;
  double distinct_cosine = 0.5;
  bool scale = true;
  bool recompute = true;
  bool intervene_low = true;
  std::uint64_t seed = 2024;

  void validate() const;
};

struct CorpusRecord {
  std::string record_id;
  Sample sample;
  SampleCategory category = SampleCategory::Neither;
  RarityStats rarity;
  double p = 1.0;
  nlohmann::json provenance;
  std::vector<ContrastivePairSet> pairs;
  /// Label-free synthetic samples: the host's C^P ids (positive targets for
  /// intervene-high, low targets for intervene-low).
  std::vector<std::string> target_ids;
};

struct Corpus {
  std::vector<CorpusRecord> records;
  nlohmann::json manifest;
};

/// Builds the surrogate training corpus from valued samples: optional CI
/// scaling, rarity categorization, down-sampling of trivial samples,
/// high/low interventions for hard samples, frequency weights and
/// contrastive pairs.
///
/// `recompute` is used when config.recompute is set. `query_vectors` maps
/// query ids to embeddings for donor distinctness.
Corpus build_corpus(const std::vector<Sample>& valued, const ForgeConfig& config, gateway::Gateway* recompute,
                    const valuation::UtilitySpec& utility,
                    const std::map<std::string, Eigen::VectorXd>& query_vectors = {});

nlohmann::json to_json(const CorpusRecord& record);
void write_corpus(const std::string& corpus_path, const std::string& manifest_path, const Corpus& corpus);

}  // namespace ctxval::forge
