#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctxval/core/types.hpp"

namespace ctxval::gateway {

// SimWorld: a deterministic stand-in for an LLM generator.
//
// Each query requires a set of facts F_q. Each context carries fact tags and a
// signed weight; it is *relevant* to q when one of its facts is in F_q.
// Relevant contexts with positive weight support the answer, relevant ones
// with negative weight poison it; irrelevant contexts have no effect.
//
// The generator answers with the query's gold text iff the relevant support
// contexts cover F_q and total support strictly exceeds total poison
// magnitude; otherwise it emits the world's distractor.
//
// Forced-answer log-probabilities depend on the mode:
//   threshold: 0 for the answer the generator would emit, a per-token
//              penalty for anything else;
//   additive:  for the gold answer, (sum of relevant weights in the subset)
//              - W_q, where W_q is the total positive relevant weight in the
//              world, so leave-one-out differences recover weights exactly.
//              Non-gold answers take the per-token penalty.

enum class UtilityMode { Additive, Threshold };

std::string_view to_string(UtilityMode mode);
UtilityMode utility_mode_from_string(std::string_view s);

struct SimQuery {
  std::string id;
  std::vector<std::string> required_facts;
  std::string answer;
  /// Further gold aliases; in additive mode they score like `answer`.
  std::vector<std::string> aliases;
  /// Coarse topic tag; queries with different clusters are semantically distinct.
  std::string cluster;
};

struct SimContext {
  std::string id;
  std::vector<std::string> facts;
  double weight = 0.0;
};

struct SimWorld {
  UtilityMode mode = UtilityMode::Threshold;
  std::uint64_t seed = 2024;
  std::string distractor = "unknown";
  double penalty_per_token = -10.0;
  std::vector<std::string> facts;
  std::map<std::string, SimQuery, std::less<>> queries;
  std::map<std::string, SimContext, std::less<>> contexts;

  /// Throws DataError if a query has empty F_q, a weight is non-finite, or a
  /// tag names an unknown fact.
  void validate() const;

  const SimQuery& query(std::string_view id) const;
  const SimContext& context(std::string_view id) const;

  bool relevant(const SimQuery& q, const SimContext& c) const;

  bool is_gold(const SimQuery& q, std::string_view answer) const;

  /// The threshold answer rule described above.
  bool answers_correctly(std::string_view query_id, std::span<const std::string> context_ids) const;

  /// Sum of weights of the relevant members of the subset.
  double relevant_weight(std::string_view query_id, std::span<const std::string> context_ids) const;

  /// W_q: total positive weight of all world contexts relevant to the query.
  double max_support(std::string_view query_id) const;

  /// Text the simulated generator emits for this subset.
  std::string emitted_answer(std::string_view query_id, std::span<const std::string> context_ids) const;

  /// Forced-answer log-probability of `answer` (see header comment). An
  /// answer is gold when it normalizes to the query's answer or an alias.
  double answer_logprob(std::string_view query_id, std::span<const std::string> context_ids,
                        std::string_view answer) const;

  /// Stable digest of the world contents; part of the simulated cache key.
  std::string fingerprint() const;
};

/// Brute-force utility oracle: additive mode returns the relevant weight sum;
/// threshold mode returns 1 when the answer rule holds, else 0.
double sim_exact_utility(const SimWorld& world, std::string_view query_id,
                         std::span<const std::string> context_ids);

void to_json(nlohmann::json& j, const SimWorld& w);
void from_json(const nlohmann::json& j, SimWorld& w);

SimWorld load_simworld(const std::filesystem::path& path);
void save_simworld(const std::filesystem::path& path, const SimWorld& world);

/// Recipe for a synthetic world plus its samples.
struct SimRecipe {
  UtilityMode mode = UtilityMode::Additive;
  std::size_t samples = 200;
  std::size_t min_contexts = 2;
  std::size_t max_contexts = 12;
  std::uint64_t seed = 2024;
};

struct SimDataset {
  SimWorld world;
  std::vector<Sample> samples;
};

/// Builds a world and matching samples.
///
/// Additive recipes plant support weights k/64 (k in 1..64), poison weights
/// -k/64 and irrelevant contexts tagged with another cluster's fact, so every
/// partial sum is exact in binary floating point.
///
/// Threshold recipes plant one golden context per required fact (|F_q| in
/// {1, 2}), poisons whose total magnitude stays below total support, and at
/// least two irrelevant noise contexts. Every sample is answered correctly
/// with all its contexts and every golden context is necessary.
///
/// Each sample's meta carries {"cluster": ...} and, for inspection, the
/// planted role of every context under "roles".
SimDataset synthesize_simworld(const SimRecipe& recipe);

}  // namespace ctxval::gateway
