#include "ctxval/gateway/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/metrics.hpp"
#include "ctxval/util/hash.hpp"

namespace ctxval::gateway {

using nlohmann::json;

std::string_view to_string(UtilityMode mode) {
  return mode == UtilityMode::Additive ? "additive" : "threshold";
}

UtilityMode utility_mode_from_string(std::string_view s) {
  if (s == "additive") return UtilityMode::Additive;
  if (s == "threshold") return UtilityMode::Threshold;
  throw DataError("unknown SimWorld mode '" + std::string(s) + "'");
}

void SimWorld::validate() const {
  std::set<std::string_view> known(facts.begin(), facts.end());
  for (const auto& [id, q] : queries) {
    if (q.required_facts.empty()) throw DataError("SimWorld query '" + id + "' has no required facts");
    for (const auto& f : q.required_facts) {
      if (!known.count(f)) throw DataError("SimWorld query '" + id + "' names unknown fact '" + f + "'");
    }
  }
  for (const auto& [id, c] : contexts) {
    if (!std::isfinite(c.weight)) throw DataError("SimWorld context '" + id + "' has a non-finite weight");
    for (const auto& f : c.facts) {
      if (!known.count(f)) throw DataError("SimWorld context '" + id + "' names unknown fact '" + f + "'");
    }
  }
}

const SimQuery& SimWorld::query(std::string_view id) const {
  auto it = queries.find(id);
  if (it == queries.end()) throw DataError("SimWorld: unknown query id '" + std::string(id) + "'");
  return it->second;
}

const SimContext& SimWorld::context(std::string_view id) const {
  auto it = contexts.find(id);
  if (it == contexts.end()) throw DataError("SimWorld: unknown context id '" + std::string(id) + "'");
  return it->second;
}

bool SimWorld::relevant(const SimQuery& q, const SimContext& c) const {
  for (const auto& f : c.facts) {
    if (std::find(q.required_facts.begin(), q.required_facts.end(), f) != q.required_facts.end()) return true;
  }
  return false;
}

bool SimWorld::answers_correctly(std::string_view query_id, std::span<const std::string> context_ids) const {
  const SimQuery& q = query(query_id);
  double support = 0.0;
  double poison = 0.0;
  std::set<std::string_view> covered;
  for (const auto& cid : context_ids) {
    const SimContext& c = context(cid);
    if (!relevant(q, c)) continue;
    if (c.weight > 0.0) {
      support += c.weight;
      for (const auto& f : c.facts) covered.insert(f);
    } else if (c.weight < 0.0) {
      poison -= c.weight;
    }
  }
  for (const auto& f : q.required_facts) {
    if (!covered.count(f)) return false;
  }
  return support > poison;
}

bool SimWorld::is_gold(const SimQuery& q, std::string_view answer) const {
  const std::string norm = metrics::normalize_answer(answer);
  if (norm == metrics::normalize_answer(q.answer)) return true;
  return std::any_of(q.aliases.begin(), q.aliases.end(),
                     [&](const std::string& a) { return norm == metrics::normalize_answer(a); });
}

double SimWorld::relevant_weight(std::string_view query_id, std::span<const std::string> context_ids) const {
  const SimQuery& q = query(query_id);
  double sum = 0.0;
  for (const auto& cid : context_ids) {
    const SimContext& c = context(cid);
    if (relevant(q, c)) sum += c.weight;
  }
  return sum;
}

double SimWorld::max_support(std::string_view query_id) const {
  const SimQuery& q = query(query_id);
  double total = 0.0;
  for (const auto& [id, c] : contexts) {
    if (c.weight > 0.0 && relevant(q, c)) total += c.weight;
  }
  return total;
}

std::string SimWorld::emitted_answer(std::string_view query_id, std::span<const std::string> context_ids) const {
  return answers_correctly(query_id, context_ids) ? query(query_id).answer : distractor;
}

double SimWorld::answer_logprob(std::string_view query_id, std::span<const std::string> context_ids,
                                std::string_view answer) const {
  const auto tokens = metrics::normalized_tokens(answer);
  const double penalty = penalty_per_token * static_cast<double>(std::max<std::size_t>(tokens.size(), 1));
  if (mode == UtilityMode::Additive) {
    if (is_gold(query(query_id), answer)) {
      return relevant_weight(query_id, context_ids) - max_support(query_id);
    }
    return penalty;
  }
  const std::string emitted = emitted_answer(query_id, context_ids);
  return metrics::normalize_answer(emitted) == metrics::normalize_answer(answer) ? 0.0 : penalty;
}

std::string SimWorld::fingerprint() const { return sha256_hex(json(*this).dump()); }

double sim_exact_utility(const SimWorld& world, std::string_view query_id,
                         std::span<const std::string> context_ids) {
  if (world.mode == UtilityMode::Additive) return world.relevant_weight(query_id, context_ids);
  return world.answers_correctly(query_id, context_ids) ? 1.0 : 0.0;
}

void to_json(json& j, const SimWorld& w) {
  j = json{{"version", 1},
           {"mode", to_string(w.mode)},
           {"seed", w.seed},
           {"distractor", w.distractor},
           {"penalty_per_token", w.penalty_per_token},
           {"facts", w.facts}};
  json queries = json::array();
  for (const auto& [id, q] : w.queries) {
    json jq{{"id", q.id}, {"required_facts", q.required_facts}, {"answer", q.answer}, {"cluster", q.cluster}};
    if (!q.aliases.empty()) jq["aliases"] = q.aliases;
    queries.push_back(std::move(jq));
  }
  json contexts = json::array();
  for (const auto& [id, c] : w.contexts) {
    contexts.push_back({{"id", c.id}, {"facts", c.facts}, {"weight", c.weight}});
  }
  j["queries"] = std::move(queries);
  j["contexts"] = std::move(contexts);
}

void from_json(const json& j, SimWorld& w) {
  try {
    w.mode = utility_mode_from_string(j.at("mode").get<std::string>());
    w.seed = j.value("seed", std::uint64_t{2024});
    w.distractor = j.value("distractor", std::string("unknown"));
    w.penalty_per_token = j.value("penalty_per_token", -10.0);
    w.facts = j.at("facts").get<std::vector<std::string>>();
    w.queries.clear();
    for (const auto& q : j.at("queries")) {
      SimQuery sq{q.at("id").get<std::string>(), q.at("required_facts").get<std::vector<std::string>>(),
                  q.at("answer").get<std::string>(), q.value("aliases", std::vector<std::string>{}),
                  q.value("cluster", std::string())};
      if (!w.queries.emplace(sq.id, sq).second) throw DataError("SimWorld: duplicate query id '" + sq.id + "'");
    }
    w.contexts.clear();
    for (const auto& c : j.at("contexts")) {
      SimContext sc{c.at("id").get<std::string>(), c.at("facts").get<std::vector<std::string>>(),
                    c.at("weight").get<double>()};
      if (!w.contexts.emplace(sc.id, sc).second) throw DataError("SimWorld: duplicate context id '" + sc.id + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("SimWorld document: ") + e.what());
  }
}

SimWorld load_simworld(const std::filesystem::path& path) {
  SimWorld w = read_json(path).get<SimWorld>();
  w.validate();
  return w;
}

void save_simworld(const std::filesystem::path& path, const SimWorld& world) {
  write_json(path, json(world));
}

}  // namespace ctxval::gateway
