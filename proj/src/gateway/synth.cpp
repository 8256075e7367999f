#include <fmt/format.h>

#include "ctxval/core/error.hpp"
#include "ctxval/gateway/simworld.hpp"
#include "ctxval/util/rng.hpp"

namespace ctxval::gateway {

namespace {

constexpr double kWeightUnit = 1.0 / 64.0;

enum class Role { Support, Poison, Noise };

std::string_view role_name(Role r) {
  switch (r) {
    case Role::Support: return "support";
    case Role::Poison: return "poison";
    case Role::Noise: return "noise";
  }
  return "noise";
}

struct Planted {
  Role role;
  std::string fact;
  double weight;
};

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

double draw_weight(Rng& rng, int lo, int hi) {
  return static_cast<double>(draw_between(rng, static_cast<std::size_t>(lo), static_cast<std::size_t>(hi))) *
         kWeightUnit;
}

std::string other_fact(Rng& rng, std::size_t self, const std::vector<std::vector<std::string>>& facts_by_sample) {
  std::size_t j = rng.below(facts_by_sample.size() - 1);
  if (j >= self) ++j;
  const auto& pool = facts_by_sample[j];
  return pool[rng.below(pool.size())];
}

std::vector<Planted> plant_additive(Rng& rng, std::size_t n, const std::vector<std::string>& own,
                                    std::size_t self, const std::vector<std::vector<std::string>>& facts_by_sample) {
  std::vector<Planted> out;
  out.push_back({Role::Support, own[0], draw_weight(rng, 1, 64)});
  while (out.size() < n) {
    const double u = rng.uniform();
    if (u < 0.35) {
      out.push_back({Role::Support, own[0], draw_weight(rng, 1, 64)});
    } else if (u < 0.65) {
      out.push_back({Role::Poison, own[0], -draw_weight(rng, 1, 64)});
    } else {
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      out.push_back({Role::Noise, other_fact(rng, self, facts_by_sample), sign * draw_weight(rng, 1, 64)});
    }
  }
  return out;
}

std::vector<Planted> plant_threshold(Rng& rng, std::size_t min_n, std::size_t max_n, const std::vector<std::string>& own,
                                     std::size_t self, const std::vector<std::vector<std::string>>& facts_by_sample) {
  std::vector<Planted> out;
  int support_units = 0;
  for (const auto& f : own) {
    const int units = static_cast<int>(draw_between(rng, 32, 64));
    support_units += units;
    out.push_back({Role::Support, f, units * kWeightUnit});
  }
  // Total poison magnitude stays strictly below total support.
  int budget = support_units - 1;
  const std::size_t poisons = rng.below(3);
  for (std::size_t p = 0; p < poisons && budget > 0; ++p) {
    const int units = static_cast<int>(draw_between(rng, 1, static_cast<std::size_t>(std::min(budget, 48))));
    budget -= units;
    out.push_back({Role::Poison, own[rng.below(own.size())], -units * kWeightUnit});
  }
  const std::size_t lo = std::max(min_n, out.size() + 2);
  const std::size_t n = draw_between(rng, lo, std::max(lo, max_n));
  while (out.size() < n) {
    out.push_back({Role::Noise, other_fact(rng, self, facts_by_sample), draw_weight(rng, 1, 64)});
  }
  return out;
}

}  // namespace

SimDataset synthesize_simworld(const SimRecipe& recipe) {
  if (recipe.samples < 2) throw ConfigError("SimWorld recipe needs at least two samples");
  if (recipe.min_contexts < 1 || recipe.min_contexts > recipe.max_contexts) {
    throw ConfigError("SimWorld recipe needs 1 <= min_contexts <= max_contexts");
  }
  Rng rng(recipe.seed);
  SimDataset out;
  SimWorld& world = out.world;
  world.mode = recipe.mode;
  world.seed = recipe.seed;

  std::vector<std::vector<std::string>> facts_by_sample(recipe.samples);
  for (std::size_t i = 0; i < recipe.samples; ++i) {
    const std::size_t count = recipe.mode == UtilityMode::Threshold ? 1 + rng.below(2) : 1;
    for (std::size_t k = 0; k < count; ++k) {
      facts_by_sample[i].push_back(fmt::format("f{:04d}{}", i, static_cast<char>('a' + k)));
      world.facts.push_back(facts_by_sample[i].back());
    }
  }

  for (std::size_t i = 0; i < recipe.samples; ++i) {
    const std::string qid = fmt::format("q{:04d}", i);
    const std::string cluster = fmt::format("topic-{:04d}", i);
    SimQuery q{qid, facts_by_sample[i], fmt::format("Answer {}", i), {fmt::format("A{}", i)}, cluster};
    world.queries.emplace(qid, q);

    std::vector<Planted> planted;
    if (recipe.mode == UtilityMode::Additive) {
      const std::size_t n = draw_between(rng, recipe.min_contexts, recipe.max_contexts);
      planted = plant_additive(rng, n, facts_by_sample[i], i, facts_by_sample);
    } else {
      planted = plant_threshold(rng, recipe.min_contexts, recipe.max_contexts, facts_by_sample[i], i, facts_by_sample);
    }
    rng.shuffle(std::span<Planted>(planted));

    Sample s;
    s.query = {qid, fmt::format("Which value does record {} hold?", i)};
    s.answers.answers = {q.answer, q.aliases.front()};
    nlohmann::json roles = nlohmann::json::array();
    for (std::size_t k = 0; k < planted.size(); ++k) {
      const auto& p = planted[k];
      const std::string cid = fmt::format("{}-c{:02d}", qid, k);
      world.contexts.emplace(cid, SimContext{cid, {p.fact}, p.weight});
      s.contexts.push_back(Context{cid, fmt::format("Passage {} mentions {} ({} note).", cid, p.fact, role_name(p.role)),
                                   std::string(role_name(p.role))});
      roles.push_back(role_name(p.role));
    }
    s.meta = {{"cluster", cluster}, {"roles", roles}};
    out.samples.push_back(std::move(s));
  }
  world.validate();
  return out;
}

}  // namespace ctxval::gateway
