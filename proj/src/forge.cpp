#include "ctxval/forge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/util/rng.hpp"

namespace ctxval::forge {

using nlohmann::json;

RarityStats rarity(std::span<const double> ci, double alpha) {
  if (ci.empty()) throw DataError("rarity of an empty CI vector is undefined");
  const double n = static_cast<double>(ci.size());
  const double mu = std::accumulate(ci.begin(), ci.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : ci) ss += (x - mu) * (x - mu);
  const double sigma = std::sqrt(ss / n);
  return {mu, sigma, alpha, mu + alpha * sigma};
}

std::string_view to_string(SampleCategory c) {
  switch (c) {
    case SampleCategory::Trivial: return "trivial";
    case SampleCategory::Hard: return "hard";
    case SampleCategory::Neither: return "neither";
  }
  return "neither";
}

SampleCategory sample_category_from_string(std::string_view s) {
  if (s == "trivial") return SampleCategory::Trivial;
  if (s == "hard") return SampleCategory::Hard;
  if (s == "neither") return SampleCategory::Neither;
  throw DataError("unknown sample category '" + std::string(s) + "'");
}

SampleCategory categorize(double r, double delta1, double delta2) {
  if (delta1 > delta2) throw ConfigError("categorize needs delta1 <= delta2");
  if (r < delta1) return SampleCategory::Trivial;
  if (r > delta2) return SampleCategory::Hard;
  return SampleCategory::Neither;
}

std::vector<Sample> downsample(const std::vector<Sample>& trivial, double keep_rate, std::uint64_t seed) {
  if (!(keep_rate >= 0.0 && keep_rate <= 1.0)) throw ConfigError("keep_rate must lie in [0, 1]");
  Rng rng(seed);
  std::vector<Sample> kept;
  for (const auto& s : trivial) {
    if (rng.bernoulli(keep_rate)) kept.push_back(s);
  }
  return kept;
}

void check_donor(const Sample& host, const Sample& donor, const InterventionParams& params) {
  if (host.query.id == donor.query.id) {
    throw DataError("donor sample '" + donor.query.id + "' has the host's query id");
  }
  if (params.host_query_vector && params.donor_query_vector) {
    const auto& a = *params.host_query_vector;
    const auto& b = *params.donor_query_vector;
    if (a.size() != b.size()) throw DataError("query vectors differ in dimension");
    const double denom = a.norm() * b.norm();
    const double cosine = denom > 0.0 ? a.dot(b) / denom : 0.0;
    if (!(cosine < params.distinct_cosine)) {
      throw DataError("donor query '" + donor.query.id + "' is not distinct from '" + host.query.id +
                      "' (cosine " + std::to_string(cosine) + ")");
    }
    return;
  }
  const auto cluster = [](const Sample& s) -> std::optional<std::string> {
    auto it = s.meta.find("cluster");
    if (it == s.meta.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  const auto hc = cluster(host);
  const auto dc = cluster(donor);
  if (!hc || !dc) {
    throw DataError("cannot establish that '" + donor.query.id + "' is distinct from '" + host.query.id +
                    "': no query vectors and no meta.cluster tags");
  }
  if (*hc == *dc) {
    throw DataError("donor query '" + donor.query.id + "' shares cluster '" + *hc + "' with '" + host.query.id + "'");
  }
}

std::vector<std::size_t> high_ci_indices(const Sample& host, double gamma) {
  if (!host.ci) throw DataError("sample '" + host.query.id + "' has no CI values");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < host.ci->size(); ++i) {
    if ((*host.ci)[i] > gamma) out.push_back(i);
  }
  return out;
}

ContextList sample_donor_contexts(const Sample& donor, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  auto idx = rng.sample_indices(donor.contexts.size(), std::min(count, donor.contexts.size()));
  std::sort(idx.begin(), idx.end());
  ContextList out;
  for (std::size_t i : idx) out.push_back(donor.contexts[i]);
  return out;
}

namespace {

Sample recombine(const Sample& host, const Sample& donor, const Query& query, const AnswerSet& answers,
                 const InterventionParams& params, std::string_view kind) {
  check_donor(host, donor, params);
  const auto high = high_ci_indices(host, params.gamma);
  if (high.empty()) {
    throw DataError("sample '" + host.query.id + "' has no context with CI above gamma = " +
                    std::to_string(params.gamma));
  }
  Sample out;
  out.query = query;
  out.answers = answers;
  std::set<std::string> ids;
  for (std::size_t i : high) {
    out.contexts.push_back(host.contexts[i]);
    ids.insert(host.contexts[i].id);
  }
  for (auto& c : sample_donor_contexts(donor, params.donor_subset_size, params.seed)) {
    if (!ids.insert(c.id).second) {
      throw DataError("context id '" + c.id + "' appears in both '" + host.query.id + "' and '" + donor.query.id + "'");
    }
    out.contexts.push_back(std::move(c));
  }
  out.meta = json{{"intervention", kind}, {"host", host.query.id}, {"donor", donor.query.id}};
  if (auto it = (kind == "high" ? host : donor).meta.find("cluster");
      it != (kind == "high" ? host : donor).meta.end()) {
    out.meta["cluster"] = *it;
  }
  if (params.recompute) out = valuation::value_sample(*params.recompute, out, params.utility);
  return out;
}

}  // namespace

Sample intervene_high(const Sample& host, const Sample& donor, const InterventionParams& params) {
  return recombine(host, donor, host.query, host.answers, params, "high");
}

Sample intervene_low(const Sample& host, const Sample& donor, const InterventionParams& params) {
  return recombine(host, donor, donor.query, donor.answers, params, "low");
}

std::size_t FrequencyTable::bin_of(double r) const {
  const std::size_t bins = counts.size();
  if (hi <= lo) return 0;
  const double pos = (r - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(pos > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(pos), bins - 1);
}

double FrequencyTable::p(double r) const {
  return static_cast<double>(counts[bin_of(r)]) / static_cast<double>(total);
}

FrequencyTable empirical_freq(std::span<const double> rarity_values, std::size_t bin_count) {
  if (rarity_values.empty()) throw DataError("empirical_freq needs at least one value");
  if (bin_count < 1) throw ConfigError("bin_count must be >= 1");
  FrequencyTable t;
  const auto [mn, mx] = std::minmax_element(rarity_values.begin(), rarity_values.end());
  t.lo = *mn;
  t.hi = *mx;
  t.counts.assign(bin_count, 0);
  t.total = rarity_values.size();
  for (std::size_t b = 0; b <= bin_count; ++b) {
    t.edges.push_back(t.lo + (t.hi - t.lo) * static_cast<double>(b) / static_cast<double>(bin_count));
  }
  for (double r : rarity_values) ++t.counts[t.bin_of(r)];
  return t;
}

std::vector<ContrastivePairSet> contrastive_pairs(std::span<const double> ci, double epsilon1, double epsilon2,
                                                  std::size_t max_negatives, std::uint64_t seed) {
  if (epsilon1 > epsilon2) throw ConfigError("contrastive pairs need epsilon1 <= epsilon2");
  Rng rng(seed);
  std::vector<ContrastivePairSet> out;
  for (std::size_t a = 0; a < ci.size(); ++a) {
    std::optional<std::size_t> positive;
    double best_gap = 0.0;
    std::vector<std::size_t> negatives;
    for (std::size_t j = 0; j < ci.size(); ++j) {
      if (j == a) continue;
      const double gap = std::abs(ci[a] - ci[j]);
      if (gap < epsilon1 && (!positive || gap < best_gap)) {
        positive = j;
        best_gap = gap;
      }
      if (gap > epsilon2) negatives.push_back(j);
    }
    if (!positive || negatives.empty()) continue;
    if (max_negatives > 0 && negatives.size() > max_negatives) {
      auto pick = rng.sample_indices(negatives.size(), max_negatives);
      std::sort(pick.begin(), pick.end());
      std::vector<std::size_t> capped;
      for (std::size_t k : pick) capped.push_back(negatives[k]);
      negatives = std::move(capped);
    }
    out.push_back({a, *positive, std::move(negatives), epsilon1, epsilon2});
  }
  return out;
}

void ForgeConfig::validate() const {
  if (delta1 > delta2) throw ConfigError("forge.delta1 must be <= forge.delta2");
  if (!(keep_rate >= 0.0 && keep_rate <= 1.0)) throw ConfigError("forge.keep_rate must lie in [0, 1]");
  if (epsilon1 > epsilon2) throw ConfigError("forge.epsilon1 must be <= forge.epsilon2");
  if (bin_count < 1) throw ConfigError("forge.bin_count must be >= 1");
  if (!(gamma > 0.0)) throw ConfigError("forge.gamma must be > 0");
  if (donor_subset_size < 1) throw ConfigError("forge.donor_subset_size must be >= 1");
}

namespace {

json rarity_json(const RarityStats& r) {
  return json{{"mu", r.mu}, {"sigma", r.sigma}, {"alpha", r.alpha}, {"r", r.r}};
}

json pairs_json(const std::vector<ContrastivePairSet>& pairs) {
  json out = json::array();
  for (const auto& p : pairs) out.push_back({{"anchor", p.anchor}, {"positive", p.positive}, {"negatives", p.negatives}});
  return out;
}

}  // namespace

Corpus build_corpus(const std::vector<Sample>& valued, const ForgeConfig& config, gateway::Gateway* recompute,
                    const valuation::UtilitySpec& utility, const std::map<std::string, Eigen::VectorXd>& query_vectors) {
  config.validate();
  if (config.recompute && recompute == nullptr) {
    throw ConfigError("forge.recompute is set but no generator is available");
  }
  for (const auto& s : valued) {
    if (!s.ci) throw DataError("sample '" + s.query.id + "' has no CI values; run `value` first");
  }

  // Dataset-wide scaling into [-1, 1].
  std::vector<CIVector> raw;
  for (const auto& s : valued) raw.push_back(*s.ci);
  double max_abs = 0.0;
  for (const auto& v : raw) {
    for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  }
  const auto scaled = config.scale ? valuation::scale_ci(raw) : raw;
  std::vector<Sample> samples = valued;
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].ci = scaled[i];

  auto lookup_vector = [&](const std::string& qid) -> std::optional<Eigen::VectorXd> {
    auto it = query_vectors.find(qid);
    return it == query_vectors.end() ? std::nullopt : std::optional<Eigen::VectorXd>(it->second);
  };

  std::size_t n_trivial = 0, n_hard = 0, n_neither = 0, n_empty = 0, n_trivial_kept = 0;
  std::size_t n_high = 0, n_low = 0, n_no_donor = 0;
  json interventions = json::array();
  std::vector<CorpusRecord> records;
  Rng keep_rng(derive_seed(config.seed, "downsample"));

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.contexts.empty()) {
      ++n_empty;
      continue;
    }
    const RarityStats rs = rarity(*s.ci, config.alpha);
    const SampleCategory cat = categorize(rs.r, config.delta1, config.delta2);
    if (cat == SampleCategory::Trivial) {
      ++n_trivial;
      // Same draw sequence as downsample() over the trivial samples in order.
      if (!keep_rng.bernoulli(config.keep_rate)) continue;
      ++n_trivial_kept;
    } else if (cat == SampleCategory::Hard) {
      ++n_hard;
    } else {
      ++n_neither;
    }
    CorpusRecord rec;
    rec.record_id = s.query.id;
    rec.sample = s;
    rec.category = cat;
    rec.rarity = rs;
    rec.provenance = json{{"kind", "original"}, {"sample", s.query.id}};
    records.push_back(std::move(rec));
    if (cat != SampleCategory::Hard) continue;

    InterventionParams params;
    params.gamma = config.gamma;
    params.donor_subset_size = config.donor_subset_size;
    params.distinct_cosine = config.distinct_cosine;
    params.host_query_vector = lookup_vector(s.query.id);
    params.recompute = config.recompute ? recompute : nullptr;
    params.utility = utility;
    if (high_ci_indices(s, config.gamma).empty()) {
      ++n_no_donor;
      continue;
    }

    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (j == i || samples[j].contexts.empty()) continue;
      InterventionParams probe = params;
      probe.donor_query_vector = lookup_vector(samples[j].query.id);
      try {
        check_donor(s, samples[j], probe);
        candidates.push_back(j);
      } catch (const DataError&) {
      }
    }
    if (candidates.empty()) {
      ++n_no_donor;
      continue;
    }
    Rng donor_rng(derive_seed(config.seed, "donor:" + s.query.id));
    const Sample& donor = samples[candidates[donor_rng.below(candidates.size())]];
    params.donor_query_vector = lookup_vector(donor.query.id);

    const std::vector<std::string_view> kinds =
        config.intervene_low ? std::vector<std::string_view>{"high", "low"} : std::vector<std::string_view>{"high"};
    for (auto kind : kinds) {
      params.seed = derive_seed(config.seed, std::string(kind) + ":" + s.query.id);
      Sample synth = kind == "high" ? intervene_high(s, donor, params) : intervene_low(s, donor, params);
      CorpusRecord rec2;
      rec2.record_id = s.query.id + "/" + std::string(kind) + "/" + donor.query.id;
      std::vector<std::string> donor_ids;
      for (const auto& c : synth.contexts) {
        if (std::none_of(s.contexts.begin(), s.contexts.end(), [&](const Context& h) { return h.id == c.id; })) {
          donor_ids.push_back(c.id);
        }
      }
      rec2.provenance = json{{"kind", "intervene-" + std::string(kind)},
                             {"host", s.query.id},
                             {"donor", donor.query.id},
                             {"seed", params.seed},
                             {"donor_context_ids", donor_ids}};
      if (synth.ci) {
        if (config.scale && max_abs > 0.0) {
          for (double& x : *synth.ci) x /= max_abs;
        }
        rec2.rarity = rarity(*synth.ci, config.alpha);
        rec2.category = categorize(rec2.rarity.r, config.delta1, config.delta2);
      } else {
        rec2.rarity = rs;
        rec2.category = cat;
        for (std::size_t k : high_ci_indices(s, config.gamma)) rec2.target_ids.push_back(s.contexts[k].id);
      }
      rec2.sample = std::move(synth);
      json entry{{"record", rec2.record_id}};
      entry.update(rec2.provenance);
      interventions.push_back(std::move(entry));
      (kind == "high" ? n_high : n_low) += 1;
      records.push_back(std::move(rec2));
    }
  }

  Corpus corpus;
  json freq_json = nullptr;
  if (!records.empty()) {
    std::vector<double> rs;
    for (const auto& r : records) rs.push_back(r.rarity.r);
    const FrequencyTable table = empirical_freq(rs, config.bin_count);
    for (auto& r : records) r.p = table.p(r.rarity.r);
    std::vector<double> probs;
    for (std::size_t c : table.counts) probs.push_back(static_cast<double>(c) / static_cast<double>(table.total));
    freq_json = json{{"edges", table.edges}, {"counts", table.counts}, {"probabilities", probs}, {"total", table.total}};
  }
  for (auto& r : records) {
    if (r.category == SampleCategory::Hard && r.sample.ci) {
      r.pairs = contrastive_pairs(*r.sample.ci, config.epsilon1, config.epsilon2, config.max_negatives,
                                  derive_seed(config.seed, "pairs:" + r.record_id));
    }
  }

  corpus.manifest = json{
      {"format", "ctxval-forge-corpus"},
      {"version", 1},
      {"config",
       {{"alpha", config.alpha},
        {"delta1", config.delta1},
        {"delta2", config.delta2},
        {"keep_rate", config.keep_rate},
        {"gamma", config.gamma},
        {"epsilon1", config.epsilon1},
        {"epsilon2", config.epsilon2},
        {"max_negatives", config.max_negatives},
        {"bin_count", config.bin_count},
        {"donor_subset_size", config.donor_subset_size},
        {"distinct_cosine", config.distinct_cosine},
        {"scale", config.scale},
        {"recompute", config.recompute},
        {"intervene_low", config.intervene_low},
        {"seed", config.seed},
        {"utility", valuation::to_string(utility.kind)}}},
      {"scale", {{"applied", config.scale}, {"max_abs_ci", max_abs}}},
      {"counts",
       {{"input", valued.size()},
        {"empty", n_empty},
        {"trivial", n_trivial},
        {"trivial_kept", n_trivial_kept},
        {"hard", n_hard},
        {"neither", n_neither},
        {"intervene_high", n_high},
        {"intervene_low", n_low},
        {"hard_without_intervention", n_no_donor},
        {"output", records.size()}}},
      {"frequency_table", freq_json},
      {"interventions", interventions}};
  corpus.records = std::move(records);
  return corpus;
}

json to_json(const CorpusRecord& record) {
  json j = record.sample;
  json forge{{"record", record.record_id},
             {"category", to_string(record.category)},
             {"rarity", rarity_json(record.rarity)},
             {"p", record.p},
             {"provenance", record.provenance},
             {"pairs", pairs_json(record.pairs)}};
  if (!record.target_ids.empty()) {
    const bool low = record.provenance.value("kind", "") == "intervene-low";
    forge[low ? "low_ids" : "positive_ids"] = record.target_ids;
  }
  j["forge"] = std::move(forge);
  return j;
}

void write_corpus(const std::string& corpus_path, const std::string& manifest_path, const Corpus& corpus) {
  std::vector<json> lines;
  lines.reserve(corpus.records.size());
  for (const auto& r : corpus.records) lines.push_back(to_json(r));
  write_jsonl(corpus_path, lines);
  write_json(manifest_path, corpus.manifest);
}

}  // namespace ctxval::forge
