#include "ctxval/harness/experiments.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/util/parallel.hpp"

namespace ctxval::harness {

std::vector<std::size_t> rank_contexts(const std::vector<double>& scores, Order order) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (order == Order::Descending) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  }
  return idx;
}

std::size_t CurveResult::argmax_k() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].score > points[best].score) best = i;
  }
  return points.empty() ? 0 : points[best].k;
}

namespace {

std::vector<double> checked_scores(Scorer& scorer, const Sample& s) {
  auto v = scorer.scores(s);
  if (v.size() != s.contexts.size()) {
    throw DataError(scorer.name() + " produced " + std::to_string(v.size()) + " scores for sample '" + s.query.id +
                    "' with " + std::to_string(s.contexts.size()) + " contexts");
  }
  return v;
}

/// Contexts at `indices`, in list order.
ContextList pick(const ContextList& contexts, std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  ContextList out;
  for (std::size_t i : indices) out.push_back(contexts[i]);
  return out;
}

double task_score(gateway::Gateway& gw, const Sample& s, const ContextList& subset, metrics::MetricKind metric) {
  return metrics::score(metric, gw.generate(s.query, subset).text, s.answers);
}

std::size_t worker_count(const gateway::Gateway& gw) { return static_cast<std::size_t>(gw.config().concurrency); }

std::string fmt_real(double v) { return fmt::format("{:.6f}", v); }

}  // namespace

CurveResult run_curves(gateway::Gateway& gw, const std::vector<Sample>& samples, Scorer& scorer,
                       const CurveOptions& options) {
  if (options.measure != "metric" && options.measure != "utility") {
    throw ConfigError("curve measure must be metric or utility");
  }
  const std::size_t count = std::min(samples.size(), options.max_samples);
  std::vector<std::vector<std::size_t>> ranked(count);
  for (std::size_t i = 0; i < count; ++i) ranked[i] = rank_contexts(checked_scores(scorer, samples[i]), options.order);

  std::vector<std::vector<double>> values(count);
  parallel_for(count, worker_count(gw), [&](std::size_t i) {
    const Sample& s = samples[i];
    const std::size_t n = s.contexts.size();
    values[i].resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
      const ContextList prefix =
          pick(s.contexts, std::vector<std::size_t>(ranked[i].begin(), ranked[i].begin() + static_cast<long>(k)));
      values[i][k] = options.measure == "utility" ? valuation::utility(gw, s.query, s.answers, prefix, options.utility)
                                                  : task_score(gw, s, prefix, options.metric);
    }
  });

  CurveResult r;
  r.scorer = scorer.name();
  r.order = options.order;
  r.samples = count;
  std::size_t max_n = 0;
  for (std::size_t i = 0; i < count; ++i) max_n = std::max(max_n, samples[i].contexts.size());
  bool any_ci = false;
  for (std::size_t k = 0; k <= max_n && count > 0; ++k) {
    CurvePoint p;
    p.k = k;
    double total = 0.0, ci_total = 0.0;
    std::size_t ci_count = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& s = samples[i];
      total += values[i][std::min(k, s.contexts.size())];
      if (k >= 1 && k <= s.contexts.size() && s.ci) {
        ci_total += (*s.ci)[ranked[i][k - 1]];
        ++ci_count;
      }
    }
    p.score = total / static_cast<double>(count);
    if (ci_count > 0) {
      p.mean_added_ci = ci_total / static_cast<double>(ci_count);
      any_ci = true;
    }
    r.points.push_back(p);
  }
  if (any_ci) {
    r.k_star = max_n;
    for (const auto& p : r.points) {
      if (p.k >= 1 && !(p.mean_added_ci && *p.mean_added_ci > 0.0)) {
        r.k_star = p.k - 1;
        break;
      }
    }
  }
  return r;
}

std::vector<EvalRow> run_eval(gateway::Gateway& gw, const std::vector<Sample>& samples, Scorer& scorer,
                              const EvalOptions& options) {
  const std::size_t count = std::min(samples.size(), options.max_samples);
  for (std::size_t i = 0; i < count; ++i) {
    if (!samples[i].ci) throw DataError("eval needs CI values; sample '" + samples[i].query.id + "' has none");
  }
  RandomScorer random(options.seed);
  const std::string k = std::to_string(options.top_k);
  const std::vector<std::string> names{"vanilla", "keep-all", "oracle-positive-ci", "oracle-keep-poison",
                                       scorer.name() + "-top-" + k, scorer.name() + "-positive", "random-top-" + k};

  // Kept index sets per strategy and sample.
  std::vector<std::vector<std::vector<std::size_t>>> kept(names.size(), std::vector<std::vector<std::size_t>>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = samples[i];
    const std::size_t n = s.contexts.size();
    const auto& ci = *s.ci;
    const auto sc = checked_scores(scorer, s);
    const auto rnd = random.scores(s);
    for (std::size_t j = 0; j < n; ++j) {
      kept[1][i].push_back(j);
      if (ci[j] > 0.0) kept[2][i].push_back(j);
      if (ci[j] < 0.0) kept[3][i].push_back(j);
      if (sc[j] > 0.0) kept[5][i].push_back(j);
    }
    auto top = rank_contexts(sc, Order::Descending);
    top.resize(std::min(options.top_k, n));
    kept[4][i] = top;
    auto rtop = rank_contexts(rnd, Order::Descending);
    rtop.resize(std::min(options.top_k, n));
    kept[6][i] = rtop;
  }

  std::vector<std::vector<double>> values(names.size(), std::vector<double>(count, 0.0));
  parallel_for(count * names.size(), worker_count(gw), [&](std::size_t job) {
    const std::size_t row = job / count;
    const std::size_t i = job % count;
    values[row][i] = task_score(gw, samples[i], pick(samples[i].contexts, kept[row][i]), options.metric);
  });

  std::vector<EvalRow> rows;
  for (std::size_t row = 0; row < names.size(); ++row) {
    EvalRow r;
    r.strategy = names[row];
    r.samples = count;
    double total = 0.0, kept_total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      total += values[row][i];
      kept_total += static_cast<double>(kept[row][i].size());
    }
    if (count > 0) {
      r.score = total / static_cast<double>(count);
      r.mean_kept = kept_total / static_cast<double>(count);
    }
    rows.push_back(r);
  }
  return rows;
}

SpearmanReport run_spearman(const std::vector<ScoreRecord>& predicted, const std::vector<Sample>& oracle) {
  std::map<std::string, const ScoreRecord*> by_id;
  for (const auto& r : predicted) {
    if (!by_id.emplace(r.id, &r).second) throw DataError("predicted scores repeat sample '" + r.id + "'");
  }
  if (by_id.size() != oracle.size()) {
    throw DataError("predicted scores cover " + std::to_string(by_id.size()) + " samples, oracle has " +
                    std::to_string(oracle.size()));
  }
  SpearmanReport rep;
  double rho_total = 0.0;
  std::vector<double> all_pred, all_ci;
  for (const auto& s : oracle) {
    if (!s.ci) throw DataError("oracle sample '" + s.query.id + "' has no CI values");
    auto it = by_id.find(s.query.id);
    if (it == by_id.end()) throw DataError("predicted scores have no record for sample '" + s.query.id + "'");
    const auto pred = align_scores(s, *it->second);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_ci.insert(all_ci.end(), s.ci->begin(), s.ci->end());
    try {
      rho_total += metrics::spearman(pred, *s.ci);
      ++rep.samples_used;
    } catch (const DataError&) {
      ++rep.samples_skipped;
    }
  }
  rep.pairs = all_pred.size();
  if (rep.samples_used > 0) rep.mean_rho = rho_total / static_cast<double>(rep.samples_used);
  try {
    rep.pooled_rho = metrics::spearman(all_pred, all_ci);
  } catch (const DataError&) {
  }
  return rep;
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurveResult>& curves) {
  std::string out = "scorer,order,k,score,mean_added_ci,is_cutoff\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out += fmt::format("{},{},{},{},{},{}\n", c.scorer, to_string(c.order), p.k, fmt_real(p.score),
                         p.mean_added_ci ? fmt_real(*p.mean_added_ci) : "", c.k_star && *c.k_star == p.k ? 1 : 0);
    }
  }
  write_file_atomic(path, out);
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows, metrics::MetricKind metric) {
  std::string out = "strategy,metric,score,mean_kept,samples\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{}\n", r.strategy, metrics::to_string(metric), fmt_real(r.score),
                       fmt_real(r.mean_kept), r.samples);
  }
  write_file_atomic(path, out);
}

void write_spearman_csv(const std::filesystem::path& path, const SpearmanReport& rep) {
  std::string out = "variant,rho,samples_used,samples_skipped,pairs\n";
  out += fmt::format("per-sample-mean,{},{},{},{}\n", rep.mean_rho ? fmt_real(*rep.mean_rho) : "", rep.samples_used,
                     rep.samples_skipped, rep.pairs);
  out += fmt::format("pooled,{},{},{},{}\n", rep.pooled_rho ? fmt_real(*rep.pooled_rho) : "", rep.samples_used,
                     rep.samples_skipped, rep.pairs);
  write_file_atomic(path, out);
}

}  // namespace ctxval::harness
