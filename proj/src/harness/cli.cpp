#include "ctxval/harness/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/forge.hpp"
#include "ctxval/harness/config.hpp"
#include "ctxval/harness/experiments.hpp"
#include "ctxval/harness/scorers.hpp"
#include "ctxval/valuation.hpp"

namespace ctxval::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string input;
  std::string output;
};

void add_common(CLI::App* cmd, CommonArgs& a, const std::string& output_help) {
  cmd->add_option("-c,--config", a.config, "Run configuration file (TOML)")->required();
  cmd->add_option("--set", a.overrides, "Override a config value: section.key=value (repeatable)");
  cmd->add_option("-i,--input", a.input, "Input samples (JSON Lines)");
  cmd->add_option("-o,--output", a.output, output_help);
}

fs::path pick_path(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

/// Valued samples from the output directory when present, else the dataset.
fs::path default_input(const RunConfig& c) {
  const fs::path valued = c.out("valued.jsonl");
  if (fs::exists(valued)) return valued;
  if (c.dataset.empty()) throw ConfigError("run.dataset is not set and no valued samples exist in " + c.output_dir.string());
  return c.dataset;
}

void prepare_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

valuation::DedupPolicy dedup_policy(const RunConfig& c, const Sample& s, csm::EmbeddingProvider* provider) {
  valuation::DedupPolicy policy;
  policy.kind = c.dedup;
  policy.threshold = c.dedup_threshold;
  if (c.dedup == valuation::DedupKind::EmbeddingCosine) {
    if (!provider) throw ConfigError("run.dedup = \"embedding\" needs an [embeddings] backend");
    policy.vectors = provider->embed_pairs(s.query, s.contexts);
  }
  return policy;
}

std::vector<Sample> value_all(gateway::Gateway& gw, const std::vector<Sample>& samples, const RunConfig& c) {
  auto provider = c.dedup == valuation::DedupKind::EmbeddingCosine ? make_embedding_provider(c) : nullptr;
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(valuation::value_sample(gw, s, c.utility, dedup_policy(c, s, provider.get())));
  return out;
}

/// Values samples that arrive without CI.
std::vector<Sample> ensure_valued(gateway::Gateway& gw, std::vector<Sample> samples, const RunConfig& c) {
  const bool missing = std::any_of(samples.begin(), samples.end(), [](const Sample& s) { return !s.ci; });
  if (!missing) return samples;
  fmt::print(stderr, "samples carry no CI values; computing them with the {} utility\n", valuation::to_string(c.utility.kind));
  return value_all(gw, samples, c);
}

void report_gateway(const gateway::Gateway& gw) {
  fmt::print(stderr, "generator: {} evaluations, {} backend requests, {} cache hits\n", gw.evaluations(),
             gw.backend_requests(), gw.cache_hits());
}

int cmd_value(const CommonArgs& a) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, c.dataset);
  if (in.empty()) throw ConfigError("no input: pass --input or set run.dataset");
  const fs::path out = pick_path(a.output, c.out("valued.jsonl"));
  auto gw = gateway::Gateway::create(c.generator);
  const auto valued = value_all(*gw, read_samples(in), c);
  prepare_output(out);
  write_samples(out, valued);
  fmt::print(stderr, "valued {} samples -> {}\n", valued.size(), out.string());
  report_gateway(*gw);
  return 0;
}

int cmd_build_dataset(const CommonArgs& a, const std::string& manifest_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, c.out("valued.jsonl"));
  const fs::path out = pick_path(a.output, c.out("corpus.jsonl"));
  const fs::path manifest = pick_path(manifest_flag, c.out("corpus.manifest.json"));
  const auto samples = read_samples(in);

  std::unique_ptr<gateway::Gateway> gw;
  if (c.forge.recompute) gw = gateway::Gateway::create(c.generator);
  std::map<std::string, Eigen::VectorXd> query_vectors;
  if (c.embeddings.backend == "file") query_vectors = csm::FileEmbeddings(c.embeddings.path).query_vectors();

  const auto corpus = forge::build_corpus(samples, c.forge, gw.get(), c.utility, query_vectors);
  prepare_output(out);
  prepare_output(manifest);
  forge::write_corpus(out.string(), manifest.string(), corpus);
  const auto& counts = corpus.manifest["counts"];
  fmt::print(stderr, "corpus: {} records ({} hard, {} trivial kept of {}, {} interventions) -> {}\n",
             counts["output"].get<std::size_t>(), counts["hard"].get<std::size_t>(),
             counts["trivial_kept"].get<std::size_t>(), counts["trivial"].get<std::size_t>(),
             counts["intervene_high"].get<std::size_t>() + counts["intervene_low"].get<std::size_t>(), out.string());
  if (gw) report_gateway(*gw);
  return 0;
}

std::vector<ScoreRecord> score_samples(Scorer& scorer, const std::vector<Sample>& samples) {
  std::vector<ScoreRecord> out;
  for (const auto& s : samples) {
    ScoreRecord r;
    r.id = s.query.id;
    for (const auto& ctx : s.contexts) r.context_ids.push_back(ctx.id);
    r.scores = scorer.scores(s);
    r.scorer = scorer.name();
    if (r.scores.size() != r.context_ids.size()) {
      throw DataError(scorer.name() + " produced a misaligned score vector for sample '" + s.query.id + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

int cmd_score(const CommonArgs& a, const std::string& scorer_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, default_input(c));
  const fs::path out = pick_path(a.output, c.out("scores.jsonl"));
  auto scorer = make_scorer(scorer_flag.empty() ? c.scorer : scorer_flag, c);
  const auto records = score_samples(*scorer, read_samples(in));
  prepare_output(out);
  write_scores(out, records);
  fmt::print(stderr, "scored {} samples with {} -> {}\n", records.size(), scorer->name(), out.string());
  return 0;
}

int cmd_select(const CommonArgs& a, const std::string& scorer_flag, const std::string& strategy, int k_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, default_input(c));
  const fs::path out = pick_path(a.output, c.out("selections.jsonl"));
  if (strategy != "positive" && strategy != "top-k") throw ConfigError("--strategy must be positive or top-k");
  auto scorer = make_scorer(scorer_flag.empty() ? c.scorer : scorer_flag, c);
  const std::size_t k = k_flag >= 0 ? static_cast<std::size_t>(k_flag) : c.top_k;
  std::vector<json> lines;
  for (const auto& s : read_samples(in)) {
    const auto scores = scorer->scores(s);
    const bool random = scorer->name() == "random";
    SelectionResult r = strategy == "top-k" || random ? valuation::top_k_select(s.contexts, scores, k)
                                                      : valuation::select_positive(s.contexts, scores);
    if (random) r.strategy = SelectionStrategy::Random;
    else if (scorer->name() == "external-score-file") r.strategy = SelectionStrategy::ExternalScore;
    validate_selection(r, s.contexts);
    json j = r;
    j["id"] = s.query.id;
    lines.push_back(std::move(j));
  }
  prepare_output(out);
  write_jsonl(out, lines);
  fmt::print(stderr, "selected contexts for {} samples -> {}\n", lines.size(), out.string());
  return 0;
}

int cmd_curves(const CommonArgs& a, const std::string& scorer_flag, const std::string& order_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, default_input(c));
  const fs::path out = pick_path(a.output, c.out("curves.csv"));
  auto gw = gateway::Gateway::create(c.generator);
  const auto samples = ensure_valued(*gw, read_samples(in), c);
  auto scorer = make_scorer(scorer_flag.empty() ? c.scorer : scorer_flag, c);

  CurveOptions opt;
  opt.order = order_flag.empty() ? c.order : order_from_string(order_flag);
  opt.measure = c.curve_measure;
  opt.metric = c.task_metric;
  opt.utility = c.utility;
  opt.max_samples = c.max_samples;
  std::vector<CurveResult> curves{run_curves(*gw, samples, *scorer, opt)};
  if (scorer->name() != "random") {
    RandomScorer random(c.seed);
    CurveOptions ropt = opt;
    ropt.order = Order::Descending;
    curves.push_back(run_curves(*gw, samples, random, ropt));
  }
  prepare_output(out);
  write_curves_csv(out, curves);
  const auto& main = curves.front();
  fmt::print(stderr, "curves over {} samples -> {} (best k = {}, zero-CI cutoff k* = {})\n", main.samples,
             out.string(), main.argmax_k(), main.k_star ? std::to_string(*main.k_star) : "n/a");
  report_gateway(*gw);
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& scorer_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path in = pick_path(a.input, default_input(c));
  const fs::path out = pick_path(a.output, c.out("eval.csv"));
  auto gw = gateway::Gateway::create(c.generator);
  const auto samples = ensure_valued(*gw, read_samples(in), c);
  auto scorer = make_scorer(scorer_flag.empty() ? c.scorer : scorer_flag, c);
  EvalOptions opt;
  opt.metric = c.task_metric;
  opt.top_k = c.top_k;
  opt.max_samples = c.max_samples;
  opt.seed = c.seed;
  const auto rows = run_eval(*gw, samples, *scorer, opt);
  prepare_output(out);
  write_eval_csv(out, rows, c.task_metric);
  for (const auto& r : rows) {
    fmt::print(stderr, "  {:<24} {} = {:.4f}  (mean kept {:.2f})\n", r.strategy, metrics::to_string(c.task_metric),
               r.score, r.mean_kept);
  }
  report_gateway(*gw);
  return 0;
}

int cmd_spearman(const CommonArgs& a, const std::string& predicted_flag, const std::string& oracle_flag) {
  const RunConfig c = load_run_config(a.config, a.overrides);
  const fs::path predicted =
      pick_path(predicted_flag, c.scores_path.empty() ? c.out("scores.jsonl") : c.scores_path);
  const fs::path oracle = pick_path(oracle_flag, c.out("valued.jsonl"));
  const fs::path out = pick_path(a.output, c.out("spearman.csv"));
  const auto rep = run_spearman(read_scores(predicted), read_samples(oracle));
  prepare_output(out);
  write_spearman_csv(out, rep);
  fmt::print(stderr, "spearman: per-sample mean {} over {} samples ({} skipped), pooled {} -> {}\n",
             rep.mean_rho ? fmt::format("{:.4f}", *rep.mean_rho) : "n/a", rep.samples_used, rep.samples_skipped,
             rep.pooled_rho ? fmt::format("{:.4f}", *rep.pooled_rho) : "n/a", out.string());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Contextual influence valuation and context selection for RAG", "ctxval"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string scorer, order, strategy = "positive", manifest, predicted, oracle;
  int k = -1;

  auto* value = app.add_subcommand("value", "Compute leave-one-out CI values for every sample");
  add_common(value, common, "Valued samples (JSON Lines)");
  auto* build = app.add_subcommand("build-dataset", "Build the surrogate training corpus from valued samples");
  add_common(build, common, "Corpus (JSON Lines)");
  build->add_option("--manifest", manifest, "Corpus manifest (JSON)");
  auto* score = app.add_subcommand("score", "Write per-context scores from a scorer");
  add_common(score, common, "Scores (JSON Lines)");
  score->add_option("--scorer", scorer, "oracle-ci | csm | external-score-file | random");
  auto* select = app.add_subcommand("select", "Select contexts per sample");
  add_common(select, common, "Selections (JSON Lines)");
  select->add_option("--scorer", scorer, "oracle-ci | csm | external-score-file | random");
  select->add_option("--strategy", strategy, "positive | top-k");
  select->add_option("-k", k, "k for top-k (default run.top_k)");
  auto* curves = app.add_subcommand("curves", "Add-high / add-poor selection curves");
  add_common(curves, common, "Curves (CSV)");
  curves->add_option("--scorer", scorer, "oracle-ci | csm | external-score-file | random");
  curves->add_option("--order", order, "descending | ascending");
  auto* eval = app.add_subcommand("eval", "Task metric per selection strategy");
  add_common(eval, common, "Table (CSV)");
  eval->add_option("--scorer", scorer, "oracle-ci | csm | external-score-file | random");
  auto* spearman = app.add_subcommand("spearman", "Rank correlation of predicted scores with oracle CI");
  add_common(spearman, common, "Report (CSV)");
  spearman->add_option("--predicted", predicted, "Predicted scores (JSON Lines)");
  spearman->add_option("--oracle", oracle, "Valued samples (JSON Lines)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (value->parsed()) return cmd_value(common);
    if (build->parsed()) return cmd_build_dataset(common, manifest);
    if (score->parsed()) return cmd_score(common, scorer);
    if (select->parsed()) return cmd_select(common, scorer, strategy, k);
    if (curves->parsed()) return cmd_curves(common, scorer, order);
    if (eval->parsed()) return cmd_eval(common, scorer);
    if (spearman->parsed()) return cmd_spearman(common, predicted, oracle);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const GatewayError& e) {
    fmt::print(stderr, "generator error: {}\n", e.what());
    return 3;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 4;
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace ctxval::harness
