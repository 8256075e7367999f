#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/gateway/gateway.hpp"
#include "ctxval/harness/cli.hpp"
#include "ctxval/harness/config.hpp"
#include "ctxval/harness/experiments.hpp"
#include "ctxval/harness/scorers.hpp"
#include "ctxval/valuation.hpp"

using namespace ctxval;
using namespace ctxval::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "ctxval_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::unique_ptr<gateway::Gateway> sim_gateway(const gateway::SimWorld& w) {
  gateway::GeneratorConfig c;
  c.world_path = "unused.json";
  return std::make_unique<gateway::Gateway>(c, std::make_unique<gateway::SimulatedBackend>(w));
}

std::vector<Sample> valued(const gateway::SimDataset& ds, gateway::Gateway& gw) {
  std::vector<Sample> out;
  for (const auto& s : ds.samples) out.push_back(valuation::value_sample(gw, s, {}));
  return out;
}

/// A run directory holding a synthesized world, its samples and a config.
fs::path make_run_dir(const std::string& name, gateway::UtilityMode mode, std::size_t samples) {
  const fs::path dir = fresh_dir(name);
  const auto ds = gateway::synthesize_simworld({mode, samples, 2, 8, 2024});
  gateway::save_simworld(dir / "world.json", ds.world);
  write_samples(dir / "samples.jsonl", ds.samples);
  write_text(dir / "config.toml",
             "[run]\n"
             "dataset = \"samples.jsonl\"\n"
             "output_dir = \"out\"\n"
             "[generator]\n"
             "backend = \"simulated\"\n"
             "world = \"world.json\"\n");
  return dir;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ctxval");
  return run_cli(args);
}

}  // namespace

TEST_CASE("TOML subset parser") {
  const auto doc = parse_toml(
      "# comment\n"
      "top = 1\n"
      "[run]\n"
      "name = \"a \\\"b\\\"\"  # trailing\n"
      "raw = 'c:\\path'\n"
      "n = 1_000\n"
      "x = -2.5e-1\n"
      "on = true\n"
      "off = false\n"
      "list = [1, \"two\", 3.0, [true]]\n"
      "\"quoted key\" = 0\n"
      "\n"
      "[ other ]\n"
      "empty = []\n");
  CHECK(doc[""]["top"] == 1);
  CHECK(doc["run"]["name"] == "a \"b\"");
  CHECK(doc["run"]["raw"] == "c:\\path");
  CHECK(doc["run"]["n"] == 1000);
  CHECK(doc["run"]["x"].get<double>() == -0.25);
  CHECK(doc["run"]["on"] == true);
  CHECK(doc["run"]["off"] == false);
  CHECK(doc["run"]["list"] == json::parse(R"([1, "two", 3.0, [true]])"));
  CHECK(doc["run"]["quoted key"] == 0);
  CHECK(doc["other"]["empty"] == json::array());

  const auto error_of = [](const std::string& text) -> std::string {
    try {
      parse_toml(text, "cfg.toml");
    } catch (const ConfigError& e) {
      return e.what();
    }
    return {};
  };
  CHECK(error_of("[run]\nx = \n").rfind("cfg.toml:2:", 0) == 0);
  CHECK(!error_of("[run\n").empty());
  CHECK(!error_of("[run]\na.b = 1\n").empty());
  CHECK(!error_of("[run]\nx = 1\nx = 2\n").empty());
  CHECK(!error_of("[run]\n[run]\n").empty());
  CHECK(!error_of("x = \"open\n").empty());
  CHECK(!error_of("x = 1 2\n").empty());
  CHECK(!error_of("x = [1, 2\n").empty());
  CHECK(!error_of("x = nope\n").empty());
  CHECK(!error_of("just text\n").empty());
}

TEST_CASE("override values") {
  CHECK(parse_override_value("3") == 3);
  CHECK(parse_override_value("0.5") == 0.5);
  CHECK(parse_override_value("true") == true);
  CHECK(parse_override_value("\"x\"") == "x");
  CHECK(parse_override_value("/tmp/cache") == "/tmp/cache");
  CHECK(parse_override_value("metric") == "metric");
}

TEST_CASE("run configuration") {
  const fs::path dir = make_run_dir("config", gateway::UtilityMode::Additive, 4);
  const RunConfig c = load_run_config(dir / "config.toml");
  CHECK(c.dataset == dir / "samples.jsonl");
  CHECK(c.output_dir == dir / "out");
  CHECK(c.generator.world_path == dir / "world.json");
  CHECK(c.seed == 2024);
  CHECK(c.forge.seed == 2024);
  CHECK(c.top_k == 5);
  CHECK(c.utility.kind == valuation::UtilityKind::CrossEntropy);
  CHECK(c.out("x.csv") == dir / "out" / "x.csv");

  const RunConfig o = load_run_config(dir / "config.toml", {"run.top_k=3", "run.utility=metric", "forge.gamma=0.2",
                                                            "generator.cache_dir=cache", "run.seed=7"});
  CHECK(o.top_k == 3);
  CHECK(o.utility.kind == valuation::UtilityKind::Metric);
  CHECK(o.forge.gamma == 0.2);
  CHECK(o.forge.seed == 7);
  CHECK(o.generator.cache_dir == dir / "cache");

  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"run.nope=1"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"extra.key=1"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"top_k=1"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"run.top_k=-1"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"run.top_k=\"five\""}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"run.scorer=magic"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"run.order=sideways"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"generator.world=missing.json"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"generator.temperature=-1"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "config.toml", {"forge.delta1=9"}), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.toml"), ConfigError);
}

TEST_CASE("scorers") {
  Sample s;
  s.query = {"q", "?"};
  s.contexts = {{"a", "", {}}, {"b", "", {}}, {"c", "", {}}};
  s.ci = CIVector{0.1, -0.2, 0.3};
  OracleScorer oracle;
  CHECK(oracle.scores(s) == std::vector<double>{0.1, -0.2, 0.3});
  Sample bare = s;
  bare.ci.reset();
  CHECK_THROWS_AS(oracle.scores(bare), DataError);

  RandomScorer r1(5), r2(5), r3(6);
  CHECK(r1.scores(s) == r2.scores(s));
  CHECK(r1.scores(s) != r3.scores(s));

  const ScoreRecord rec{"q", {"c", "a", "b"}, {3, 1, 2}, "ext"};
  CHECK(align_scores(s, rec) == std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(align_scores(s, ScoreRecord{"q", {"a", "b"}, {1, 2}, "ext"}), DataError);
  CHECK_THROWS_AS(align_scores(s, ScoreRecord{"q", {"a", "b", "z"}, {1, 2, 3}, "ext"}), DataError);
  CHECK_THROWS_AS(align_scores(s, ScoreRecord{"q", {"a", "b", "c"}, {1, 2}, "ext"}), DataError);

  const fs::path dir = fresh_dir("scorers");
  write_scores(dir / "s.jsonl", {rec});
  CHECK(read_scores(dir / "s.jsonl") == std::vector<ScoreRecord>{rec});
  ExternalScorer ext(dir / "s.jsonl");
  CHECK(ext.scores(s) == std::vector<double>{1, 2, 3});
  Sample other = s;
  other.query.id = "q2";
  CHECK_THROWS_AS(ext.scores(other), DataError);
}

TEST_CASE("rank_contexts") {
  CHECK(rank_contexts({0.5, 0.9, 0.5, -1}, Order::Descending) == std::vector<std::size_t>{1, 0, 2, 3});
  CHECK(rank_contexts({0.5, 0.9, 0.5, -1}, Order::Ascending) == std::vector<std::size_t>{3, 0, 2, 1});
}

TEST_CASE("utility curves peak at the zero-CI cutoff on additive worlds") {
  const auto ds = gateway::synthesize_simworld({gateway::UtilityMode::Additive, 60, 2, 12, 404});
  auto gw = sim_gateway(ds.world);
  const auto samples = valued(ds, *gw);
  OracleScorer oracle;
  CurveOptions opt;
  opt.measure = "utility";
  const auto curve = run_curves(*gw, samples, oracle, opt);
  REQUIRE(curve.k_star.has_value());
  CHECK(curve.argmax_k() == *curve.k_star);
  CHECK(curve.points.front().k == 0);
  CHECK(!curve.points.front().mean_added_ci.has_value());
  // Score increments equal the added CI times the share of samples still growing.
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    std::size_t growing = 0;
    for (const auto& s : samples) growing += s.contexts.size() >= k;
    const double step = curve.points[k].score - curve.points[k - 1].score;
    CHECK(step == doctest::Approx(*curve.points[k].mean_added_ci * growing / samples.size()).epsilon(1e-9));
  }
}

TEST_CASE("threshold curves: descending peaks at k*, ascending starts poor") {
  const auto ds = gateway::synthesize_simworld({gateway::UtilityMode::Threshold, 60, 2, 10, 99});
  auto gw = sim_gateway(ds.world);
  const auto samples = valued(ds, *gw);
  OracleScorer oracle;
  RandomScorer random(2024);
  CurveOptions opt;
  const auto desc = run_curves(*gw, samples, oracle, opt);
  REQUIRE(desc.k_star.has_value());
  CHECK(desc.argmax_k() == *desc.k_star);
  CHECK(desc.points[0].score == 0.0);
  opt.order = Order::Ascending;
  const auto asc = run_curves(*gw, samples, oracle, opt);
  opt.order = Order::Descending;
  const auto rnd = run_curves(*gw, samples, random, opt);
  CHECK(asc.points[2].score < rnd.points[2].score);
  CHECK(asc.order == Order::Ascending);
  CHECK(rnd.scorer == "random");
}

TEST_CASE("curve at k = n equals keep-all") {
  const auto ds = gateway::synthesize_simworld({gateway::UtilityMode::Threshold, 30, 6, 6, 5});
  auto gw = sim_gateway(ds.world);
  const auto samples = valued(ds, *gw);
  RandomScorer random(1);
  const auto curve = run_curves(*gw, samples, random, {});
  const auto rows = run_eval(*gw, samples, random, {});
  REQUIRE(rows.size() == 7);
  CHECK(rows[1].strategy == "keep-all");
  CHECK(curve.points.back().score == rows[1].score);
  CHECK(curve.points.front().score == rows[0].score);
}

TEST_CASE("eval rows") {
  const auto ds = gateway::synthesize_simworld({gateway::UtilityMode::Threshold, 40, 2, 10, 21});
  auto gw = sim_gateway(ds.world);
  const auto samples = valued(ds, *gw);
  OracleScorer oracle;
  EvalOptions opt;
  opt.top_k = 3;
  const auto rows = run_eval(*gw, samples, oracle, opt);
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.strategy);
  CHECK(names == std::vector<std::string>{"vanilla", "keep-all", "oracle-positive-ci", "oracle-keep-poison",
                                          "oracle-ci-top-3", "oracle-ci-positive", "random-top-3"});
  CHECK(rows[0].score == 0.0);
  CHECK(rows[0].mean_kept == 0.0);
  CHECK(rows[2].score == 1.0);
  CHECK(rows[3].score <= rows[2].score);
  CHECK(rows[2].mean_kept < rows[1].mean_kept);
  CHECK(rows[5] == EvalRow{"oracle-ci-positive", rows[2].score, rows[2].mean_kept, 40});
  std::vector<Sample> unvalued(ds.samples.begin(), ds.samples.end());
  CHECK_THROWS_AS(run_eval(*gw, unvalued, oracle, opt), DataError);
}

TEST_CASE("spearman report") {
  const auto ds = gateway::synthesize_simworld({gateway::UtilityMode::Additive, 30, 1, 10, 8});
  auto gw = sim_gateway(ds.world);
  const auto samples = valued(ds, *gw);
  std::vector<ScoreRecord> same, negated;
  std::size_t defined = 0;
  for (const auto& s : samples) {
    ScoreRecord r{s.query.id, {}, *s.ci, "test"};
    for (const auto& c : s.contexts) r.context_ids.push_back(c.id);
    same.push_back(r);
    for (double& x : r.scores) x = -x;
    negated.push_back(r);
    const auto& v = *s.ci;
    defined += v.size() >= 2 && std::any_of(v.begin(), v.end(), [&](double x) { return x != v[0]; });
  }
  const auto a = run_spearman(same, samples);
  CHECK(*a.mean_rho == doctest::Approx(1.0));
  CHECK(*a.pooled_rho == doctest::Approx(1.0));
  CHECK(a.samples_used == defined);
  CHECK(a.samples_used + a.samples_skipped == samples.size());
  const auto b = run_spearman(negated, samples);
  CHECK(*b.mean_rho == doctest::Approx(-1.0));
  CHECK(*b.pooled_rho == doctest::Approx(-1.0));
  auto missing = same;
  missing.pop_back();
  CHECK_THROWS_AS(run_spearman(missing, samples), DataError);
  auto dup = same;
  dup.back().id = dup.front().id;
  CHECK_THROWS_AS(run_spearman(dup, samples), DataError);

  const fs::path dir = fresh_dir("spearman");
  write_spearman_csv(dir / "s.csv", a);
  const std::string csv = read_file(dir / "s.csv");
  CHECK(csv.rfind("variant,rho,samples_used,samples_skipped,pairs\nper-sample-mean,1.000000,", 0) == 0);
}

TEST_CASE("CSV writers") {
  const fs::path dir = fresh_dir("csv");
  CurveResult c;
  c.scorer = "oracle-ci";
  c.points = {{0, 0.25, std::nullopt}, {1, 0.5, 0.125}, {2, 0.5, -0.5}};
  c.k_star = 1;
  write_curves_csv(dir / "c.csv", {c});
  CHECK(read_file(dir / "c.csv") ==
        "scorer,order,k,score,mean_added_ci,is_cutoff\n"
        "oracle-ci,descending,0,0.250000,,0\n"
        "oracle-ci,descending,1,0.500000,0.125000,1\n"
        "oracle-ci,descending,2,0.500000,-0.500000,0\n");
  CHECK(c.argmax_k() == 1);
  write_eval_csv(dir / "e.csv", {{"vanilla", 0.5, 0, 2}}, metrics::MetricKind::TokenF1);
  CHECK(read_file(dir / "e.csv") == "strategy,metric,score,mean_kept,samples\nvanilla,f1,0.500000,0.000000,2\n");
}

TEST_CASE("command line") {
  const fs::path dir = make_run_dir("cli", gateway::UtilityMode::Additive, 12);
  const std::string cfg = (dir / "config.toml").string();

  CHECK(cli({"value", "-c", cfg}) == 0);
  const auto valued_samples = read_samples(dir / "out" / "valued.jsonl");
  CHECK(valued_samples.size() == 12);
  for (const auto& s : valued_samples) CHECK(s.ci.has_value());

  CHECK(cli({"build-dataset", "-c", cfg}) == 0);
  CHECK(fs::exists(dir / "out" / "corpus.jsonl"));
  CHECK(read_json(dir / "out" / "corpus.manifest.json")["counts"]["input"] == 12);

  CHECK(cli({"score", "-c", cfg, "--scorer", "random"}) == 0);
  CHECK(read_scores(dir / "out" / "scores.jsonl").size() == 12);
  CHECK(cli({"select", "-c", cfg, "--strategy", "top-k", "-k", "2", "-o", (dir / "sel.jsonl").string()}) == 0);
  for (const auto& j : read_jsonl(dir / "sel.jsonl")) CHECK(j["kept_ids"].size() <= 2);
  CHECK(cli({"curves", "-c", cfg, "--order", "ascending"}) == 0);
  CHECK(read_file(dir / "out" / "curves.csv").find("oracle-ci,ascending,0,") != std::string::npos);
  CHECK(cli({"eval", "-c", cfg, "--set", "run.top_k=2"}) == 0);
  CHECK(read_file(dir / "out" / "eval.csv").find("oracle-ci-top-2") != std::string::npos);
  CHECK(cli({"spearman", "-c", cfg}) == 0);
  CHECK(fs::exists(dir / "out" / "spearman.csv"));

  // Exit codes.
  CHECK(cli({}) == 2);
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({"value"}) == 2);
  CHECK(cli({"value", "-c", (dir / "missing.toml").string()}) == 2);
  CHECK(cli({"value", "-c", cfg, "--set", "run.bogus=1"}) == 2);
  CHECK(cli({"value", "-c", cfg, "-i", (dir / "missing.jsonl").string()}) == 4);
  write_text(dir / "broken.jsonl", "{\"not\": \"a sample\"}\n");
  CHECK(cli({"value", "-c", cfg, "-i", (dir / "broken.jsonl").string()}) == 4);
  CHECK(cli({"value", "-c", cfg, "--set", "generator.backend=remote", "--set",
             "generator.endpoint=http://127.0.0.1:1/v1", "--set", "generator.max_retries=0", "--set",
             "run.utility=metric", "-o", (dir / "never.jsonl").string()}) == 3);
  CHECK(!fs::exists(dir / "never.jsonl"));
  CHECK(cli({"value", "-c", cfg, "--set", "generator.backend=remote", "--set",
             "generator.endpoint=http://127.0.0.1:1/v1", "-o", (dir / "never.jsonl").string()}) == 3);
}
