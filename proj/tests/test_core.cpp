#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <set>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"
#include "ctxval/core/types.hpp"
#include "ctxval/util/hash.hpp"
#include "ctxval/util/parallel.hpp"
#include "ctxval/util/rng.hpp"

using namespace ctxval;

namespace {

Sample make_sample() {
  Sample s;
  s.query = {"q1", "Who won the 2016 US presidential election?"};
  s.answers.answers = {"Donald Trump", "Trump"};
  s.contexts = {{"c1", "Trump won the election.", "wiki"}, {"c2", "The vote was held in November.", std::nullopt}};
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ctxval_test_core";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("validate_sample accepts a well-formed sample unchanged") {
  const Sample s = make_sample();
  CHECK(validate_sample(s) == s);
  Sample with_ci = s;
  with_ci.ci = CIVector{0.5, -0.1};
  CHECK(validate_sample(with_ci) == with_ci);
}

TEST_CASE("validate_sample is idempotent") {
  const Sample s = make_sample();
  CHECK(validate_sample(validate_sample(s)) == validate_sample(s));
}

TEST_CASE("validate_sample names the failing field") {
  Sample dup = make_sample();
  dup.contexts[1].id = "c1";
  CHECK_THROWS_AS(validate_sample(dup), ValidationError);
  CHECK(error_of([&] { validate_sample(dup); }).find("duplicate id") != std::string::npos);

  Sample mismatch = make_sample();
  mismatch.ci = CIVector{1.0};
  CHECK(error_of([&] { validate_sample(mismatch); }).find("length mismatch") != std::string::npos);
  try {
    validate_sample(mismatch);
  } catch (const ValidationError& e) {
    CHECK(e.field() == "ci");
  }

  Sample blank_query = make_sample();
  blank_query.query.text = "   ";
  CHECK_THROWS_AS(validate_sample(blank_query), ValidationError);

  Sample no_answers = make_sample();
  no_answers.answers.answers.clear();
  CHECK_THROWS_AS(validate_sample(no_answers), ValidationError);

  Sample alias_dup = make_sample();
  alias_dup.answers.answers = {"Donald Trump", "the donald trump."};
  CHECK_THROWS_AS(validate_sample(alias_dup), ValidationError);

  Sample empty_text = make_sample();
  empty_text.contexts[0].text = "";
  CHECK_THROWS_AS(validate_sample(empty_text), ValidationError);

  Sample nan_ci = make_sample();
  nan_ci.ci = CIVector{0.1, std::nan("")};
  CHECK_THROWS_AS(validate_sample(nan_ci), ValidationError);
}

TEST_CASE("an empty context list is valid") {
  Sample s = make_sample();
  s.contexts.clear();
  s.ci = CIVector{};
  CHECK(validate_sample(s) == s);
}

TEST_CASE("sample JSON uses the normative field names and round-trips") {
  Sample s = make_sample();
  s.ci = CIVector{0.25, -0.125};
  s.meta = {{"cluster", "topic-1"}};
  const nlohmann::json j = s;
  CHECK(j.at("id") == "q1");
  CHECK(j.at("query") == "Who won the 2016 US presidential election?");
  CHECK(j.at("answers").size() == 2);
  CHECK(j.at("contexts")[0].at("origin") == "wiki");
  CHECK_FALSE(j.at("contexts")[1].contains("origin"));
  CHECK(j.at("ci")[1] == -0.125);
  CHECK(j.get<Sample>() == s);

  const Sample bare = make_sample();
  const nlohmann::json jb = bare;
  CHECK_FALSE(jb.contains("ci"));
  CHECK(jb.get<Sample>() == bare);
}

TEST_CASE("JSON Lines files round-trip and report bad lines") {
  Sample a = make_sample();
  Sample b = make_sample();
  b.query.id = "q2";
  b.ci = CIVector{0.1, 0.2};
  const auto path = temp_path("samples.jsonl");
  write_samples(path, {a, b});
  const auto back = read_samples(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == a);
  CHECK(back[1] == b);

  const auto bad = temp_path("bad.jsonl");
  write_file_atomic(bad, "{\"id\": \"q\"}\n{not json\n");
  CHECK_THROWS_AS(read_jsonl(bad), DataError);
  CHECK(error_of([&] { read_jsonl(bad); }).find(":2") != std::string::npos);
  CHECK_THROWS_AS(read_samples(bad), DataError);
}

TEST_CASE("selection results validate against their context list") {
  const Sample s = make_sample();
  SelectionResult ok{{"c1", "c2"}, {0.5, 0.1}, SelectionStrategy::TopK};
  CHECK_NOTHROW(validate_selection(ok, s.contexts));
  SelectionResult reordered{{"c2", "c1"}, {0.1, 0.5}, SelectionStrategy::TopK};
  CHECK_THROWS_AS(validate_selection(reordered, s.contexts), ValidationError);
  SelectionResult unknown{{"zz"}, {0.1}, SelectionStrategy::Random};
  CHECK_THROWS_AS(validate_selection(unknown, s.contexts), ValidationError);

  const nlohmann::json j = ok;
  CHECK(j.at("strategy") == "top-k");
  CHECK(j.get<SelectionResult>() == ok);
  CHECK(selection_strategy_from_string("external-score") == SelectionStrategy::ExternalScore);
}

TEST_CASE("subset_by_ids keeps list order") {
  const Sample s = make_sample();
  const auto sub = subset_by_ids(s.contexts, {"c2", "c1"});
  REQUIRE(sub.size() == 2);
  CHECK(sub[0].id == "c1");
}

TEST_CASE("sha256 matches the standard test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("rng streams are reproducible and in range") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(11);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(5) < 5);
  }
  const auto idx = r.sample_indices(10, 4);
  CHECK(idx.size() == 4);
  const std::set<std::size_t> distinct(idx.begin(), idx.end());
  CHECK(distinct.size() == 4);
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("parallel_for visits every index and reports the lowest failure") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "7");
  }
}
