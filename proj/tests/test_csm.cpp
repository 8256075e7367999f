#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <thread>

#include <json.hpp>

#include "ctxval/core/json_io.hpp"
#include "ctxval/csm/embeddings.hpp"
#include "ctxval/csm/forward.hpp"
#include "ctxval/csm/select.hpp"
#include "ctxval/csm/weights.hpp"
#include "ctxval/util/rng.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace ctxval;
using namespace ctxval::csm;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ctxval_test_csm" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

CsmMetadata small_meta(int d = 8, int heads = 2) {
  CsmMetadata m;
  m.d_model = d;
  m.layers = 2;
  m.heads = heads;
  m.ffn_dim = 12;
  m.mlp_hidden = 6;
  return m;
}

std::vector<Vector<double>> random_rows(Rng& rng, std::size_t n, int d) {
  std::vector<Vector<double>> rows(n, Vector<double>(d));
  for (auto& r : rows) {
    for (int k = 0; k < d; ++k) r(k) = rng.uniform() * 4 - 2;
  }
  return rows;
}

std::string read_bytes(const std::filesystem::path& p) { return read_file(p); }

void write_bytes(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

// Rewrites the JSON header of a .csmw file, keeping the payload.
void edit_header(const std::filesystem::path& p, const std::function<void(json&)>& edit) {
  const std::string bytes = read_bytes(p);
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
  json header = json::parse(bytes.substr(8, len));
  edit(header);
  const std::string h = header.dump();
  std::string out(8, '\0');
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((h.size() >> (8 * i)) & 0xff);
  write_bytes(p, out + h + bytes.substr(8 + len));
}

WeightFileError::Reason load_failure(const std::filesystem::path& p) {
  try {
    load_weights(p);
  } catch (const WeightFileError& e) {
    return e.reason();
  }
  FAIL("expected WeightFileError");
  return WeightFileError::Reason::Parse;
}

}  // namespace

TEST_CASE("metadata validation") {
  CHECK_NOTHROW(small_meta().validate());
  CsmMetadata m = small_meta(10, 4);
  CHECK_THROWS_AS(m.validate(), WeightFileError);
  m = small_meta();
  m.activation = "relu";
  CHECK_THROWS_AS(m.validate(), WeightFileError);
  m = small_meta();
  m.positional_encoding = "sinusoidal";
  CHECK_THROWS_AS(m.validate(), WeightFileError);
  m = small_meta();
  m.layers = 0;
  CHECK_THROWS_AS(m.validate(), WeightFileError);
}

TEST_CASE("weights round trip through .csmw") {
  const auto dir = fresh_dir("roundtrip");
  const auto w = random_weights(small_meta(), 5);
  save_weights(dir / "w.csmw", w);
  const auto back = load_weights(dir / "w.csmw");
  CHECK(back.meta == w.meta);
  REQUIRE(back.layers.size() == 2);
  CHECK(back.layers[1].fc2_weight == w.layers[1].fc2_weight);
  CHECK(back.layers[0].q_bias == w.layers[0].q_bias);
  CHECK(back.head_fc1_weight == w.head_fc1_weight);
  CHECK(back.head_fc2_bias == w.head_fc2_bias);
  save_weights(dir / "again.csmw", back);
  CHECK(read_bytes(dir / "w.csmw") == read_bytes(dir / "again.csmw"));

  const auto names = tensor_names(w.meta);
  CHECK(names.front() == "global.layers.0.ln1.weight");
  CHECK(names.back() == "head.fc2.bias");
  CHECK(names.size() == 2 * 16 + 4);
}

TEST_CASE("corrupt weight files") {
  const auto dir = fresh_dir("corrupt");
  const auto path = dir / "w.csmw";
  save_weights(path, random_weights(small_meta(), 6));
  const std::string good = read_bytes(path);

  SUBCASE("truncated payload") {
    write_bytes(path, good.substr(0, good.size() - 9));
    CHECK(load_failure(path) == WeightFileError::Reason::Checksum);
  }
  SUBCASE("flipped payload byte") {
    std::string bad = good;
    bad[bad.size() - 3] ^= 0x10;
    write_bytes(path, bad);
    CHECK(load_failure(path) == WeightFileError::Reason::Checksum);
  }
  SUBCASE("header length beyond the file") {
    std::string bad = good;
    bad[6] = 0x7f;
    write_bytes(path, bad);
    CHECK(load_failure(path) == WeightFileError::Reason::Parse);
  }
  SUBCASE("not a weight file") {
    write_bytes(path, "hello");
    CHECK(load_failure(path) == WeightFileError::Reason::Parse);
  }
  SUBCASE("metadata dimension disagrees with tensors") {
    edit_header(path, [](json& h) { h["metadata"]["d_model"] = 16; });
    CHECK(load_failure(path) == WeightFileError::Reason::Shape);
  }
  SUBCASE("tensor shape disagrees with metadata") {
    edit_header(path, [](json& h) {
      for (auto& t : h["tensors"]) {
        if (t["name"] == "global.layers.0.ffn.fc1.weight") t["shape"] = json::array({t["shape"][1], t["shape"][0]});
      }
    });
    CHECK(load_failure(path) == WeightFileError::Reason::Shape);
  }
  CHECK_THROWS_AS(load_weights(dir / "missing.csmw"), DataError);
}

TEST_CASE("shape validation") {
  auto w = zero_weights(small_meta());
  CHECK_NOTHROW(validate_shapes(w));
  w.layers[0].k_weight.resize(3, 8);
  CHECK_THROWS_AS(validate_shapes(w), WeightFileError);
}

TEST_CASE("zeroed projections leave the input unchanged") {
  Rng rng(1);
  const auto w = zero_weights(small_meta()).cast<double>();
  for (std::size_t n : {1u, 2u, 7u}) {
    const auto L = random_rows(rng, n, 8);
    const auto G = global_forward(L, w);
    for (std::size_t i = 0; i < n; ++i) CHECK(G[i] == L[i]);
  }
  // Zero head scores every context 0.
  const auto s = score(random_rows(rng, 4, 8), w);
  for (double x : s) CHECK(x == 0.0);
}

TEST_CASE("permutation equivariance is exact") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto w = random_weights(small_meta(), rng.next()).cast<double>();
    const std::size_t n = 1 + rng.below(9);
    auto L = random_rows(rng, n, 8);
    if (n > 2) L[n - 1] = L[0];  // duplicates too
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    std::vector<Vector<double>> P(n);
    for (std::size_t i = 0; i < n; ++i) P[i] = L[perm[i]];
    const auto G = global_forward(L, w);
    const auto GP = global_forward(P, w);
    const auto s = score(G, w);
    const auto sp = score(GP, w);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(GP[i] == G[perm[i]]);
      CHECK(sp[i] == s[perm[i]]);
    }
  }
}

TEST_CASE("forward details") {
  Rng rng(3);
  const auto w = random_weights(small_meta(), 11).cast<double>();
  // A single context attends only to itself.
  const auto L = random_rows(rng, 1, 8);
  CHECK(global_forward(L, w)[0].allFinite());
  CHECK(global_forward(std::vector<Vector<double>>{}, w).empty());
  // Matrix overload agrees with the row overload.
  const auto rows = random_rows(rng, 5, 8);
  const Matrix<double> M = rows_matrix(rows, 8);
  CHECK(matrix_rows(global_forward(M, w)) == global_forward(rows, w));
  CHECK(score(M, w) == score(rows, w));
  // Float instantiation stays close to double.
  const auto wf = random_weights(small_meta(), 11);
  std::vector<Vector<float>> rf;
  for (const auto& r : rows) rf.push_back(r.cast<float>());
  const auto sf = score(global_forward(rf, wf), wf);
  const auto sd = score(global_forward(rows, w), w);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(std::abs(sf[i] - sd[i]) < 1e-3);
  // GELU and layer norm spot values.
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429));
  CHECK(gelu(0.0) == 0.0);
  Vector<double> x(3);
  x << 1, 2, 3;
  const auto ln = layer_norm<double>(x, Vector<double>::Ones(3), Vector<double>::Zero(3), 0.0);
  CHECK(ln(0) == doctest::Approx(-std::sqrt(1.5)));
  CHECK(ln(1) == doctest::Approx(0.0));

  auto bad = random_rows(rng, 2, 8);
  bad[1] = Vector<double>::Zero(4);
  CHECK_THROWS_AS(global_forward(bad, w), DataError);
  bad[1] = Vector<double>::Constant(8, std::nan(""));
  CHECK_THROWS_AS(global_forward(bad, w), DataError);
}

TEST_CASE("forward is deterministic across threads") {
  Rng rng(4);
  const auto w = random_weights(small_meta(16, 4), 9).cast<double>();
  const auto L = random_rows(rng, 12, 16);
  const auto ref = score(global_forward(L, w), w);
  std::vector<std::vector<double>> results(8);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int rep = 0; rep < 5; ++rep) results[t] = score(global_forward(L, w), w);
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : results) CHECK(r == ref);
}

TEST_CASE("file embeddings") {
  const auto dir = fresh_dir("emb");
  const auto path = dir / "emb.jsonl";
  write_bytes(path,
              R"({"query_id":"q1","vector":[1,0]})"
              "\n"
              R"({"query_id":"q1","context_id":"a","vector":[0.5,1]})"
              "\n"
              R"({"query_id":"q1","context_id":"b","vector":[-1,2]})"
              "\n");
  FileEmbeddings emb(path);
  CHECK(emb.dimension() == 2);
  REQUIRE(emb.query_vector("q1").has_value());
  CHECK((*emb.query_vector("q1"))(0) == 1.0);
  CHECK(!emb.query_vector("q2").has_value());
  const auto v = emb.embed_pairs({"q1", "?"}, {{"b", "", {}}, {"a", "", {}}});
  CHECK(v[0](1) == 2.0);
  CHECK(v[1](0) == 0.5);
  try {
    emb.embed_pairs({"q1", "?"}, {{"a", "", {}}, {"zz", "", {}}});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()) == "no embedding for pair (query q1, context zz)");
  }

  write_bytes(path, R"({"query_id":"q1","context_id":"a","vector":[1,2]})"
                    "\n"
                    R"({"query_id":"q1","context_id":"b","vector":[1]})"
                    "\n");
  CHECK_THROWS_AS(FileEmbeddings{path}, DataError);
  write_bytes(path, R"({"query_id":"q1","context_id":"a","vector":[1,2]})"
                    "\n"
                    R"({"query_id":"q1","context_id":"a","vector":[1,3]})"
                    "\n");
  CHECK_THROWS_AS(FileEmbeddings{path}, DataError);
}

TEST_CASE("remote embeddings") {
  httplib::Server server;
  std::vector<std::string> seen;
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    json data = json::array();
    // Reply out of order; the client must use the index field.
    for (std::size_t k = body["input"].size(); k-- > 0;) {
      seen.push_back(body["input"][k]);
      data.push_back({{"index", k}, {"embedding", {static_cast<double>(k), 1.0}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteEmbeddings emb("http://127.0.0.1:" + std::to_string(port) + "/v1", "enc", 2, "");
  const auto v = emb.embed_pairs({"q", "Who?"}, {{"a", "Alpha", {}}, {"b", "Beta", {}}});
  CHECK(v[0](0) == 0.0);
  CHECK(v[1](0) == 1.0);
  CHECK(std::find(seen.begin(), seen.end(), "Who? [SEP] Beta") != seen.end());
  RemoteEmbeddings wrong("http://127.0.0.1:" + std::to_string(port) + "/v1", "enc", 3, "");
  CHECK_THROWS_AS(wrong.embed_pairs({"q", "?"}, {{"a", "A", {}}}), GatewayError);

  server.stop();
  th.join();
}

TEST_CASE("csm_select keeps positive scores") {
  const auto dir = fresh_dir("select");
  const auto path = dir / "emb.jsonl";
  write_bytes(path,
              R"({"query_id":"q","context_id":"a","vector":[1,0,0,0,0,0,0,0]})"
              "\n"
              R"({"query_id":"q","context_id":"b","vector":[-1,0,0,0,0,0,0,0]})"
              "\n"
              R"({"query_id":"q","context_id":"c","vector":[2,0,0,0,0,0,0,0]})"
              "\n");
  FileEmbeddings emb(path);
  // Identity global layer and a head that reads the first coordinate.
  auto w = zero_weights(small_meta()).cast<double>();
  w.head_fc1_weight(0, 0) = 1.0;
  w.head_fc2_weight(0, 0) = 1.0;
  w.head_fc2_bias(0) = -0.5;
  const ContextList ctx{{"a", "", {}}, {"b", "", {}}, {"c", "", {}}};
  const auto s = csm_scores({"q", "?"}, ctx, w, emb);
  CHECK(s[0] == doctest::Approx(gelu(1.0) - 0.5));
  const auto sel = csm_select({"q", "?"}, ctx, w, emb);
  CHECK(sel.kept_ids == std::vector<std::string>{"a", "c"});
  CHECK(sel.strategy == SelectionStrategy::ExternalScore);
  CHECK(csm_select({"q", "?"}, {}, w, emb).kept_ids.empty());
}
