// Generates a SimWorld dataset: world.json, samples.jsonl, embeddings.jsonl
// and a hand-built demo .csmw whose score tracks the first embedding
// coordinate. The demo weights are not trained.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ctxval/core/json_io.hpp"
#include "ctxval/csm/weights.hpp"
#include "ctxval/gateway/simworld.hpp"
#include "ctxval/util/rng.hpp"

namespace fs = std::filesystem;
using namespace ctxval;

namespace {

csm::CsmWeights<float> demo_weights(int d, std::uint64_t seed) {
  csm::CsmMetadata meta;
  meta.d_model = d;
  meta.ffn_dim = 2 * d;
  meta.mlp_hidden = 8;
  auto w = csm::random_weights(meta, seed, 0.05f);
  // score = gelu(g x0) / g - gelu(-g x0) / g = x0 before the global layer mixes it.
  const float g = 4.0f;
  w.head_fc1_weight.setZero();
  w.head_fc1_bias.setZero();
  w.head_fc2_weight.setZero();
  w.head_fc2_bias.setZero();
  w.head_fc1_weight(0, 0) = g;
  w.head_fc1_weight(1, 0) = -g;
  w.head_fc2_weight(0, 0) = 1.0f / g;
  w.head_fc2_weight(0, 1) = -1.0f / g;
  return w;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a SimWorld dataset", "make_simworld"};
  std::string out_dir, mode = "additive";
  std::size_t samples = 50, min_ctx = 2, max_ctx = 12;
  std::uint64_t seed = 2024;
  int dim = 16;
  double noise = 0.05;
  app.add_option("-o,--out", out_dir, "Output directory")->required();
  app.add_option("--mode", mode, "additive | threshold");
  app.add_option("--samples", samples, "Number of samples");
  app.add_option("--min-contexts", min_ctx);
  app.add_option("--max-contexts", max_ctx);
  app.add_option("--seed", seed);
  app.add_option("--dim", dim, "Embedding dimension (multiple of 8)");
  app.add_option("--noise", noise, "Uniform noise half-width on the signal coordinate");
  CLI11_PARSE(app, argc, argv);

  try {
    gateway::SimRecipe recipe;
    recipe.mode = gateway::utility_mode_from_string(mode);
    recipe.samples = samples;
    recipe.min_contexts = min_ctx;
    recipe.max_contexts = max_ctx;
    recipe.seed = seed;
    const auto ds = gateway::synthesize_simworld(recipe);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    gateway::save_simworld(dir / "world.json", ds.world);
    write_samples(dir / "samples.jsonl", ds.samples);

    Rng rng(derive_seed(seed, "embeddings"));
    auto u = [&] { return 2.0 * rng.uniform() - 1.0; };
    std::vector<nlohmann::json> lines;
    for (const auto& s : ds.samples) {
      std::vector<double> qv(static_cast<std::size_t>(dim));
      for (auto& x : qv) x = u();
      lines.push_back({{"query_id", s.query.id}, {"vector", qv}});
      const auto& q = ds.world.query(s.query.id);
      for (const auto& c : s.contexts) {
        const auto& sc = ds.world.context(c.id);
        const double signal = ds.world.relevant(q, sc) ? sc.weight : 0.0;
        std::vector<double> v(static_cast<std::size_t>(dim));
        v[0] = signal + noise * u();
        for (std::size_t k = 1; k < v.size(); ++k) v[k] = u();
        lines.push_back({{"query_id", s.query.id}, {"context_id", c.id}, {"vector", v}});
      }
    }
    write_jsonl(dir / "embeddings.jsonl", lines);
    csm::save_weights(dir / "csm-demo.csmw", demo_weights(dim, derive_seed(seed, "weights")));
    fmt::print("wrote {} samples ({} mode) to {}\n", ds.samples.size(), mode, dir.string());
  } catch (const std::exception& e) {
    fmt::print(stderr, "make_simworld: {}\n", e.what());
    return 1;
  }
  return 0;
}
