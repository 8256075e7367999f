#include <doctest.h>

#include <cmath>
#include <vector>

#include "ctxval/core/error.hpp"
#include "ctxval/training_math.hpp"
#include "ctxval/util/rng.hpp"

using namespace ctxval;
using namespace ctxval::training;
using forge::ContrastivePairSet;

namespace {

// Unweighted mean squared error over every element.
double plain_mse(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  double se = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      se += (a[i][k] - b[i][k]) * (a[i][k] - b[i][k]);
      ++n;
    }
  }
  return se / static_cast<double>(n);
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("weighted_mse") {
  const std::vector<std::vector<double>> t{{0.1, 0.2}, {0.3, -0.4}};
  CHECK(weighted_mse(t, t, std::vector<double>{0.3, 0.7}) == 0.0);
  CHECK(weighted_mse({{1.0}}, {{0.0}}, std::vector<double>{0.5}) == 2.0);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> pred(7, std::vector<double>(5)), tgt(7, std::vector<double>(5));
    for (auto& row : pred) for (auto& x : row) x = rng.uniform() * 2 - 1;
    for (auto& row : tgt) for (auto& x : row) x = rng.uniform() * 2 - 1;
    const std::vector<double> ones(7, 1.0);
    CHECK(std::abs(weighted_mse(pred, tgt, ones) - plain_mse(pred, tgt)) <= 1e-12);
    std::vector<double> p(7);
    for (auto& x : p) x = 0.05 + rng.uniform();
    CHECK(weighted_mse(pred, tgt, p) > 0.0);
  }
  CHECK_THROWS_AS(weighted_mse(t, t, std::vector<double>{1.0}), DataError);
  CHECK_THROWS_AS(weighted_mse(t, t, std::vector<double>{1.0, 0.0}), DataError);
  CHECK_THROWS_AS(weighted_mse({{1.0}}, {{1.0, 2.0}}, std::vector<double>{1.0}), DataError);
}

TEST_CASE("contrastive_loss") {
  // Anchor e0, positive and negative with equal dot products.
  const std::vector<Eigen::VectorXd> sym{vec({1, 0}), vec({0.5, 1}), vec({0.5, -1})};
  const std::vector<ContrastivePairSet> one{{0, 1, {2}, 0.05, 0.3}};
  CHECK(std::abs(contrastive_loss(sym, one, 1.0) - std::log(2.0)) <= 1e-9);

  // Large positive similarity drives the loss to 0.
  const std::vector<Eigen::VectorXd> far{vec({1, 0}), vec({200, 0}), vec({-1, 0})};
  CHECK(contrastive_loss(far, one, 1.0) < 1e-12);

  // Doubling tau equals halving every embedding dot product.
  const std::vector<Eigen::VectorXd> g{vec({0.3, -1.2}), vec({0.8, 0.1}), vec({-0.4, 0.9}), vec({1.1, 0.2})};
  const std::vector<ContrastivePairSet> ps{{0, 1, {2, 3}, 0, 0}, {2, 3, {0}, 0, 0}};
  std::vector<Eigen::VectorXd> halved;
  for (const auto& v : g) halved.push_back(v / std::sqrt(2.0));
  CHECK(contrastive_loss(g, ps, 2.0) == doctest::Approx(contrastive_loss(halved, ps, 1.0)).epsilon(1e-12));

  // Direct formula for a two-negative anchor.
  const double sp = g[0].dot(g[1]), s2 = g[0].dot(g[2]), s3 = g[0].dot(g[3]);
  const std::vector<ContrastivePairSet> single{ps[0]};
  CHECK(contrastive_loss(g, single, 1.0) ==
        doctest::Approx(-std::log(std::exp(sp) / (std::exp(sp) + std::exp(s2) + std::exp(s3)))).epsilon(1e-12));

  CHECK(contrastive_loss(g, std::vector<ContrastivePairSet>{}, 1.0) == 0.0);
  CHECK_THROWS_AS(contrastive_loss(g, ps, 0.0), DataError);
  CHECK_THROWS_AS(contrastive_loss(g, std::vector<ContrastivePairSet>{{0, 1, {}, 0, 0}}, 1.0), DataError);
  CHECK_THROWS_AS(contrastive_loss(g, std::vector<ContrastivePairSet>{{0, 9, {1}, 0, 0}}, 1.0), DataError);
}

TEST_CASE("contrastive_loss monotonicity") {
  // Anchor e0; the positive's and negative's first coordinates set their dot products.
  const std::vector<ContrastivePairSet> ps{{0, 1, {2}, 0, 0}};
  const auto loss = [&](double pos, double neg) {
    return contrastive_loss({vec({1, 0}), vec({pos, 0.3}), vec({neg, -0.2})}, ps, 1.0);
  };
  const double h = 1e-3;
  for (double pos = -2; pos <= 2; pos += 0.5) {
    for (double neg = -2; neg <= 2; neg += 0.5) {
      CHECK(loss(pos + h, neg) < loss(pos, neg));
      CHECK(loss(pos, neg + h) > loss(pos, neg));
    }
  }
}

TEST_CASE("gumbel_mask") {
  const std::vector<double> m{0.0, 1.5, -2.0};
  const auto a = gumbel_mask(m, 0.5, 7, false);
  CHECK(a.soft == gumbel_mask(m, 0.5, 7, false).soft);
  CHECK(a.forward == a.soft);
  for (double v : a.soft) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  const auto h = gumbel_mask(m, 0.5, 7, true);
  CHECK(h.soft == a.soft);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(h.forward[i] == (a.soft[i] > 0.5 ? 1.0 : 0.0));

  // Same draws by hand.
  Rng rng(7);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double gk = rng.gumbel(), gd = rng.gumbel();
    CHECK(a.soft[i] == doctest::Approx(1.0 / (1.0 + std::exp(-(m[i] + gk - gd) / 0.5))).epsilon(1e-14));
  }

  CHECK(gumbel_mask(std::vector<double>{1e6}, 1.0, 1, false).soft[0] == 1.0);
  CHECK_THROWS_AS(gumbel_mask(m, 0.0, 1, false), DataError);
}

TEST_CASE("gumbel_mask limits") {
  const std::vector<double> m(10000, 0.0);
  std::size_t near_binary = 0;
  for (double v : gumbel_mask(m, 1e-3, 2024, false).soft) near_binary += (v < 0.01 || v > 0.99);
  CHECK(near_binary >= 9900);

  std::size_t near_half = 0;
  double mean = 0;
  const auto hot = gumbel_mask(std::vector<double>(10000, 1.0), 1e3, 2024, false).soft;
  for (double v : hot) {
    near_half += std::abs(v - 0.5) <= 0.02;
    mean += v / hot.size();
  }
  CHECK(near_half >= 9900);
  CHECK(std::abs(mean - 0.5) <= 0.02);

  // Gumbel-max: P(keep > 0.5) = sigmoid(m).
  std::size_t kept = 0;
  for (double v : gumbel_mask(std::vector<double>(20000, 1.0), 1.0, 5, true).forward) kept += v == 1.0;
  CHECK(std::abs(kept / 20000.0 - 1.0 / (1.0 + std::exp(-1.0))) < 0.015);
}

TEST_CASE("sufficiency_loss") {
  CHECK(sufficiency_loss({{0.0, 0.0}, {0.0}}) == 0.0);
  const double v = 50;
  CHECK(sufficiency_loss({{-std::log(v), -std::log(v), -std::log(v)}}) == doctest::Approx(3 * std::log(v)));
  CHECK(sufficiency_loss({{-1.0}, {-2.0, -1.0}}) == doctest::Approx(2.0));
  CHECK(sufficiency_loss({{-0.5, -0.2}}) < sufficiency_loss({{-0.5, -0.3}}));
  CHECK_THROWS_AS(sufficiency_loss({{0.1}}), DataError);
  CHECK_THROWS_AS(sufficiency_loss({}), DataError);
}

TEST_CASE("necessity_loss") {
  CHECK(necessity_loss(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(0.0));
  CHECK(std::abs(necessity_loss(std::vector<double>{0.75, 0.25}) - 0.14384) <= 1e-5);
  CHECK(necessity_loss(std::vector<double>{0.75, 0.25}) ==
        doctest::Approx(0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25)));
  CHECK(necessity_loss(std::vector<double>{1.0, 0.0}) ==
        doctest::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-8)));
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> f(5);
    double s = 0;
    for (auto& x : f) s += (x = rng.uniform() + 0.01);
    for (auto& x : f) x /= s;
    CHECK(necessity_loss(f) > 0.0);
  }
  CHECK_THROWS_AS(necessity_loss(std::vector<double>{0.5, 0.6}), DataError);
  CHECK_THROWS_AS(necessity_loss(std::vector<double>{1.5, -0.5}), DataError);
  CHECK_THROWS_AS(necessity_loss(std::vector<double>{}), DataError);
}

TEST_CASE("combine") {
  CHECK(combine(Paradigm::Supervised, {0.4, 2.0, {}, {}}, {0.0, 1.0, 1.0}).combined == 0.4);
  CHECK(combine(Paradigm::Supervised, {0.4, 2.0, {}, {}}).combined == doctest::Approx(0.6));
  const auto e2e = combine(Paradigm::EndToEnd, {{}, {}, 1.0, 2.0});
  CHECK(e2e.combined == 3.0);
  CHECK(e2e.coefficients.beta == 0.1);
  CHECK(e2e.coefficients.tau == 1.0);
  CHECK(e2e.coefficients.lambda == 1.0);
  CHECK_THROWS_AS(combine(Paradigm::Supervised, {0.4, {}, {}, {}}), DataError);
  CHECK_THROWS_AS(combine(Paradigm::EndToEnd, {{}, {}, 1.0, {}}), DataError);
}
