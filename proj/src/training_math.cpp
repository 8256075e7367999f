#include "ctxval/training_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctxval/core/error.hpp"
#include "ctxval/util/rng.hpp"

namespace ctxval::training {

double weighted_mse(const std::vector<std::vector<double>>& predictions, const std::vector<std::vector<double>>& targets,
                    std::span<const double> p) {
  if (predictions.size() != targets.size() || predictions.size() != p.size()) {
    throw DataError("weighted_mse: predictions, targets and p differ in sample count");
  }
  if (predictions.empty()) throw DataError("weighted_mse: no samples");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!(p[i] > 0.0)) throw DataError("weighted_mse: p must be positive (sample " + std::to_string(i) + ")");
    const auto& pred = predictions[i];
    const auto& tgt = targets[i];
    if (pred.size() != tgt.size()) throw DataError("weighted_mse: length mismatch in sample " + std::to_string(i));
    if (pred.empty()) throw DataError("weighted_mse: sample " + std::to_string(i) + " has no contexts");
    double se = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) se += (pred[k] - tgt[k]) * (pred[k] - tgt[k]);
    total += se / static_cast<double>(pred.size()) / p[i];
  }
  return total / static_cast<double>(predictions.size());
}

double contrastive_loss(const std::vector<Eigen::VectorXd>& g, std::span<const forge::ContrastivePairSet> pairs,
                        double tau) {
  if (!(tau > 0.0)) throw DataError("contrastive_loss: tau must be positive");
  if (pairs.empty()) return 0.0;
  const auto vec = [&](std::size_t i) -> const Eigen::VectorXd& {
    if (i >= g.size()) throw DataError("contrastive_loss: index " + std::to_string(i) + " out of range");
    return g[i];
  };
  double total = 0.0;
  for (const auto& ps : pairs) {
    if (ps.negatives.empty()) throw DataError("contrastive_loss: pair set without negatives");
    const auto& a = vec(ps.anchor);
    std::vector<double> logits;
    logits.push_back(a.dot(vec(ps.positive)) / tau);
    for (std::size_t n : ps.negatives) logits.push_back(a.dot(vec(n)) / tau);
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - m);
    total += m + std::log(sum) - logits.front();
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

GumbelMask gumbel_mask(std::span<const double> scores, double temperature, std::uint64_t seed, bool hard) {
  if (!(temperature > 0.0)) throw DataError("gumbel_mask: temperature must be positive");
  Rng rng(seed);
  GumbelMask out;
  out.soft.reserve(scores.size());
  for (double m : scores) {
    const double g_keep = rng.gumbel();
    const double g_drop = rng.gumbel();
    out.soft.push_back(sigmoid((m + g_keep - g_drop) / temperature));
  }
  out.forward = out.soft;
  if (hard) {
    for (double& v : out.forward) v = v > 0.5 ? 1.0 : 0.0;
  }
  return out;
}

double sufficiency_loss(const std::vector<std::vector<double>>& gold_token_logprobs) {
  if (gold_token_logprobs.empty()) throw DataError("sufficiency_loss: empty batch");
  double total = 0.0;
  for (const auto& seq : gold_token_logprobs) {
    for (double lp : seq) {
      if (!std::isfinite(lp) || lp > 0.0) throw DataError("sufficiency_loss: log-probabilities must be finite and <= 0");
      total -= lp;
    }
  }
  return total / static_cast<double>(gold_token_logprobs.size());
}

double necessity_loss(std::span<const double> distribution, double epsilon) {
  if (distribution.empty()) throw DataError("necessity_loss: empty distribution");
  if (!(epsilon > 0.0)) throw DataError("necessity_loss: epsilon must be positive");
  double sum = 0.0;
  for (double f : distribution) {
    if (!std::isfinite(f) || f < 0.0) throw DataError("necessity_loss: probabilities must be finite and >= 0");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw DataError("necessity_loss: probabilities sum to " + std::to_string(sum));
  const double u = 1.0 / static_cast<double>(distribution.size());
  double kl = 0.0;
  for (double f : distribution) kl += u * std::log(u / std::max(f, epsilon));
  return kl;
}

LossBreakdown combine(Paradigm paradigm, const LossComponents& losses, const Coefficients& coefficients) {
  LossBreakdown out;
  out.components = losses;
  out.coefficients = coefficients;
  if (paradigm == Paradigm::Supervised) {
    if (!losses.mse || !losses.cts) throw DataError("combine: supervised loss needs mse and cts");
    out.combined = *losses.mse + coefficients.beta * *losses.cts;
  } else {
    if (!losses.suf || !losses.nec) throw DataError("combine: end-to-end loss needs suf and nec");
    out.combined = *losses.suf + coefficients.lambda * *losses.nec;
  }
  if (!std::isfinite(out.combined)) throw DataError("combine: non-finite combined loss");
  return out;
}

}  // namespace ctxval::training
