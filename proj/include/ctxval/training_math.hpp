#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ctxval/forge.hpp"

namespace ctxval::training {

/// Mean over samples of (mean squared error of the sample) / p(sample).
double weighted_mse(const std::vector<std::vector<double>>& predictions, const std::vector<std::vector<double>>& targets,
                    std::span<const double> p);

/// Mean over anchors of the InfoNCE term with one positive per anchor:
/// -log(exp(s+) / (exp(s+) + sum exp(s-))), s = g_a . g_x / tau.
/// Returns 0 when there are no pair sets.
double contrastive_loss(const std::vector<Eigen::VectorXd>& g, std::span<const forge::ContrastivePairSet> pairs,
                        double tau);

struct GumbelMask {
  std::vector<double> soft;     // keep coordinate in (0, 1)
  std::vector<double> forward;  // soft, or thresholded at 0.5 when hard
};

/// Two-category Gumbel-Softmax over logits (m_i, 0): keep_i =
/// sigmoid((m_i + g_keep - g_drop) / temperature), noise drawn per context in
/// (keep, drop) order from a generator seeded with `seed`.
GumbelMask gumbel_mask(std::span<const double> scores, double temperature, std::uint64_t seed, bool hard);

/// Batch mean of the negative summed gold-token log-probabilities.
double sufficiency_loss(const std::vector<std::vector<double>>& gold_token_logprobs);

/// KL(uniform || f) = sum_v (1/V) ln((1/V) / max(f_v, epsilon)).
double necessity_loss(std::span<const double> distribution, double epsilon = 1e-8);

enum class Paradigm { Supervised, EndToEnd };

struct LossComponents {
  std::optional<double> mse;
  std::optional<double> cts;
  std::optional<double> suf;
  std::optional<double> nec;
};

struct Coefficients {
  double beta = 0.1;
  double tau = 1.0;
  double lambda = 1.0;
};

struct LossBreakdown {
  LossComponents components;
  double combined = 0.0;
  Coefficients coefficients;
};

/// Supervised: mse + beta * cts. End-to-end: suf + lambda * nec.
LossBreakdown combine(Paradigm paradigm, const LossComponents& losses, const Coefficients& coefficients = {});

}  // namespace ctxval::training
