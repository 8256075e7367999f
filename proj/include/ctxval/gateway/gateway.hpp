#pragma once

#include <atomic>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxval/core/types.hpp"
#include "ctxval/gateway/cache.hpp"
#include "ctxval/gateway/config.hpp"
#include "ctxval/gateway/simworld.hpp"

namespace ctxval::gateway {

/// One way of running the generator f. Backends are called concurrently and
/// must be thread-safe.
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual std::string tag() const = 0;

  /// Key material beyond (model, template, prompt, decoding) that determines
  /// the backend's output. Remote endpoints see only the prompt, so the
  /// default is empty.
  virtual nlohmann::json identity(const Query&, const ContextList&) const { return nullptr; }

  virtual GeneratorResponse generate(const Query& query, const ContextList& contexts, const std::string& prompt,
                                     const GeneratorConfig& config) = 0;

  /// Total log-probability of `answer` as the continuation of `prompt`.
  virtual double score_answer(const Query& query, const ContextList& contexts, const std::string& prompt,
                              const std::string& answer, const GeneratorConfig& config) = 0;
};

/// Pure-function backend over a SimWorld.
class SimulatedBackend final : public GeneratorBackend {
 public:
  explicit SimulatedBackend(SimWorld world);

  std::string tag() const override { return "simulated"; }
  nlohmann::json identity(const Query& query, const ContextList& contexts) const override;
  GeneratorResponse generate(const Query& query, const ContextList& contexts, const std::string& prompt,
                             const GeneratorConfig& config) override;
  double score_answer(const Query& query, const ContextList& contexts, const std::string& prompt,
                      const std::string& answer, const GeneratorConfig& config) override;

  const SimWorld& world() const { return world_; }

 private:
  SimWorld world_;
  std::string fingerprint_;
};

/// Uniform, cached, concurrency-bounded access to a generator backend.
///
/// Counters: `evaluations()` counts generate/score_answers calls made on the
/// gateway (one per utility evaluation, cached or not); `backend_requests()`
/// counts calls that reached the backend; `cache_hits()` the rest.
class Gateway {
 public:
  Gateway(GeneratorConfig config, std::unique_ptr<GeneratorBackend> backend);

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Builds the backend named by `config` (loading the SimWorld for the
  /// simulated backend).
  static std::unique_ptr<Gateway> create(const GeneratorConfig& config);

  GeneratorResponse generate(const Query& query, const ContextList& contexts);

  /// Log-probability of each answer continuation. Counts as one evaluation.
  std::vector<double> score_answers(const Query& query, const ContextList& contexts,
                                    const std::vector<std::string>& answers);

  double score_answer(const Query& query, const ContextList& contexts, const std::string& answer) {
    return score_answers(query, contexts, {answer}).front();
  }

  const GeneratorConfig& config() const { return config_; }
  const GeneratorBackend& backend() const { return *backend_; }

  std::size_t evaluations() const { return evaluations_.load(); }
  std::size_t backend_requests() const { return backend_requests_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }
  void reset_counters();

 private:
  nlohmann::json key_material(std::string_view kind, const Query& query, const ContextList& contexts,
                              const std::string& prompt) const;

  GeneratorConfig config_;
  std::unique_ptr<GeneratorBackend> backend_;
  ResponseCache cache_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::size_t> evaluations_{0};
  std::atomic<std::size_t> backend_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

void to_json(nlohmann::json& j, const GeneratorResponse& r);
void from_json(const nlohmann::json& j, GeneratorResponse& r);

}  // namespace ctxval::gateway
