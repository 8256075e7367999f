#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ctxval/core/types.hpp"
#include "ctxval/gateway/remote.hpp"

namespace ctxval::csm {

/// Source of local embeddings l_i for (query, context) pairs.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string tag() const = 0;
  virtual int dimension() const = 0;

  /// One vector per context, in list order. Throws DataError naming the first
  /// unresolvable pair.
  virtual std::vector<Eigen::VectorXd> embed_pairs(const Query& query, const ContextList& contexts) = 0;

  /// Embedding of the query alone, when the provider has one.
  virtual std::optional<Eigen::VectorXd> query_vector(const std::string& query_id) const { return std::nullopt; }
};

/// JSON Lines of {"query_id","context_id","vector"}. Lines without a
/// "context_id" hold the query's own vector.
class FileEmbeddings final : public EmbeddingProvider {
 public:
  explicit FileEmbeddings(const std::filesystem::path& path);

  std::string tag() const override { return "file"; }
  int dimension() const override { return dimension_; }
  std::vector<Eigen::VectorXd> embed_pairs(const Query& query, const ContextList& contexts) override;
  std::optional<Eigen::VectorXd> query_vector(const std::string& query_id) const override;

  const std::map<std::string, Eigen::VectorXd>& query_vectors() const { return queries_; }

 private:
  int dimension_ = 0;
  std::map<std::pair<std::string, std::string>, Eigen::VectorXd> pairs_;
  std::map<std::string, Eigen::VectorXd> queries_;
};

/// OpenAI-compatible {base}/embeddings endpoint. Each pair is sent as the
/// string "query [SEP] context"; the endpoint is expected to return the
/// mean-pooled encoding.
class RemoteEmbeddings final : public EmbeddingProvider {
 public:
  RemoteEmbeddings(std::string endpoint, std::string model, int dimension, std::string api_key_env,
                   gateway::RetryPolicy policy = {});

  std::string tag() const override { return "remote"; }
  int dimension() const override { return dimension_; }
  std::vector<Eigen::VectorXd> embed_pairs(const Query& query, const ContextList& contexts) override;

 private:
  gateway::HttpTarget target_;
  std::string model_;
  int dimension_;
  std::string api_key_env_;
  gateway::RetryPolicy policy_;
};

}  // namespace ctxval::csm
