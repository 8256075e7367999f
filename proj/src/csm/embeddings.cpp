#include "ctxval/csm/embeddings.hpp"

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"

namespace ctxval::csm {

using nlohmann::json;

namespace {

Eigen::VectorXd to_vector(const json& j) {
  const auto values = j.get<std::vector<double>>();
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

}  // namespace

FileEmbeddings::FileEmbeddings(const std::filesystem::path& path) {
  std::size_t line = 0;
  for (const auto& rec : read_jsonl(path)) {
    ++line;
    const std::string where = path.string() + " record " + std::to_string(line);
    Eigen::VectorXd v;
    std::string qid;
    try {
      qid = rec.at("query_id").get<std::string>();
      v = to_vector(rec.at("vector"));
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (v.size() == 0 || !v.allFinite()) throw DataError(where + ": vector must be non-empty and finite");
    if (dimension_ == 0) dimension_ = static_cast<int>(v.size());
    if (v.size() != dimension_) {
      throw DataError(where + ": dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dimension_));
    }
    if (auto it = rec.find("context_id"); it != rec.end() && !it->is_null()) {
      if (!pairs_.emplace(std::make_pair(qid, it->get<std::string>()), std::move(v)).second) {
        throw DataError(where + ": duplicate vector for (" + qid + ", " + it->get<std::string>() + ")");
      }
    } else if (!queries_.emplace(qid, std::move(v)).second) {
      throw DataError(where + ": duplicate query vector for " + qid);
    }
  }
}

std::vector<Eigen::VectorXd> FileEmbeddings::embed_pairs(const Query& query, const ContextList& contexts) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(contexts.size());
  for (const auto& c : contexts) {
    auto it = pairs_.find({query.id, c.id});
    if (it == pairs_.end()) {
      throw DataError("no embedding for pair (query " + query.id + ", context " + c.id + ")");
    }
    out.push_back(it->second);
  }
  return out;
}

std::optional<Eigen::VectorXd> FileEmbeddings::query_vector(const std::string& query_id) const {
  auto it = queries_.find(query_id);
  if (it == queries_.end()) return std::nullopt;
  return it->second;
}

RemoteEmbeddings::RemoteEmbeddings(std::string endpoint, std::string model, int dimension, std::string api_key_env,
                                   gateway::RetryPolicy policy)
    : target_(gateway::HttpTarget::parse(endpoint)),
      model_(std::move(model)),
      dimension_(dimension),
      api_key_env_(std::move(api_key_env)),
      policy_(policy) {}

std::vector<Eigen::VectorXd> RemoteEmbeddings::embed_pairs(const Query& query, const ContextList& contexts) {
  if (contexts.empty()) return {};
  json inputs = json::array();
  for (const auto& c : contexts) inputs.push_back(query.text + " [SEP] " + c.text);
  const json res = gateway::post_json(target_, "/embeddings", json{{"model", model_}, {"input", inputs}},
                                      gateway::api_key_from_env(api_key_env_), policy_);
  std::vector<Eigen::VectorXd> out(contexts.size());
  std::vector<bool> seen(contexts.size(), false);
  try {
    const auto& data = res.at("data");
    if (data.size() != contexts.size()) {
      throw GatewayError("embedding endpoint returned " + std::to_string(data.size()) + " vectors for " +
                         std::to_string(contexts.size()) + " inputs");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      const std::size_t idx = data[k].value("index", k);
      if (idx >= out.size() || seen[idx]) throw GatewayError("embedding endpoint returned a bad index");
      seen[idx] = true;
      out[idx] = to_vector(data[k].at("embedding"));
      if (out[idx].size() != dimension_) {
        throw GatewayError("embedding endpoint returned dimension " + std::to_string(out[idx].size()) + ", expected " +
                           std::to_string(dimension_));
      }
    }
  } catch (const json::exception& e) {
    throw GatewayError(std::string("unexpected embeddings response: ") + e.what());
  }
  return out;
}

}  // namespace ctxval::csm
