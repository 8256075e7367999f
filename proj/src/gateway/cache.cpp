#include "ctxval/gateway/cache.hpp"

#include "ctxval/core/json_io.hpp"
#include "ctxval/util/hash.hpp"

namespace ctxval::gateway {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key_for(const nlohmann::json& material) { return sha256_hex(material.dump()); }

std::optional<nlohmann::json> ResponseCache::lookup(const std::string& key) {
  {
    std::lock_guard lock(map_mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (dir_.empty()) return std::nullopt;
  const auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  nlohmann::json entry;
  try {
    entry = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // torn or foreign file: recompute and overwrite
  }
  if (!entry.contains("value")) return std::nullopt;
  std::lock_guard lock(map_mutex_);
  return memory_.emplace(key, entry["value"]).first->second;
}

void ResponseCache::store(const std::string& key, const nlohmann::json& material, const nlohmann::json& value) {
  if (!dir_.empty()) {
    nlohmann::json entry{{"key", material}, {"value", value}};
    write_file_atomic(dir_ / (key + ".json"), entry.dump());
  }
  std::lock_guard lock(map_mutex_);
  memory_[key] = value;
}

}  // namespace ctxval::gateway
