#pragma once

#include <array>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <json.hpp>

namespace ctxval::gateway {

/// Two-level response cache: an in-memory map backed, when a directory is
/// configured, by one JSON file per key ({key}.json holding the key material
/// and the stored value). Keys are SHA-256 digests of the key material.
///
/// Lookups and fills for the same key are serialized, so concurrent callers
/// asking for one key trigger a single computation.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir = {});

  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  static std::string key_for(const nlohmann::json& material);

  /// Returns the cached value for `material`, computing and storing it on a
  /// miss. `hit` reports which path was taken.
  template <typename Compute>
  nlohmann::json get_or_compute(const nlohmann::json& material, Compute&& compute, bool& hit) {
    const std::string key = key_for(material);
    std::lock_guard stripe(stripes_[std::hash<std::string>{}(key) % stripes_.size()]);
    if (auto found = lookup(key)) {
      hit = true;
      return *found;
    }
    hit = false;
    nlohmann::json value = compute();
    store(key, material, value);
    return value;
  }

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::optional<nlohmann::json> lookup(const std::string& key);
  void store(const std::string& key, const nlohmann::json& material, const nlohmann::json& value);

  std::filesystem::path dir_;
  std::mutex map_mutex_;
  std::unordered_map<std::string, nlohmann::json> memory_;
  std::array<std::mutex, 64> stripes_;
};

}  // namespace ctxval::gateway
