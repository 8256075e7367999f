#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxval/core/types.hpp"

namespace ctxval {

// nlohmann ADL hooks. Field names follow the JSON Lines sample schema:
// {"id","query","answers","contexts":[{"id","text","origin"?}],"ci"?,"meta"?}
void to_json(nlohmann::json& j, const Context& c);
void from_json(const nlohmann::json& j, Context& c);
void to_json(nlohmann::json& j, const Sample& s);
void from_json(const nlohmann::json& j, Sample& s);
void to_json(nlohmann::json& j, const SelectionResult& r);
void from_json(const nlohmann::json& j, SelectionResult& r);

/// Parses one JSON document per non-blank line. Parse failures raise DataError
/// carrying the file name and line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

/// Reads and validates samples.
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Writes `contents` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ctxval
