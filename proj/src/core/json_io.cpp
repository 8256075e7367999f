#include "ctxval/core/json_io.hpp"

#include <fstream>
#include <sstream>

#include "ctxval/core/error.hpp"

namespace ctxval {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(key, "missing field");
  return *it;
}

std::string require_string(const json& j, const char* key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ValidationError(key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

void to_json(json& j, const Context& c) {
  j = json{{"id", c.id}, {"text", c.text}};
  if (c.origin) j["origin"] = *c.origin;
}

void from_json(const json& j, Context& c) {
  if (!j.is_object()) throw ValidationError("contexts", "expected an object");
  c.id = require_string(j, "id");
  c.text = require_string(j, "text");
  c.origin.reset();
  if (auto it = j.find("origin"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("origin", "expected a string");
    c.origin = it->get<std::string>();
  }
}

void to_json(json& j, const Sample& s) {
  j = json{{"id", s.query.id}, {"query", s.query.text}, {"answers", s.answers.answers}};
  j["contexts"] = s.contexts;
  if (s.ci) j["ci"] = *s.ci;
  if (!s.meta.empty()) j["meta"] = s.meta;
}

void from_json(const json& j, Sample& s) {
  if (!j.is_object()) throw ValidationError("sample", "expected an object");
  s.query.id = require_string(j, "id");
  s.query.text = require_string(j, "query");
  const json& answers = require(j, "answers");
  if (!answers.is_array()) throw ValidationError("answers", "expected an array");
  s.answers.answers.clear();
  for (const auto& a : answers) {
    if (!a.is_string()) throw ValidationError("answers", "expected strings");
    s.answers.answers.push_back(a.get<std::string>());
  }
  const json& contexts = require(j, "contexts");
  if (!contexts.is_array()) throw ValidationError("contexts", "expected an array");
  s.contexts = contexts.get<ContextList>();
  s.ci.reset();
  if (auto it = j.find("ci"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("ci", "expected an array");
    CIVector ci;
    for (const auto& v : *it) {
      if (!v.is_number()) throw ValidationError("ci", "expected numbers");
      ci.push_back(v.get<double>());
    }
    s.ci = std::move(ci);
  }
  s.meta = json::object();
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) s.meta = *it;
}

void to_json(json& j, const SelectionResult& r) {
  j = json{{"kept_ids", r.kept_ids}, {"scores", r.scores}, {"strategy", to_string(r.strategy)}};
}

void from_json(const json& j, SelectionResult& r) {
  r.kept_ids = require(j, "kept_ids").get<std::vector<std::string>>();
  r.scores = require(j, "scores").get<std::vector<double>>();
  r.strategy = selection_strategy_from_string(require_string(j, "strategy"));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::string body;
  for (const auto& r : records) {
    body += r.dump();
    body.push_back('\n');
  }
  write_file_atomic(path, body);
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
  const auto records = read_jsonl(path);
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      samples.push_back(validate_sample(records[i].get<Sample>()));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return samples;
}

void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::vector<json> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.emplace_back(s);
  write_jsonl(path, records);
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_file_atomic(path, doc.dump(2) + "\n");
}

}  // namespace ctxval
