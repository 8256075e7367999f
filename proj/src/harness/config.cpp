#include "ctxval/harness/config.hpp"

#include <cctype>
#include <cmath>
#include <set>

#include "ctxval/core/error.hpp"
#include "ctxval/core/json_io.hpp"

namespace ctxval::harness {

using nlohmann::json;

namespace {

class ValueParser {
 public:
  ValueParser(std::string_view text, std::size_t pos) : s_(text), pos_(pos) {}

  json value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true" && boundary(pos_ + 4)) {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false" && boundary(pos_ + 5)) {
      pos_ += 5;
      return false;
    }
    return number();
  }

  /// Only whitespace and an optional comment may follow.
  void finish() {
    skip_space();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("unexpected text after value");
  }

  std::size_t pos() const { return pos_; }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(what); }

  bool boundary(std::size_t p) const {
    return p >= s_.size() || !(std::isalnum(static_cast<unsigned char>(s_[p])) || s_[p] == '_');
  }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  json basic_string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      switch (s_[pos_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        default: fail("unsupported escape sequence");
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  json literal_string() {
    const std::size_t end = s_.find('\'', pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  json array() {
    json out = json::array();
    ++pos_;
    for (;;) {
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
      } else if (pos_ >= s_.size() || s_[pos_] != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '_')) {
      ++pos_;
    }
    std::string tok;
    for (char c : s_.substr(start, pos_ - start)) {
      if (c != '_') tok += c;
    }
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double d = std::stod(tok, &used);
        if (used == tok.size() && std::isfinite(d)) return d;
      } else {
        const long long i = std::stoll(tok, &used);
        if (used == tok.size()) return i;
      }
    } catch (const std::exception&) {
    }
    fail("invalid value '" + tok + "'");
  }

  std::string_view s_;
  std::size_t pos_;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace

json parse_toml(std::string_view text, const std::string& source) {
  json doc = json::object();
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      if (t.front() == '[') {
        const std::size_t close = t.find(']');
        if (close == std::string_view::npos) throw ConfigError("unterminated section header");
        const std::string_view rest = trim(t.substr(close + 1));
        if (!rest.empty() && rest.front() != '#') throw ConfigError("unexpected text after section header");
        section = std::string(trim(t.substr(1, close - 1)));
        if (!bare_key(section)) throw ConfigError("unsupported section name '" + section + "'");
        if (doc.contains(section)) throw ConfigError("duplicate section [" + section + "]");
        doc[section] = json::object();
        if (end == text.size()) break;
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected key = value");
      std::string key(trim(line.substr(0, eq)));
      if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
      else if (!bare_key(key)) throw ConfigError("unsupported key '" + key + "' (dotted keys are not supported)");
      ValueParser vp(line, eq + 1);
      json v = vp.value();
      vp.finish();
      json& sec = doc[section];
      if (sec.is_null()) sec = json::object();
      if (sec.contains(key)) throw ConfigError("duplicate key '" + key + "'");
      sec[key] = std::move(v);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (end == text.size()) break;
  }
  return doc;
}

json parse_override_value(std::string_view text) {
  try {
    ValueParser vp(text, 0);
    json v = vp.value();
    vp.finish();
    return v;
  } catch (const ConfigError&) {
    return std::string(text);
  }
}

std::string_view to_string(Order o) { return o == Order::Ascending ? "ascending" : "descending"; }

Order order_from_string(std::string_view s) {
  if (s == "descending") return Order::Descending;
  if (s == "ascending") return Order::Ascending;
  throw ConfigError("unknown order '" + std::string(s) + "' (expected descending or ascending)");
}

namespace {

/// Typed, tracked access to one section; reports keys nobody read.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (auto it = doc.find(name_); it != doc.end()) values_ = *it;
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name_ + "." + key + " has the wrong type");
    }
  }

  void read_double(const char* key, double& out) {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return;
    if (!it->is_number()) throw ConfigError(name_ + "." + key + " must be a number");
    out = it->get<double>();
  }

  void read_size(const char* key, std::size_t& out) {
    auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return;
    if (!it->is_number_integer() || it->get<long long>() < 0) {
      throw ConfigError(name_ + "." + key + " must be a non-negative integer");
    }
    out = it->get<std::size_t>();
  }

  void read_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    read(key, s);
    if (!s.empty()) out = resolve(s, base);
  }

  static std::filesystem::path resolve(const std::string& s, const std::filesystem::path& base) {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : (base / p).lexically_normal();
  }

  void finish() const {
    for (const auto& [k, v] : values_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key " + name_ + "." + k);
    }
  }

 private:
  std::string name_;
  json values_ = json::object();
  std::set<std::string> used_;
};

}  // namespace

RunConfig run_config_from_toml(const json& doc, const std::filesystem::path& config_dir) {
  static const std::set<std::string> known{"run", "generator", "forge", "csm", "embeddings", "scores"};
  for (const auto& [name, v] : doc.items()) {
    if (!known.count(name)) throw ConfigError(name.empty() ? "keys outside any section" : "unknown section [" + name + "]");
  }
  RunConfig c;
  c.config_dir = config_dir;
  c.output_dir = config_dir / "out";

  Section run(doc, "run");
  run.read_path("dataset", c.dataset, config_dir);
  run.read_path("output_dir", c.output_dir, config_dir);
  run.read("seed", c.seed);
  std::string s;
  run.read("utility", s);
  if (!s.empty()) c.utility.kind = valuation::utility_kind_from_string(s);
  s.clear();
  run.read("utility_metric", s);
  if (!s.empty()) c.utility.metric = metrics::metric_kind_from_string(s);
  s.clear();
  run.read("task_metric", s);
  if (!s.empty()) c.task_metric = metrics::metric_kind_from_string(s);
  run.read("scorer", c.scorer);
  s.clear();
  run.read("order", s);
  if (!s.empty()) c.order = order_from_string(s);
  run.read_size("top_k", c.top_k);
  run.read_size("max_samples", c.max_samples);
  run.read("curve_measure", c.curve_measure);
  s.clear();
  run.read("dedup", s);
  if (s == "embedding") c.dedup = valuation::DedupKind::EmbeddingCosine;
  else if (!s.empty() && s != "text") throw ConfigError("run.dedup must be text or embedding");
  run.read_double("dedup_threshold", c.dedup_threshold);
  run.finish();

  Section gen(doc, "generator");
  auto& g = c.generator;
  s.clear();
  gen.read("backend", s);
  if (!s.empty()) g.backend = gateway::backend_kind_from_string(s);
  gen.read("endpoint", g.endpoint);
  gen.read("api_key_env", g.api_key_env);
  gen.read("forced_scoring", g.forced_scoring);
  gen.read("max_retries", g.max_retries);
  gen.read_double("backoff_initial_s", g.backoff_initial_s);
  gen.read_double("timeout_s", g.timeout_s);
  gen.read_path("world", g.world_path, config_dir);
  gen.read("model", g.model);
  gen.read("template", g.template_id);
  gen.read_double("temperature", g.decoding.temperature);
  gen.read("max_tokens", g.decoding.max_tokens);
  gen.read("concurrency", g.concurrency);
  gen.read_path("cache_dir", g.cache_dir, config_dir);
  gen.finish();

  Section fg(doc, "forge");
  auto& f = c.forge;
  f.seed = c.seed;
  fg.read_double("alpha", f.alpha);
  fg.read_double("delta1", f.delta1);
  fg.read_double("delta2", f.delta2);
  fg.read_double("keep_rate", f.keep_rate);
  fg.read_double("gamma", f.gamma);
  fg.read_double("epsilon1", f.epsilon1);
  fg.read_double("epsilon2", f.epsilon2);
  fg.read_size("max_negatives", f.max_negatives);
  fg.read_size("bin_count", f.bin_count);
  fg.read_size("donor_subset_size", f.donor_subset_size);
  fg.read_double("distinct_cosine", f.distinct_cosine);
  fg.read("scale", f.scale);
  fg.read("recompute", f.recompute);
  fg.read("intervene_low", f.intervene_low);
  fg.finish();

  Section csm(doc, "csm");
  csm.read_path("weights", c.csm_weights, config_dir);
  csm.finish();

  Section emb(doc, "embeddings");
  auto& e = c.embeddings;
  emb.read("backend", e.backend);
  emb.read_path("path", e.path, config_dir);
  emb.read("endpoint", e.endpoint);
  emb.read("model", e.model);
  emb.read("dimension", e.dimension);
  emb.read("api_key_env", e.api_key_env);
  emb.finish();

  Section sc(doc, "scores");
  sc.read_path("path", c.scores_path, config_dir);
  sc.finish();

  c.validate();
  return c;
}

void RunConfig::validate() const {
  generator.validate();
  forge.validate();
  static const std::set<std::string> scorers{"oracle-ci", "csm", "external-score-file", "random"};
  if (!scorers.count(scorer)) {
    throw ConfigError("unknown run.scorer '" + scorer + "' (expected oracle-ci, csm, external-score-file or random)");
  }
  if (curve_measure != "metric" && curve_measure != "utility") {
    throw ConfigError("run.curve_measure must be metric or utility");
  }
  if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0)) throw ConfigError("run.dedup_threshold must lie in (0, 1]");
  if (!embeddings.backend.empty() && embeddings.backend != "file" && embeddings.backend != "remote") {
    throw ConfigError("embeddings.backend must be file or remote");
  }
  if (embeddings.backend == "remote" && (embeddings.endpoint.empty() || embeddings.dimension < 1)) {
    throw ConfigError("remote embeddings need embeddings.endpoint and a positive embeddings.dimension");
  }
  if (generator.backend == gateway::BackendKind::Simulated && !std::filesystem::exists(generator.world_path)) {
    throw ConfigError("generator.world not found: " + generator.world_path.string());
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  json doc = parse_toml(text, path.string());
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' must look like section.key=value");
    }
    const std::string section = o.substr(0, dot);
    const std::string key = o.substr(dot + 1, eq - dot - 1);
    if (!bare_key(section) || !bare_key(key)) throw ConfigError("override '" + o + "' has an invalid key");
    doc[section][key] = parse_override_value(o.substr(eq + 1));
  }
  return run_config_from_toml(doc, std::filesystem::absolute(path).parent_path());
}

}  // namespace ctxval::harness
