#include "ctxval/gateway/prompt.hpp"

#include <fmt/format.h>

#include "ctxval/core/error.hpp"

namespace ctxval::gateway {

namespace {

std::string numbered_v1(const Query& query, const ContextList& contexts) {
  std::string out =
      "Answer the question based on the given documents. "
      "Only give me the answer and do not output any other words.\n\n";
  if (!contexts.empty()) {
    out += "The following are given documents.\n\n";
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      out += fmt::format("Doc {}: {}\n", i + 1, contexts[i].text);
    }
    out += "\n";
  }
  out += fmt::format("Question: {}\nAnswer:", query.text);
  return out;
}

std::string bare_v1(const Query& query, const ContextList& contexts) {
  std::string out;
  for (const auto& c : contexts) {
    out += c.text;
    out += "\n\n";
  }
  out += query.text;
  return out;
}

}  // namespace

std::string render_prompt(std::string_view template_id, const Query& query, const ContextList& contexts) {
  if (template_id == "numbered-v1") return numbered_v1(query, contexts);
  if (template_id == "bare-v1") return bare_v1(query, contexts);
  throw ConfigError("unknown prompt template '" + std::string(template_id) + "'");
}

std::vector<std::string> prompt_template_ids() { return {"numbered-v1", "bare-v1"}; }

}  // namespace ctxval::gateway
