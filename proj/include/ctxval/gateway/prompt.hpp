#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ctxval/core/types.hpp"

namespace ctxval::gateway {

/// Named, versioned prompt templates. The id is part of every cache key, so a
/// template's rendering must never change once released; add a new version
/// instead.
///
///   numbered-v1  instruction, "Doc i: <text>" blocks, question, "Answer:".
///                With no contexts the document block is omitted.
///   bare-v1      question only, contexts appended as plain paragraphs.
std::string render_prompt(std::string_view template_id, const Query& query, const ContextList& contexts);

std::vector<std::string> prompt_template_ids();

}  // namespace ctxval::gateway
