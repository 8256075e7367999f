#pragma once

#include <vector>

#include "ctxval/core/types.hpp"
#include "ctxval/csm/embeddings.hpp"
#include "ctxval/csm/weights.hpp"

namespace ctxval::csm {

/// embed_pairs -> global_forward -> score, in double precision.
std::vector<double> csm_scores(const Query& query, const ContextList& contexts, const CsmWeights<double>& weights,
                               EmbeddingProvider& provider);

/// Keeps the contexts whose predicted score is positive.
SelectionResult csm_select(const Query& query, const ContextList& contexts, const CsmWeights<double>& weights,
                           EmbeddingProvider& provider);

}  // namespace ctxval::csm
