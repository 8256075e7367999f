#include "ctxval/csm/select.hpp"

#include "ctxval/csm/forward.hpp"
#include "ctxval/valuation.hpp"

namespace ctxval::csm {

std::vector<double> csm_scores(const Query& query, const ContextList& contexts, const CsmWeights<double>& weights,
                               EmbeddingProvider& provider) {
  if (contexts.empty()) return {};
  const auto L = provider.embed_pairs(query, contexts);
  return score(global_forward(L, weights), weights);
}

SelectionResult csm_select(const Query& query, const ContextList& contexts, const CsmWeights<double>& weights,
                           EmbeddingProvider& provider) {
  const auto s = csm_scores(query, contexts, weights, provider);
  auto r = valuation::select_positive(contexts, s);
  r.strategy = SelectionStrategy::ExternalScore;
  return r;
}

}  // namespace ctxval::csm
