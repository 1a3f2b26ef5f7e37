// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mtr/common.hpp"

namespace mtr {

/// Per-term document frequencies plus corpus size and average length,
/// computed over whichever document collection is being scored.
struct CorpusStats {
    std::unordered_map<std::string, int> document_frequency;
    int doc_count = 0;
    double avg_doc_length = 0.0;

    static CorpusStats build(const std::vector<std::vector<std::string>>& docs);
    int df(const std::string& term) const;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Okapi BM25 with the +1 idf smoothing variant, which keeps the score
/// non-negative: idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
double bm25_score(const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& doc_tokens, const CorpusStats& stats,
                  const Bm25Params& params = {});

}  // namespace mtr
