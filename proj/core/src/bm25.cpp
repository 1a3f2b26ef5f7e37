// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/bm25.hpp"

#include <cmath>
#include <unordered_set>

namespace mtr {

CorpusStats CorpusStats::build(const std::vector<std::vector<std::string>>& docs) {
    if (docs.empty()) throw ValueError("CorpusStats: empty corpus");
    CorpusStats stats;
    stats.doc_count = static_cast<int>(docs.size());
    std::size_t total_len = 0;
    for (const auto& doc : docs) {
        total_len += doc.size();
        std::unordered_set<std::string> seen;
        for (const auto& term : doc) {
            if (seen.insert(term).second) ++stats.document_frequency[term];
        }
    }
    stats.avg_doc_length = static_cast<double>(total_len) / static_cast<double>(docs.size());
    if (stats.avg_doc_length <= 0.0) throw ValueError("CorpusStats: corpus has no tokens");
    return stats;
}

int CorpusStats::df(const std::string& term) const {
    auto it = document_frequency.find(term);
    return it == document_frequency.end() ? 0 : it->second;
}

double bm25_score(const std::vector<std::string>& query_tokens,
                  const std::vector<std::string>& doc_tokens, const CorpusStats& stats,
                  const Bm25Params& params) {
    if (stats.doc_count <= 0) throw ValueError("bm25_score: stats built over an empty corpus");
    if (params.k1 < 0.0 || params.b < 0.0 || params.b > 1.0) {
        throw ValueError(msg("bm25_score: parameters out of range: k1=", params.k1, " b=", params.b));
    }
    std::unordered_map<std::string, int> tf;
    for (const auto& t : doc_tokens) ++tf[t];
    const double n = static_cast<double>(stats.doc_count);
    const double len_norm =
        1.0 - params.b + params.b * static_cast<double>(doc_tokens.size()) / stats.avg_doc_length;

    // Duplicate query terms contribute once per occurrence, as in the
    // standard sum over query terms.
    double score = 0.0;
    for (const auto& term : query_tokens) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        const double f = static_cast<double>(it->second);
        const double df = static_cast<double>(stats.df(term));
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        score += idf * f * (params.k1 + 1.0) / (f + params.k1 * len_norm);
    }
    return score;
}

}  // namespace mtr
