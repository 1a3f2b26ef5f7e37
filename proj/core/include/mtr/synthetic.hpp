// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Seeded synthetic corpora with controlled relevance structure, each
/// isolating one retrieval failure mode:
///   exact_match     - relevant documents contain the query tokens,
///                     non-relevant ones share none (lexical overlap wins);
///   order_sensitive - relevant documents contain the query phrase in
///                     order, non-relevant twins carry the same token
///                     multiset permuted (word order is the only signal);
///   semantic        - relevant documents use synonym tokens from the same
///                     embedding clusters with zero lexical overlap.
/// Each task ships a matching embedding file.

#pragma once

#include <string>

#include "mtr/dataset.hpp"

namespace mtr {

enum class TaskKind { exact_match, order_sensitive, semantic };

TaskKind task_from_string(const std::string& s);
const char* task_name(TaskKind k);

struct GradeDistribution {
    double vital = 0.10;
    double relevant = 0.35;  // remainder is NONRELEVANT
};

struct SyntheticTaskSpec {
    TaskKind kind = TaskKind::exact_match;
    int vocab_size = 400;
    int train_queries = 300;
    int validation_queries = 60;
    int test_queries = 120;
    int results_per_query = 17;
    GradeDistribution grades;
    std::uint64_t seed = 0;
    int embedding_dim = 24;
    int doc_len_lo = 20, doc_len_hi = 120;
    int query_len_lo = 2, query_len_hi = 6;
    /// order_sensitive only: fraction of non-relevant documents that keep
    /// just one query token instead of a permuted twin. This leaves BM25 a
    /// thin slice of real signal (AUC stays within 0.5 +- 0.05) that an
    /// order-aware model subsumes but a purely semantic one does not.
    double lexical_gap_fraction = 0.08;
    /// semantic only: tokens per embedding cluster.
    int cluster_size = 8;
};

struct SyntheticOutput {
    DatasetSplit dataset;
    std::string embedding_file;  // full text in the interchange format
};

/// Fully seeded; identical (spec, seed) produce byte-identical outputs.
/// Every query group contains at least one relevant and one non-relevant
/// result. Throws ValueError when the vocabulary cannot supply the
/// requested number of distinct queries.
SyntheticOutput generate_synthetic(const SyntheticTaskSpec& spec);

}  // namespace mtr
