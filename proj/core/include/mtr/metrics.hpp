// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Graded-relevance evaluation: NDCG@k, ERR, ROC AUC, and precision-recall
/// points, plus the report aggregation used by evaluation runs.

#pragma once

#include <string>
#include <vector>

#include "mtr/common.hpp"

namespace mtr {

/// Three-level relevance scale. The numeric values feed the gain and
/// stopping-probability formulas directly.
enum class RelevanceGrade : int { kNonrelevant = 0, kRelevant = 1, kVital = 2 };

inline constexpr int kMaxGrade = 2;

RelevanceGrade grade_from_string(const std::string& s);  // throws ValueError on unknown names
const char* grade_name(RelevanceGrade g);

/// Binary view used for AUC and binary training targets.
inline bool grade_is_positive(RelevanceGrade g) { return static_cast<int>(g) >= 1; }

/// NDCG@k over grades in ranked order, with gain 2^g - 1 and discount
/// 1/log2(rank + 1). Returns -1 for an all-zero-grade list (such queries
/// are flagged and excluded from aggregation rather than scored).
double ndcg_at_k(const std::vector<RelevanceGrade>& ranked, int k);

/// Expected reciprocal rank with stopping probability (2^g - 1) / 2^g_max.
double err(const std::vector<RelevanceGrade>& ranked);

/// Probability that a random positive outscores a random negative, ties
/// counted half. Throws ValueError when either class is empty.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

/// Precision/recall swept over score thresholds, highest threshold first.
std::vector<PrPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& labels);

/// One scored (query, document, grade) row ready for metric aggregation.
struct ScoredRecord {
    std::string query;
    double score = 0.0;
    RelevanceGrade grade = RelevanceGrade::kNonrelevant;
};

struct QueryMetrics {
    std::string query;
    double ndcg1 = 0.0, ndcg3 = 0.0, ndcg10 = 0.0;
    double err_value = 0.0;
    bool all_nonrelevant = false;  // excluded from NDCG aggregation
};

struct MetricsReport {
    std::vector<QueryMetrics> per_query;
    double mean_ndcg1 = 0.0, mean_ndcg3 = 0.0, mean_ndcg10 = 0.0;
    double mean_err = 0.0;
    double auc = 0.0;
    std::vector<PrPoint> pr;
    double test_loss = 0.0;       // filled by callers that also track a loss
    int flagged_queries = 0;      // all-nonrelevant query groups
};

/// Groups records by query string, ranks each group by descending score
/// (stable on ties), and aggregates. AUC is computed globally over all
/// records.
MetricsReport compute_metrics(const std::vector<ScoredRecord>& records);

}  // namespace mtr
