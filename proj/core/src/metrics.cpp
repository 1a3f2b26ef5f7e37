// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace mtr {

RelevanceGrade grade_from_string(const std::string& s) {
    if (s == "NONRELEVANT") return RelevanceGrade::kNonrelevant;
    if (s == "RELEVANT") return RelevanceGrade::kRelevant;
    if (s == "VITAL") return RelevanceGrade::kVital;
    throw ValueError(msg("unknown relevance grade \"", s, "\""));
}

const char* grade_name(RelevanceGrade g) {
    switch (g) {
        case RelevanceGrade::kNonrelevant: return "NONRELEVANT";
        case RelevanceGrade::kRelevant: return "RELEVANT";
        case RelevanceGrade::kVital: return "VITAL";
    }
    return "NONRELEVANT";
}

namespace {

double gain(RelevanceGrade g) {
    return std::exp2(static_cast<double>(static_cast<int>(g))) - 1.0;
}

double dcg_at_k(const std::vector<RelevanceGrade>& ranked, int k) {
    double acc = 0.0;
    const int n = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < n; ++r) {
        acc += gain(ranked[static_cast<std::size_t>(r)]) / std::log2(static_cast<double>(r) + 2.0);
    }
    return acc;
}

}  // namespace

double ndcg_at_k(const std::vector<RelevanceGrade>& ranked, int k) {
    if (k < 1) throw ValueError(msg("ndcg_at_k: k must be >= 1, got ", k));
    std::vector<RelevanceGrade> ideal = ranked;
    std::sort(ideal.begin(), ideal.end(),
              [](RelevanceGrade a, RelevanceGrade b) { return static_cast<int>(a) > static_cast<int>(b); });
    const double idcg = dcg_at_k(ideal, k);
    if (idcg == 0.0) return -1.0;
    return dcg_at_k(ranked, k) / idcg;
}

double err(const std::vector<RelevanceGrade>& ranked) {
    if (ranked.empty()) throw ValueError("err: empty ranking");
    const double denom = std::exp2(static_cast<double>(kMaxGrade));
    double acc = 0.0;
    double not_stopped = 1.0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const double stop = gain(ranked[r]) / denom;
        acc += not_stopped * stop / (static_cast<double>(r) + 1.0);
        not_stopped *= 1.0 - stop;
    }
    return acc;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) {
        throw ValueError(msg("roc_auc: ", scores.size(), " scores vs ", labels.size(), " labels"));
    }
    std::size_t pos = 0;
    for (bool l : labels) pos += l ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) {
        throw ValueError("roc_auc: needs at least one positive and one negative");
    }
    // Rank-sum formulation with midranks for ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]]) pos_rank_sum += midrank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos), n = static_cast<double>(neg);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

std::vector<PrPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ValueError("pr_curve: scores and labels must be non-empty and parallel");
    }
    std::size_t total_pos = 0;
    for (bool l : labels) total_pos += l ? 1 : 0;
    if (total_pos == 0) throw ValueError("pr_curve: no positives");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<PrPoint> points;
    std::size_t tp = 0, taken = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t <= j; ++t) {
            ++taken;
            if (labels[order[t]]) ++tp;
        }
        points.push_back(PrPoint{scores[order[i]], static_cast<double>(tp) / static_cast<double>(taken),
                                 static_cast<double>(tp) / static_cast<double>(total_pos)});
        i = j + 1;
    }
    return points;
}

MetricsReport compute_metrics(const std::vector<ScoredRecord>& records) {
    if (records.empty()) throw ValueError("compute_metrics: no records");

    // std::map keeps query iteration order deterministic.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].query].push_back(i);

    MetricsReport report;
    double sum1 = 0.0, sum3 = 0.0, sum10 = 0.0, sum_err = 0.0;
    int scored_queries = 0;
    for (auto& [query, idxs] : groups) {
        std::stable_sort(idxs.begin(), idxs.end(), [&records](std::size_t a, std::size_t b) {
            return records[a].score > records[b].score;
        });
        std::vector<RelevanceGrade> ranked;
        ranked.reserve(idxs.size());
        for (std::size_t i : idxs) ranked.push_back(records[i].grade);

        QueryMetrics qm;
        qm.query = query;
        qm.err_value = err(ranked);
        const double n1 = ndcg_at_k(ranked, 1);
        if (n1 < 0.0) {
            qm.all_nonrelevant = true;
            ++report.flagged_queries;
        } else {
            qm.ndcg1 = n1;
            qm.ndcg3 = ndcg_at_k(ranked, 3);
            qm.ndcg10 = ndcg_at_k(ranked, 10);
            sum1 += qm.ndcg1;
            sum3 += qm.ndcg3;
            sum10 += qm.ndcg10;
            ++scored_queries;
        }
        sum_err += qm.err_value;
        report.per_query.push_back(std::move(qm));
    }
    if (scored_queries > 0) {
        report.mean_ndcg1 = sum1 / scored_queries;
        report.mean_ndcg3 = sum3 / scored_queries;
        report.mean_ndcg10 = sum10 / scored_queries;
    }
    report.mean_err = sum_err / static_cast<double>(groups.size());

    std::vector<double> scores;
    std::vector<bool> labels;
    scores.reserve(records.size());
    labels.reserve(records.size());
    for (const auto& r : records) {
        scores.push_back(r.score);
        labels.push_back(grade_is_positive(r.grade));
    }
    report.auc = roc_auc(scores, labels);
    report.pr = pr_curve(scores, labels);
    return report;
}

}  // namespace mtr
