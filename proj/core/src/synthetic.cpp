// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "mtr/metrics.hpp"

namespace mtr {

TaskKind task_from_string(const std::string& s) {
    if (s == "exact_match") return TaskKind::exact_match;
    if (s == "order_sensitive") return TaskKind::order_sensitive;
    if (s == "semantic") return TaskKind::semantic;
    throw UsageError(msg("unknown task \"", s,
                         "\" (expected exact_match | order_sensitive | semantic)"));
}

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::exact_match: return "exact_match";
        case TaskKind::order_sensitive: return "order_sensitive";
        case TaskKind::semantic: return "semantic";
    }
    return "exact_match";
}

namespace {

std::string token_name(int i) {
    std::ostringstream os;
    os << "tok" << std::setfill('0') << std::setw(4) << i;
    return os.str();
}

int uniform_int(Rng& rng, int lo, int hi) {
    std::uniform_int_distribution<int> dist(lo, hi);
    return dist(rng);
}

/// Sampling context shared by the per-task builders.
struct Generator {
    const SyntheticTaskSpec& spec;
    Rng rng;
    std::vector<std::string> vocab;          // word tokens
    std::unordered_set<std::string> used_queries;

    explicit Generator(const SyntheticTaskSpec& s) : spec(s), rng(s.seed) {
        if (s.vocab_size < 16) throw ValueError("generate_synthetic: vocabulary size must be >= 16");
        if (s.results_per_query < 2) {
            throw ValueError("generate_synthetic: results per query must be >= 2");
        }
        if (s.query_len_lo < 1 || s.query_len_hi < s.query_len_lo) {
            throw ValueError("generate_synthetic: bad query length range");
        }
        if (s.doc_len_lo < s.query_len_hi + 4 || s.doc_len_hi < s.doc_len_lo) {
            throw ValueError("generate_synthetic: bad document length range");
        }
        vocab.reserve(static_cast<std::size_t>(s.vocab_size));
        for (int i = 0; i < s.vocab_size; ++i) vocab.push_back(token_name(i));
    }

    RelevanceGrade draw_grade() {
        const double u = uniform_real(rng, 0.0, 1.0);
        if (u < spec.grades.vital) return RelevanceGrade::kVital;
        if (u < spec.grades.vital + spec.grades.relevant) return RelevanceGrade::kRelevant;
        return RelevanceGrade::kNonrelevant;
    }

    /// Grade vector with at least one positive and one negative.
    std::vector<RelevanceGrade> draw_grades() {
        std::vector<RelevanceGrade> grades(static_cast<std::size_t>(spec.results_per_query));
        for (auto& g : grades) g = draw_grade();
        if (std::none_of(grades.begin(), grades.end(), grade_is_positive)) {
            grades.front() = RelevanceGrade::kRelevant;
        }
        if (std::all_of(grades.begin(), grades.end(), grade_is_positive)) {
            grades.back() = RelevanceGrade::kNonrelevant;
        }
        return grades;
    }

    /// Draws `n` distinct indices from `pool` (without replacement).
    std::vector<int> sample_distinct(const std::vector<int>& pool, int n) {
        std::vector<int> copy = pool;
        std::shuffle(copy.begin(), copy.end(), rng);
        copy.resize(static_cast<std::size_t>(n));
        return copy;
    }

    TripletRecord make_record(const std::string& query, std::vector<std::string> tokens,
                              RelevanceGrade grade) {
        TripletRecord rec;
        rec.query = query;
        rec.grade = grade;
        // Two title tokens, one author token, the rest is body.
        rec.doc.title = tokens[0] + " " + tokens[1];
        rec.doc.author = tokens[2];
        std::string body;
        for (std::size_t i = 3; i < tokens.size(); ++i) {
            if (!body.empty()) body += ' ';
            body += tokens[i];
        }
        rec.doc.body = body;
        return rec;
    }
};

/// Filler tokens drawn uniformly from `pool`, avoiding everything in `ban`.
std::vector<std::string> draw_filler(Rng& rng, const std::vector<std::string>& pool,
                                     const std::unordered_set<std::string>& ban, int n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    std::uniform_int_distribution<int> dist(0, static_cast<int>(pool.size()) - 1);
    while (static_cast<int>(out.size()) < n) {
        const auto& candidate = pool[static_cast<std::size_t>(dist(rng))];
        if (ban.count(candidate)) continue;
        out.push_back(candidate);
    }
    return out;
}

// ---------------------------------------------------------------------------
// exact_match and order_sensitive
// ---------------------------------------------------------------------------

std::vector<std::string> draw_query_tokens(Generator& g, const std::vector<std::string>& pool) {
    const int len = uniform_int(g.rng, g.spec.query_len_lo, g.spec.query_len_hi);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        std::vector<std::string> tokens;
        std::unordered_set<std::string> seen;
        while (static_cast<int>(tokens.size()) < len) {
            const auto& t = pool[static_cast<std::size_t>(
                uniform_int(g.rng, 0, static_cast<int>(pool.size()) - 1))];
            if (seen.insert(t).second) tokens.push_back(t);
        }
        std::string joined;
        for (const auto& t : tokens) {
            if (!joined.empty()) joined += ' ';
            joined += t;
        }
        if (g.used_queries.insert(joined).second) return tokens;
    }
    throw ValueError("generate_synthetic: vocabulary too small for requested distinct queries");
}

/// Token stream for one positive exact_match document: query tokens at
/// random positions within filler.
std::vector<std::string> exact_match_positive(Generator& g, const std::vector<std::string>& qtokens,
                                              const std::unordered_set<std::string>& ban) {
    const int total = uniform_int(g.rng, g.spec.doc_len_lo, g.spec.doc_len_hi);
    auto tokens = draw_filler(g.rng, g.vocab, ban, total - static_cast<int>(qtokens.size()));
    for (const auto& qt : qtokens) {
        const int pos = uniform_int(g.rng, 3, static_cast<int>(tokens.size()));
        tokens.insert(tokens.begin() + pos, qt);
    }
    return tokens;
}

/// Positive order_sensitive document: the full phrase, contiguous and in
/// order, inside filler. Returns the tokens plus the phrase offset.
std::pair<std::vector<std::string>, int> order_positive(Generator& g,
                                                        const std::vector<std::string>& qtokens,
                                                        const std::unordered_set<std::string>& ban) {
    const int total = uniform_int(g.rng, g.spec.doc_len_lo, g.spec.doc_len_hi);
    auto tokens = draw_filler(g.rng, g.vocab, ban, total - static_cast<int>(qtokens.size()));
    const int pos = uniform_int(g.rng, 3, static_cast<int>(tokens.size()));
    tokens.insert(tokens.begin() + pos, qtokens.begin(), qtokens.end());
    return {tokens, pos};
}

/// Twin negative: same token multiset, phrase segment permuted in place.
std::vector<std::string> order_twin_negative(Generator& g, std::vector<std::string> tokens,
                                             int phrase_pos, int phrase_len) {
    const auto begin = tokens.begin() + phrase_pos;
    const auto end = begin + phrase_len;
    const std::vector<std::string> original(begin, end);
    do {
        std::shuffle(begin, end, g.rng);
    } while (std::equal(begin, end, original.begin()));
    return tokens;
}

/// Gap negative: keeps exactly one query token, replaces the rest of the
/// phrase with filler. Lexical overlap drops to a single term.
std::vector<std::string> order_gap_negative(Generator& g, std::vector<std::string> tokens,
                                            int phrase_pos, int phrase_len,
                                            const std::unordered_set<std::string>& ban) {
    const int keep = uniform_int(g.rng, 0, phrase_len - 1);
    auto replacements = draw_filler(g.rng, g.vocab, ban, phrase_len);
    for (int i = 0; i < phrase_len; ++i) {
        if (i == keep) continue;
        tokens[static_cast<std::size_t>(phrase_pos + i)] = replacements[static_cast<std::size_t>(i)];
    }
    return tokens;
}

void build_lexical_group(Generator& g, const std::string& query,
                         const std::vector<std::string>& qtokens,
                         std::vector<TripletRecord>& out) {
    std::unordered_set<std::string> ban(qtokens.begin(), qtokens.end());
    const auto grades = g.draw_grades();

    if (g.spec.kind == TaskKind::exact_match) {
        for (auto grade : grades) {
            std::vector<std::string> tokens =
                grade_is_positive(grade)
                    ? exact_match_positive(g, qtokens, ban)
                    : draw_filler(g.rng, g.vocab, ban,
                                  uniform_int(g.rng, g.spec.doc_len_lo, g.spec.doc_len_hi));
            out.push_back(g.make_record(query, std::move(tokens), grade));
        }
        return;
    }

    // order_sensitive: negatives mirror positives so token multisets and
    // document lengths match within each twin pair.
    struct Positive {
        std::vector<std::string> tokens;
        int phrase_pos;
    };
    std::vector<Positive> positives;
    for (auto grade : grades) {
        if (!grade_is_positive(grade)) continue;
        auto [tokens, pos] = order_positive(g, qtokens, ban);
        positives.push_back(Positive{tokens, pos});
        out.push_back(g.make_record(query, std::move(tokens), grade));
    }
    const int phrase_len = static_cast<int>(qtokens.size());
    std::size_t mirror = 0;
    for (auto grade : grades) {
        if (grade_is_positive(grade)) continue;
        const auto& src = positives[mirror % positives.size()];
        ++mirror;
        std::vector<std::string> tokens;
        if (uniform_real(g.rng, 0.0, 1.0) < g.spec.lexical_gap_fraction && phrase_len >= 2) {
            tokens = order_gap_negative(g, src.tokens, src.phrase_pos, phrase_len, ban);
        } else {
            tokens = order_twin_negative(g, src.tokens, src.phrase_pos, phrase_len);
        }
        out.push_back(g.make_record(query, std::move(tokens), grade));
    }
}

// ---------------------------------------------------------------------------
// semantic
// ---------------------------------------------------------------------------

struct ClusterLayout {
    int n_clusters = 0;
    int concept_clusters = 0;  // clusters usable in queries; the rest are filler

    int cluster_of(int token, int cluster_size) const { return token / cluster_size; }
};

void build_semantic_group(Generator& g, const ClusterLayout& layout, const std::string& query,
                          const std::vector<int>& query_clusters,
                          const std::vector<int>& query_tokens, std::vector<TripletRecord>& out) {
    const int csize = g.spec.cluster_size;
    const auto grades = g.draw_grades();

    // Filler pool: tokens of the non-concept clusters.
    std::vector<int> filler_pool;
    for (int c = layout.concept_clusters; c < layout.n_clusters; ++c) {
        for (int t = 0; t < csize; ++t) filler_pool.push_back(c * csize + t);
    }
    // Distant pool: concept clusters not used by this query.
    std::unordered_set<int> query_cluster_set(query_clusters.begin(), query_clusters.end());
    std::vector<int> distant_pool;
    for (int c = 0; c < layout.concept_clusters; ++c) {
        if (query_cluster_set.count(c)) continue;
        for (int t = 0; t < csize; ++t) distant_pool.push_back(c * csize + t);
    }
    std::unordered_set<int> query_token_set(query_tokens.begin(), query_tokens.end());

    auto draw_from = [&](const std::vector<int>& pool) {
        return pool[static_cast<std::size_t>(uniform_int(g.rng, 0, static_cast<int>(pool.size()) - 1))];
    };

    for (auto grade : grades) {
        const int total = uniform_int(g.rng, g.spec.doc_len_lo, g.spec.doc_len_hi);
        std::vector<int> content;
        if (grade_is_positive(grade)) {
            // Two synonyms per query cluster: same cluster, never the query
            // token itself, so lexical overlap stays zero.
            for (int c : query_clusters) {
                for (int rep = 0; rep < 2; ++rep) {
                    int t;
                    do {
                        t = c * csize + uniform_int(g.rng, 0, csize - 1);
                    } while (query_token_set.count(t));
                    content.push_back(t);
                }
            }
        } else {
            const int n_distant = 2 * static_cast<int>(query_clusters.size());
            for (int i = 0; i < n_distant; ++i) content.push_back(draw_from(distant_pool));
        }
        // At least four filler tokens so the title/author slots and the
        // insertion window below stay valid even for short documents.
        const int filler_n = std::max(total - static_cast<int>(content.size()), 4);
        std::vector<int> tokens;
        for (int i = 0; i < filler_n; ++i) {
            tokens.push_back(draw_from(filler_pool));
        }
        for (int t : content) {
            const int pos = uniform_int(g.rng, 3, static_cast<int>(tokens.size()));
            tokens.insert(tokens.begin() + pos, t);
        }
        std::vector<std::string> words;
        words.reserve(tokens.size());
        for (int t : tokens) words.push_back(g.vocab[static_cast<std::size_t>(t)]);
        out.push_back(g.make_record(query, std::move(words), grade));
    }
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

std::string render_embeddings(const std::vector<std::string>& vocab,
                              const std::vector<std::vector<double>>& vectors, int dim) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << vocab.size() << ' ' << dim << '\n';
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        os << vocab[i];
        for (double v : vectors[i]) os << ' ' << v;
        os << '\n';
    }
    return os.str();
}

std::vector<std::vector<double>> random_embeddings(Generator& g) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(g.vocab.size());
    for (std::size_t i = 0; i < g.vocab.size(); ++i) {
        std::vector<double> v(static_cast<std::size_t>(g.spec.embedding_dim));
        for (auto& x : v) x = uniform_real(g.rng, -0.5, 0.5);
        vectors.push_back(std::move(v));
    }
    return vectors;
}

std::vector<std::vector<double>> clustered_embeddings(Generator& g, const ClusterLayout& layout) {
    const int dim = g.spec.embedding_dim;
    std::vector<std::vector<double>> centers;
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int c = 0; c < layout.n_clusters; ++c) {
        std::vector<double> center(static_cast<std::size_t>(dim));
        double norm = 0.0;
        for (auto& x : center) {
            x = unit(g.rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : center) x /= norm;
        centers.push_back(std::move(center));
    }
    std::vector<std::vector<double>> vectors;
    vectors.reserve(g.vocab.size());
    for (std::size_t t = 0; t < g.vocab.size(); ++t) {
        const int c = layout.cluster_of(static_cast<int>(t), g.spec.cluster_size);
        std::vector<double> v = centers[static_cast<std::size_t>(c)];
        for (auto& x : v) x += 0.08 * unit(g.rng);
        vectors.push_back(std::move(v));
    }
    return vectors;
}

}  // namespace

SyntheticOutput generate_synthetic(const SyntheticTaskSpec& spec) {
    Generator g(spec);
    SyntheticOutput out;

    if (spec.kind == TaskKind::semantic) {
        if (spec.cluster_size < 3) {
            throw ValueError("generate_synthetic: semantic task needs cluster_size >= 3");
        }
        ClusterLayout layout;
        layout.n_clusters = spec.vocab_size / spec.cluster_size;
        layout.concept_clusters = (layout.n_clusters * 3) / 5;
        if (layout.concept_clusters <= spec.query_len_hi) {
            throw ValueError("generate_synthetic: vocabulary too small for semantic clusters");
        }
        // Trim the vocabulary to whole clusters.
        g.vocab.resize(static_cast<std::size_t>(layout.n_clusters * spec.cluster_size));
        out.embedding_file = render_embeddings(g.vocab, clustered_embeddings(g, layout),
                                               spec.embedding_dim);

        std::vector<int> concept_ids(static_cast<std::size_t>(layout.concept_clusters));
        for (int c = 0; c < layout.concept_clusters; ++c) concept_ids[static_cast<std::size_t>(c)] = c;

        auto build_split = [&](int n_queries, std::vector<TripletRecord>& records) {
            for (int qi = 0; qi < n_queries; ++qi) {
                const int qlen = uniform_int(g.rng, spec.query_len_lo, spec.query_len_hi);
                for (int attempt = 0;; ++attempt) {
                    if (attempt >= 1000) {
                        throw ValueError(
                            "generate_synthetic: vocabulary too small for requested distinct queries");
                    }
                    auto clusters = g.sample_distinct(concept_ids, qlen);
                    std::vector<int> qtokens;
                    std::string joined;
                    for (int c : clusters) {
                        const int t = c * spec.cluster_size + uniform_int(g.rng, 0, spec.cluster_size - 1);
                        qtokens.push_back(t);
                        if (!joined.empty()) joined += ' ';
                        joined += g.vocab[static_cast<std::size_t>(t)];
                    }
                    if (!g.used_queries.insert(joined).second) continue;
                    build_semantic_group(g, layout, joined, clusters, qtokens, records);
                    break;
                }
            }
        };
        build_split(spec.train_queries, out.dataset.train);
        build_split(spec.validation_queries, out.dataset.validation);
        build_split(spec.test_queries, out.dataset.test);
        validate_dataset(out.dataset);
        return out;
    }

    out.embedding_file = render_embeddings(g.vocab, random_embeddings(g), spec.embedding_dim);
    auto build_split = [&](int n_queries, std::vector<TripletRecord>& records) {
        for (int qi = 0; qi < n_queries; ++qi) {
            auto qtokens = draw_query_tokens(g, g.vocab);
            std::string joined;
            for (const auto& t : qtokens) {
                if (!joined.empty()) joined += ' ';
                joined += t;
            }
            build_lexical_group(g, joined, qtokens, records);
        }
    };
    build_split(spec.train_queries, out.dataset.train);
    build_split(spec.validation_queries, out.dataset.validation);
    build_split(spec.test_queries, out.dataset.test);
    validate_dataset(out.dataset);
    return out;
}

}  // namespace mtr
