// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "../common/oracles.hpp"
#include "acceptance.hpp"
#include "mtr/manifest.hpp"
#include "mtr/models.hpp"
#include "mtr/synthetic.hpp"
#include "mtr/train.hpp"

namespace acceptance {

using namespace mtr;

namespace {

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness across architectures and encoders
// ---------------------------------------------------------------------------

struct ModelGradCheck {
    double max_rel_error = 0.0;
    std::size_t coords = 0;
    std::size_t kinks = 0;
};

/// Central-difference check of d(loss)/d(theta) for every coordinate of
/// every trainable tensor. One-sided slope disagreement marks a kink
/// (subgradient point) which is reported but not judged.
ModelGradCheck check_model_gradients(RankingModel& model, const EmbeddingTable& table,
                                     const Vocabulary& vocab, const ProcessedText& query,
                                     const ProcessedText& doc, double target, double step) {
    auto params = model.parameters();
    for (auto& p : params) p.tensor->zero_grad();
    Tape tape;
    auto prob = model.score_on_tape(&tape, table, vocab, query, doc, EvalMode::infer, nullptr);
    auto loss = bce_loss(&tape, prob, target);
    tape.backward(loss);
    const double f0 = loss->values[0];

    auto loss_at = [&]() {
        const double p = model.score(table, vocab, query, doc);
        return bce_loss_value(p, target);
    };

    ModelGradCheck report;
    for (auto& p : params) {
        if (!p.trainable) continue;
        auto& values = p.tensor->values;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + step;
            p.tensor->invalidate_finite_cache();
            const double fp = loss_at();
            values[i] = orig - step;
            p.tensor->invalidate_finite_cache();
            const double fm = loss_at();
            values[i] = orig;
            p.tensor->invalidate_finite_cache();

            ++report.coords;
            const double fwd = (fp - f0) / step;
            const double bwd = (f0 - fm) / step;
            if (std::abs(fwd - bwd) > 1e-3 * std::max({1.0, std::abs(fwd), std::abs(bwd)})) {
                ++report.kinks;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = p.tensor->grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
            report.max_rel_error =
                std::max(report.max_rel_error, std::abs(analytic - numeric) / denom);
        }
    }
    return report;
}

CriterionResult criterion1_gradients() {
    const auto start = std::chrono::steady_clock::now();

    SyntheticTaskSpec spec;
    spec.kind = TaskKind::exact_match;
    spec.vocab_size = 80;
    spec.train_queries = 5;
    spec.validation_queries = 2;
    spec.test_queries = 2;
    spec.results_per_query = 4;
    spec.query_len_lo = 2;
    spec.query_len_hi = 3;
    spec.doc_len_lo = 8;
    spec.doc_len_hi = 14;
    spec.embedding_dim = 6;
    spec.seed = 1001;
    auto data = generate_synthetic(spec);
    auto [vocab, table] = parse_embeddings(data.embedding_file);
    auto examples = prepare_examples(data.dataset.train, vocab);

    ModelConfig toy;
    toy.projection_dim = 4;
    toy.query_hidden = 3;
    toy.doc_hidden = 3;
    toy.state_dim = 3;
    toy.filters1 = 2;
    toy.filters2 = 2;
    toy.hidden_dim = 4;
    toy.dropout = 0.0;

    double worst = 0.0;
    std::size_t total_coords = 0, total_kinks = 0;
    std::string worst_combo;
    int seed = 42;
    for (auto arch : {Arch::match_tensor, Arch::ssm, Arch::mt_exact_ssm, Arch::mt_ssm}) {
        for (auto enc : {EncoderKind::bilstm, EncoderKind::cnn}) {
            ModelConfig cfg = toy;
            cfg.encoder = enc;
            auto model = RankingModel::create(arch, cfg, table.dim, static_cast<std::uint64_t>(seed++));
            for (int pair = 0; pair < 5; ++pair) {
                const auto& ex = examples[static_cast<std::size_t>(pair * 3 % examples.size())];
                const double target = target_value(ex.grade, TargetMode::soft);
                auto report =
                    check_model_gradients(model, table, vocab, ex.query, ex.doc, target, 1e-5);
                total_coords += report.coords;
                total_kinks += report.kinks;
                if (report.max_rel_error > worst) {
                    worst = report.max_rel_error;
                    worst_combo = fmt("%s/%s pair %d", arch_name(arch), encoder_kind_name(enc), pair);
                }
            }
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CriterionResult result;
    result.pass = worst <= 1e-4 && seconds < 120.0;
    result.detail = fmt("max rel err %.2e (worst: %s), %zu coords, %zu kinks skipped, %.1fs",
                        worst, worst_combo.c_str(), total_coords, total_kinks, seconds);
    return result;
}

// ---------------------------------------------------------------------------
// Criterion 2: metric oracles
// ---------------------------------------------------------------------------

CriterionResult criterion2_metric_oracles() {
    using G = RelevanceGrade;
    double worst_ndcg = 0.0, worst_err = 0.0;
    long rankings = 0;
    for (int n = 1; n <= 5; ++n) {
        for (auto grades : oracles::all_grade_assignments(n)) {
            std::sort(grades.begin(), grades.end());
            do {
                ++rankings;
                for (int k : {1, 3, 10}) {
                    const double mine = ndcg_at_k(grades, k);
                    const double ref = oracles::ndcg_oracle(grades, k);
                    worst_ndcg = std::max(worst_ndcg, std::abs(mine - ref));
                }
                worst_err = std::max(worst_err, std::abs(err(grades) - oracles::err_oracle(grades)));
            } while (std::next_permutation(grades.begin(), grades.end()));
        }
    }

    const bool frozen_ok =
        std::abs(err({G::kVital}) - 0.75) <= 1e-12 &&
        std::abs(err({G::kRelevant, G::kVital}) - 0.53125) <= 1e-12;

    Rng rng(777);
    double worst_auc = 0.0;
    int auc_sets = 0;
    while (auc_sets < 1000) {
        std::uniform_int_distribution<int> size_dist(2, 60);
        const int n = size_dist(rng);
        std::vector<double> scores;
        std::vector<bool> labels;
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores.push_back(std::round(uniform_real(rng, 0.0, 1.0) * 16.0) / 16.0);
            const bool label = uniform_real(rng, 0.0, 1.0) < 0.5;
            labels.push_back(label);
            pos += label ? 1 : 0;
        }
        if (pos == 0 || pos == n) continue;
        ++auc_sets;
        worst_auc =
            std::max(worst_auc, std::abs(roc_auc(scores, labels) - oracles::auc_oracle(scores, labels)));
    }

    CriterionResult result;
    result.pass = worst_ndcg <= 1e-12 && worst_err <= 1e-12 && frozen_ok && worst_auc <= 1e-12;
    result.detail = fmt("%ld rankings: |ndcg err|<=%.1e, |err err|<=%.1e, frozen %s, "
                        "1000 auc sets |err|<=%.1e",
                        rankings, worst_ndcg, worst_err, frozen_ok ? "ok" : "BAD", worst_auc);
    return result;
}

// ---------------------------------------------------------------------------
// Criterion 3: parameter counts under the tuned configurations
// ---------------------------------------------------------------------------

CriterionResult criterion3_parameter_counts() {
    ModelConfig ssm_cfg;
    ssm_cfg.projection_dim = 50;
    ssm_cfg.query_hidden = 32;
    ssm_cfg.doc_hidden = 120;
    ssm_cfg.hidden_dim = 50;

    ModelConfig mt_cfg;
    mt_cfg.projection_dim = 40;
    mt_cfg.query_hidden = 15;
    mt_cfg.doc_hidden = 70;
    mt_cfg.state_dim = 40;
    mt_cfg.filters1 = 18;
    mt_cfg.filters2 = 20;
    mt_cfg.hidden_dim = 50;

    ModelConfig hybrid_cfg;
    hybrid_cfg.projection_dim = 50;
    hybrid_cfg.query_hidden = 15;
    hybrid_cfg.doc_hidden = 95;
    hybrid_cfg.state_dim = 35;
    hybrid_cfg.filters1 = 18;
    hybrid_cfg.filters2 = 30;
    hybrid_cfg.hidden_dim = 55;

    const int d_emb = 256;
    auto mt = count_parameters(RankingModel::create(Arch::match_tensor, mt_cfg, d_emb, 1));
    auto hybrid = count_parameters(RankingModel::create(Arch::mt_ssm, hybrid_cfg, d_emb, 1));
    auto ssm = count_parameters(RankingModel::create(Arch::ssm, ssm_cfg, d_emb, 1));

    struct Target {
        const char* name;
        std::int64_t counted;
        double reference;
        const ParamCountReport* report;
    };
    const Target targets[] = {{"match_tensor", mt.total, 104000.0, &mt},
                              {"mt_ssm", hybrid.total, 160000.0, &hybrid},
                              {"ssm", ssm.total, 216000.0, &ssm}};
    bool within = true;
    std::printf("    parameter-count report (reference values with residual gaps itemized):\n");
    for (const auto& t : targets) {
        const double gap = static_cast<double>(t.counted) - t.reference;
        const double rel = gap / t.reference;
        within = within && std::abs(rel) <= 0.25;
        std::printf("      %-12s counted %7lld, reference %6.0fK, gap %+7.0f (%+5.1f%%)\n", t.name,
                    static_cast<long long>(t.counted), t.reference / 1000.0, gap, rel * 100.0);
        for (const auto& [component, count] : t.report->by_component) {
            std::printf("        %-24s %lld\n", component.c_str(), static_cast<long long>(count));
        }
    }
    const bool ordering = mt.total < hybrid.total && hybrid.total < ssm.total;

    CriterionResult result;
    result.pass = ordering && within;
    result.detail = fmt("ordering %lld < %lld < %lld %s; all within 25%% of references %s",
                        static_cast<long long>(mt.total), static_cast<long long>(hybrid.total),
                        static_cast<long long>(ssm.total), ordering ? "holds" : "BROKEN",
                        within ? "yes" : "NO");
    return result;
}

// ---------------------------------------------------------------------------
// Criterion 9: invariance suite
// ---------------------------------------------------------------------------

CriterionResult criterion9_invariances() {
    std::string detail;
    bool all_ok = true;

    SyntheticTaskSpec spec;
    spec.kind = TaskKind::exact_match;
    spec.vocab_size = 120;
    spec.train_queries = 10;
    spec.validation_queries = 3;
    spec.test_queries = 3;
    spec.results_per_query = 5;
    spec.doc_len_lo = 10;
    spec.doc_len_hi = 20;
    spec.embedding_dim = 8;
    spec.seed = 9001;
    auto data = generate_synthetic(spec);
    auto [vocab, table] = parse_embeddings(data.embedding_file);
    auto examples = prepare_examples(data.dataset.train, vocab);

    ModelConfig cfg;
    cfg.projection_dim = 5;
    cfg.query_hidden = 3;
    cfg.doc_hidden = 4;
    cfg.state_dim = 3;
    cfg.filters1 = 2;
    cfg.filters2 = 3;
    cfg.hidden_dim = 4;
    cfg.dropout = 0.0;

    // Padding invariance across architectures and encoders.
    double worst_pad = 0.0;
    int seed = 7;
    for (auto arch : {Arch::match_tensor, Arch::ssm, Arch::mt_exact_ssm, Arch::mt_ssm}) {
        for (auto enc : {EncoderKind::bilstm, EncoderKind::cnn}) {
            ModelConfig c = cfg;
            c.encoder = enc;
            auto model = RankingModel::create(arch, c, table.dim, static_cast<std::uint64_t>(seed++));
            for (int i = 0; i < 6; ++i) {
                const auto& ex = examples[static_cast<std::size_t>(i * 2 % examples.size())];
                const double plain = model.score(table, vocab, ex.query, ex.doc);
                const double padded = model.score(table, vocab, ex.query.padded(vocab, 3),
                                                  ex.doc.padded(vocab, 7));
                worst_pad = std::max(worst_pad, std::abs(plain - padded));
            }
        }
    }
    const bool pad_ok = worst_pad <= 1e-9;
    all_ok = all_ok && pad_ok;
    detail += fmt("padding |delta|<=%.1e %s; ", worst_pad, pad_ok ? "ok" : "FAIL");

    // Serialization round-trip exactness on 100 random pairs.
    {
        auto model = RankingModel::create(Arch::mt_ssm, cfg, table.dim, 99);
        const auto path =
            (std::filesystem::temp_directory_path() / "mtrank_acceptance_roundtrip.mtm").string();
        save_manifest(path, make_model_manifest(model, vocab, table, 99, 1, {}));
        auto restored = restore_model(load_manifest(path));
        std::filesystem::remove(path);
        Rng rng(5);
        bool exact = true;
        for (int i = 0; i < 100; ++i) {
            const auto& ex = examples[static_cast<std::size_t>(
                uniform_real(rng, 0.0, 1.0) * static_cast<double>(examples.size()))];
            exact = exact && model.score(table, vocab, ex.query, ex.doc) ==
                                 restored.model.score(restored.table, restored.vocab, ex.query, ex.doc);
        }
        all_ok = all_ok && exact;
        detail += fmt("serialization round-trip %s; ", exact ? "exact" : "FAIL");
    }

    // Seeded determinism of training.
    {
        TrainingConfig tcfg;
        tcfg.epochs = 0.5;
        tcfg.batch_size = 8;
        tcfg.seed = 31;
        tcfg.learning_rate = 0.01;
        auto m1 = RankingModel::create(Arch::match_tensor, cfg, table.dim, tcfg.seed);
        auto r1 = train(m1, data.dataset, vocab, table, tcfg);
        auto m2 = RankingModel::create(Arch::match_tensor, cfg, table.dim, tcfg.seed);
        auto r2 = train(m2, data.dataset, vocab, table, tcfg);
        const bool deterministic =
            std::abs(r1.final_validation_loss - r2.final_validation_loss) <= 1e-12;
        all_ok = all_ok && deterministic;
        detail += fmt("training determinism %s; ", deterministic ? "ok" : "FAIL");
    }

    // Query-disjointness enforcement.
    {
        bool rejected = false;
        try {
            parse_dataset("train\tsame q\tVITAL\tT\ta\tbody\nvalidation\tsame q\tVITAL\tT\ta\tbody\n");
        } catch (const ParseError&) {
            rejected = true;
        }
        bool accepted = true;
        try {
            validate_dataset(data.dataset);
        } catch (const Error&) {
            accepted = false;
        }
        all_ok = all_ok && rejected && accepted;
        detail += fmt("disjointness reject %s / accept %s", rejected ? "ok" : "FAIL",
                      accepted ? "ok" : "FAIL");
    }

    return CriterionResult{all_ok, detail};
}

}  // namespace

std::vector<Criterion> fast_criteria() {
    return {
        {1, "gradient correctness across architectures and encoders", criterion1_gradients},
        {2, "metric implementations match brute-force oracles", criterion2_metric_oracles},
        {3, "parameter counts reproduce tuned-configuration ordering", criterion3_parameter_counts},
        {9, "invariance suite (padding, serialization, determinism, disjointness)",
         criterion9_invariances},
    };
}

}  // namespace acceptance
