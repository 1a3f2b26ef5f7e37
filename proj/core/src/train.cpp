// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace mtr {

TargetMode target_mode_from_string(const std::string& s) {
    if (s == "soft") return TargetMode::soft;
    if (s == "binary") return TargetMode::binary;
    throw UsageError(msg("unknown target mode \"", s, "\" (expected soft | binary)"));
}

const char* target_mode_name(TargetMode m) { return m == TargetMode::soft ? "soft" : "binary"; }

double target_value(RelevanceGrade g, TargetMode mode) {
    if (mode == TargetMode::binary) return grade_is_positive(g) ? 1.0 : 0.0;
    return static_cast<double>(static_cast<int>(g)) / static_cast<double>(kMaxGrade);
}

namespace {
constexpr double kProbEps = 1e-12;
}

double bce_loss_value(double p, double t) {
    if (!(p > 0.0) || !(p < 1.0)) {
        throw ValueError(msg("bce_loss: prediction must lie in (0,1), got ", p));
    }
    const double pc = std::min(1.0 - kProbEps, std::max(kProbEps, p));
    return -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
}

TensorPtr bce_loss(Tape* tape, const TensorPtr& p, double target) {
    if (p->size() != 1) {
        throw ShapeError(msg("bce_loss: prediction must be scalar, got shape ", p->shape_str()));
    }
    const double value = bce_loss_value(p->values[0], target);
    auto out = Tensor::make({1, 1}, {value});
    if (tape != nullptr && p->requires_grad) {
        out->set_requires_grad(true);
        tape->record({p}, out, [p, out, target]() {
            const double pc = std::min(1.0 - kProbEps, std::max(kProbEps, p->values[0]));
            p->grad[0] += out->grad[0] * (-target / pc + (1.0 - target) / (1.0 - pc));
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const std::vector<Parameter>& params, AdamConfig config)
    : config_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p.tensor->values.size(), 0.0);
        v_.emplace_back(p.tensor->values.size(), 0.0);
    }
}

void AdamOptimizer::step(std::vector<Parameter>& params, double grad_scale) {
    if (params.size() != m_.size()) {
        throw ValueError("AdamOptimizer: parameter list does not match optimizer state");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, step_);
    const double bc2 = 1.0 - std::pow(config_.beta2, step_);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        if (!p.trainable) continue;
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < p.tensor->values.size(); ++i) {
            const double g = p.tensor->grad[i] * grad_scale;
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.tensor->values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
        p.tensor->invalidate_finite_cache();
    }
}

void AdamOptimizer::zero_grad(std::vector<Parameter>& params) {
    for (auto& p : params) {
        if (p.trainable) p.tensor->zero_grad();
    }
}

// ---------------------------------------------------------------------------
// Example preparation and evaluation
// ---------------------------------------------------------------------------

std::vector<PreparedExample> prepare_examples(const std::vector<TripletRecord>& records,
                                              const Vocabulary& vocab, bool bigrams) {
    std::vector<PreparedExample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        PreparedExample ex;
        ex.query = process_query(r.query, vocab, bigrams);
        ex.doc = assemble_document({{"title", r.doc.title}, {"author", r.doc.author}, {"body", r.doc.body}},
                                   vocab, bigrams);
        ex.grade = r.grade;
        ex.query_string = r.query;
        out.push_back(std::move(ex));
    }
    return out;
}

double mean_loss(const RankingModel& model, const std::vector<PreparedExample>& examples,
                 const Vocabulary& vocab, const EmbeddingTable& table, TargetMode targets) {
    if (examples.empty()) throw ValueError("mean_loss: no examples");
    double acc = 0.0;
    for (const auto& ex : examples) {
        const double p = model.score(table, vocab, ex.query, ex.doc);
        acc += bce_loss_value(p, target_value(ex.grade, targets));
    }
    return acc / static_cast<double>(examples.size());
}

std::vector<ScoredRecord> score_examples(const RankingModel& model,
                                         const std::vector<PreparedExample>& examples,
                                         const Vocabulary& vocab, const EmbeddingTable& table) {
    std::vector<ScoredRecord> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back(ScoredRecord{ex.query_string, model.score(table, vocab, ex.query, ex.doc),
                                   ex.grade});
    }
    return out;
}

MetricsReport evaluate_model(const RankingModel& model, const std::vector<TripletRecord>& records,
                             const Vocabulary& vocab, const EmbeddingTable& table, TargetMode targets) {
    auto examples = prepare_examples(records, vocab);
    auto scored = score_examples(model, examples, vocab, table);
    auto report = compute_metrics(scored);
    double acc = 0.0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        acc += bce_loss_value(scored[i].score, target_value(examples[i].grade, targets));
    }
    report.test_loss = acc / static_cast<double>(scored.size());
    return report;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

/// Keeps examples whose query survives the seeded query-level shuffle.
/// One shuffle drives every fraction, so subsets are nested.
std::vector<PreparedExample> subsample_by_query(const std::vector<PreparedExample>& examples,
                                                double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw ValueError(msg("subsample fraction must lie in (0, 1], got ", fraction));
    }
    if (fraction == 1.0) return examples;
    std::vector<std::string> queries;
    std::unordered_set<std::string> seen;
    for (const auto& ex : examples) {
        if (seen.insert(ex.query_string).second) queries.push_back(ex.query_string);
    }
    Rng rng(seed);
    std::shuffle(queries.begin(), queries.end(), rng);
    const auto keep_n = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(queries.size())));
    if (keep_n == 0) throw ValueError(msg("subsample fraction ", fraction, " keeps zero queries"));
    std::unordered_set<std::string> kept(queries.begin(),
                                         queries.begin() + static_cast<std::ptrdiff_t>(keep_n));
    std::vector<PreparedExample> out;
    for (const auto& ex : examples) {
        if (kept.count(ex.query_string)) out.push_back(ex);
    }
    return out;
}

MetricsReport validation_report(const RankingModel& model,
                                const std::vector<PreparedExample>& examples, const Vocabulary& vocab,
                                const EmbeddingTable& table, TargetMode targets) {
    auto scored = score_examples(model, examples, vocab, table);
    auto report = compute_metrics(scored);
    double acc = 0.0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        acc += bce_loss_value(scored[i].score, target_value(examples[i].grade, targets));
    }
    report.test_loss = acc / static_cast<double>(scored.size());
    return report;
}

}  // namespace

TrainResult train(RankingModel& model, const DatasetSplit& data, const Vocabulary& vocab,
                  const EmbeddingTable& table, const TrainingConfig& config) {
    if (config.batch_size < 1) throw ValueError("train: batch size must be >= 1");
    if (config.epochs < 0.0) throw ValueError("train: epochs must be >= 0");

    auto train_examples = prepare_examples(data.train, vocab);
    train_examples = subsample_by_query(train_examples, config.subsample, config.seed + 2);
    if (train_examples.empty()) throw ValueError("train: empty training set");
    auto val_examples = prepare_examples(data.validation, vocab);

    auto params = model.parameters();
    AdamOptimizer optimizer(params, AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});
    Rng shuffle_rng(config.seed);
    Rng dropout_rng(config.seed + 1);

    TrainResult result;
    result.best_validation_loss = std::numeric_limits<double>::infinity();

    const auto n = train_examples.size();
    const auto batches_per_epoch =
        (n + static_cast<std::size_t>(config.batch_size) - 1) / static_cast<std::size_t>(config.batch_size);
    const long total_batches =
        static_cast<long>(std::floor(config.epochs * static_cast<double>(batches_per_epoch) + 1e-9));

    auto record_validation = [&](double epoch) {
        if (val_examples.empty()) return;
        auto report = validation_report(model, val_examples, vocab, table, config.targets);
        result.final_validation_loss = report.test_loss;
        result.best_validation_loss = std::min(result.best_validation_loss, report.test_loss);
        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.split = "validation";
        entry.loss = report.test_loss;
        entry.metrics = std::move(report);
        result.log.push_back(std::move(entry));
    };

    record_validation(0.0);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    double quarter_loss_acc = 0.0;
    long quarter_loss_batches = 0;
    int next_quarter = 1;
    std::size_t cursor = n;  // triggers a reshuffle on the first batch

    for (long batch = 0; batch < total_batches; ++batch) {
        if (cursor >= n) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            cursor = 0;
        }
        const std::size_t batch_end = std::min(n, cursor + static_cast<std::size_t>(config.batch_size));
        const auto batch_count = static_cast<double>(batch_end - cursor);

        AdamOptimizer::zero_grad(params);
        double batch_loss = 0.0;
        for (std::size_t i = cursor; i < batch_end; ++i) {
            const auto& ex = train_examples[order[i]];
            Tape tape;
            auto p = model.score_on_tape(&tape, table, vocab, ex.query, ex.doc, EvalMode::train,
                                         &dropout_rng);
            auto loss = bce_loss(&tape, p, target_value(ex.grade, config.targets));
            tape.backward(loss);
            batch_loss += loss->values[0];
        }
        optimizer.step(params, 1.0 / batch_count);
        cursor = batch_end;
        ++result.steps;

        quarter_loss_acc += batch_loss / batch_count;
        ++quarter_loss_batches;
        result.final_train_loss = batch_loss / batch_count;

        const double epoch_now = static_cast<double>(batch + 1) / static_cast<double>(batches_per_epoch);
        if (epoch_now + 1e-9 >= 0.25 * next_quarter || batch + 1 == total_batches) {
            TrainLogEntry entry;
            entry.epoch = epoch_now;
            entry.split = "train";
            entry.loss = quarter_loss_acc / static_cast<double>(quarter_loss_batches);
            result.log.push_back(std::move(entry));
            quarter_loss_acc = 0.0;
            quarter_loss_batches = 0;
            record_validation(epoch_now);
            while (epoch_now + 1e-9 >= 0.25 * next_quarter) ++next_quarter;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

void SearchSpace::validate() const {
    auto check = [](const char* name, const HyperRange& r) {
        if (r.lo <= 0 || r.hi < r.lo) {
            throw ValueError(msg("random_search: empty range for ", name, ": [", r.lo, ", ", r.hi, "]"));
        }
    };
    check("projection_dim", projection_dim);
    check("query_hidden", query_hidden);
    check("doc_hidden", doc_hidden);
    check("hidden_dim", hidden_dim);
    check("state_dim", state_dim);
    check("filters1", filters1);
    check("filters2", filters2);
    if (epochs_hi < epochs_lo || epochs_lo < 0.0) {
        throw ValueError("random_search: empty epochs range");
    }
    if (dropout_hi < dropout_lo || dropout_lo < 0.0 || dropout_hi >= 1.0) {
        throw ValueError("random_search: empty dropout range");
    }
}

namespace {

int sample_range(Rng& rng, const HyperRange& r) {
    std::uniform_int_distribution<int> dist(r.lo, r.hi);
    return dist(rng);
}

}  // namespace

SearchResult random_search(Arch arch, EncoderKind encoder, const SearchSpace& space, int n_runs,
                           const DatasetSplit& data, const Vocabulary& vocab,
                           const EmbeddingTable& table, const TrainingConfig& base,
                           std::uint64_t seed) {
    space.validate();
    if (n_runs < 1) throw ValueError("random_search: n_runs must be >= 1");

    SearchResult result;
    double best = std::numeric_limits<double>::infinity();
    for (int run = 0; run < n_runs; ++run) {
        Rng rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(run + 1));
        TrialResult trial;
        trial.run_id = run;
        trial.config.encoder = encoder;
        trial.config.projection_dim = sample_range(rng, space.projection_dim);
        trial.config.query_hidden = sample_range(rng, space.query_hidden);
        trial.config.doc_hidden = sample_range(rng, space.doc_hidden);
        trial.config.hidden_dim = sample_range(rng, space.hidden_dim);
        trial.config.state_dim = sample_range(rng, space.state_dim);
        trial.config.filters1 = sample_range(rng, space.filters1);
        trial.config.filters2 = sample_range(rng, space.filters2);

        const int quarters =
            static_cast<int>(std::lround((space.epochs_hi - space.epochs_lo) / 0.25));
        std::uniform_int_distribution<int> qdist(0, quarters);
        trial.training = base;
        trial.training.epochs = space.epochs_lo + 0.25 * qdist(rng);
        trial.training.dropout =
            space.dropout_lo == space.dropout_hi
                ? space.dropout_lo
                : uniform_real(rng, space.dropout_lo, space.dropout_hi);
        trial.config.dropout = trial.training.dropout;
        trial.training.seed = base.seed + static_cast<std::uint64_t>(run);

        auto model = RankingModel::create(arch, trial.config, table.dim, trial.training.seed);
        auto train_result = train(model, data, vocab, table, trial.training);
        trial.validation_loss = train_result.final_validation_loss;
        if (!train_result.log.empty()) {
            for (auto it = train_result.log.rbegin(); it != train_result.log.rend(); ++it) {
                if (it->split == "validation" && it->metrics.has_value()) {
                    trial.validation_auc = it->metrics->auc;
                    break;
                }
            }
        }
        if (trial.validation_loss < best) {
            best = trial.validation_loss;
            result.best = trial;
        }
        result.trials.push_back(std::move(trial));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Training-size sweep
// ---------------------------------------------------------------------------

std::vector<SweepPoint> training_size_sweep(Arch arch, const ModelConfig& mconfig,
                                            const TrainingConfig& tconfig, const DatasetSplit& data,
                                            const Vocabulary& vocab, const EmbeddingTable& table,
                                            const std::vector<double>& fractions) {
    if (fractions.empty()) throw ValueError("training_size_sweep: no fractions");
    std::vector<SweepPoint> curve;
    for (double fraction : fractions) {
        if (fraction <= 0.0 || fraction > 1.0) {
            throw ValueError(msg("training_size_sweep: fraction ", fraction, " outside (0, 1]"));
        }
        TrainingConfig cfg = tconfig;
        cfg.subsample = fraction;
        auto model = RankingModel::create(arch, mconfig, table.dim, cfg.seed);
        auto result = train(model, data, vocab, table, cfg);
        SweepPoint point;
        point.fraction = fraction;
        point.validation_loss = result.final_validation_loss;
        auto report = evaluate_model(model, data.test, vocab, table, cfg.targets);
        point.test_loss = report.test_loss;
        point.test_auc = report.auc;
        curve.push_back(point);
    }
    return curve;
}

}  // namespace mtr
