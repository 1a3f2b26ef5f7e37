// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Mini-batch training with Adam, binary cross-entropy over graded targets,
/// validation tracking at quarter-epoch cadence, random hyperparameter
/// search, and the training-size sensitivity sweep.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtr/dataset.hpp"
#include "mtr/metrics.hpp"
#include "mtr/models.hpp"

namespace mtr {

/// How grades become loss targets: soft keeps the grade ordering
/// (NONRELEVANT 0.0, RELEVANT 0.5, VITAL 1.0); binary collapses to
/// grade >= RELEVANT.
enum class TargetMode { soft, binary };

TargetMode target_mode_from_string(const std::string& s);
const char* target_mode_name(TargetMode m);
double target_value(RelevanceGrade g, TargetMode mode);

/// -(t ln p + (1-t) ln(1-p)), with p clamped to [1e-12, 1 - 1e-12] inside
/// the logs. Throws ValueError when p lies outside (0, 1).
double bce_loss_value(double p, double t);
TensorPtr bce_loss(Tape* tape, const TensorPtr& p, double target);

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Per-parameter first/second moments with bias correction. Non-trainable
/// parameters are never touched.
class AdamOptimizer {
public:
    AdamOptimizer(const std::vector<Parameter>& params, AdamConfig config);

    /// Applies one update using grad * grad_scale (the batch mean factor).
    void step(std::vector<Parameter>& params, double grad_scale = 1.0);
    static void zero_grad(std::vector<Parameter>& params);
    int step_count() const { return step_; }

private:
    AdamConfig config_;
    int step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainingConfig {
    double learning_rate = 0.001;
    int batch_size = 200;
    double epochs = 4.0;     // fractional epochs allowed (quarter resolution)
    double dropout = 0.2;    // copied into ModelConfig by the CLI layer
    std::uint64_t seed = 0;
    double subsample = 1.0;  // fraction of training queries kept
    TargetMode targets = TargetMode::soft;
};

/// A triplet ready for scoring: id-mapped query and document.
struct PreparedExample {
    ProcessedText query;
    ProcessedText doc;
    RelevanceGrade grade = RelevanceGrade::kNonrelevant;
    std::string query_string;
};

std::vector<PreparedExample> prepare_examples(const std::vector<TripletRecord>& records,
                                              const Vocabulary& vocab, bool bigrams = false);

/// One structured log record; epoch is the fractional position.
struct TrainLogEntry {
    double epoch = 0.0;
    std::string split;
    double loss = 0.0;
    std::optional<MetricsReport> metrics;
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
    double final_train_loss = 0.0;
    double final_validation_loss = 0.0;
    double best_validation_loss = 0.0;
    int steps = 0;
};

/// Trains in place. Shuffled seeded mini-batches; per-example tapes with
/// gradient accumulation; validation loss and metrics recorded every
/// quarter epoch (including the untrained 0.0 point). Deterministic for a
/// fixed (seed, config, data).
TrainResult train(RankingModel& model, const DatasetSplit& data, const Vocabulary& vocab,
                  const EmbeddingTable& table, const TrainingConfig& config);

double mean_loss(const RankingModel& model, const std::vector<PreparedExample>& examples,
                 const Vocabulary& vocab, const EmbeddingTable& table, TargetMode targets);

std::vector<ScoredRecord> score_examples(const RankingModel& model,
                                         const std::vector<PreparedExample>& examples,
                                         const Vocabulary& vocab, const EmbeddingTable& table);

/// Scores a record collection and aggregates metrics; test_loss is filled.
MetricsReport evaluate_model(const RankingModel& model, const std::vector<TripletRecord>& records,
                             const Vocabulary& vocab, const EmbeddingTable& table, TargetMode targets);

// ---------------------------------------------------------------------------
// Random hyperparameter search
// ---------------------------------------------------------------------------

struct HyperRange {
    int lo = 0, hi = 0;  // inclusive
};

struct SearchSpace {
    HyperRange projection_dim{40, 40};
    HyperRange query_hidden{15, 15};
    HyperRange doc_hidden{70, 70};
    HyperRange hidden_dim{50, 50};
    HyperRange state_dim{40, 40};
    HyperRange filters1{18, 18};
    HyperRange filters2{20, 20};
    double epochs_lo = 4.0, epochs_hi = 4.0;  // sampled at quarter resolution
    double dropout_lo = 0.2, dropout_hi = 0.2;

    void validate() const;  // throws on inverted or non-positive ranges
};

struct TrialResult {
    int run_id = 0;
    ModelConfig config;
    TrainingConfig training;
    double validation_loss = 0.0;
    double validation_auc = 0.0;
};

struct SearchResult {
    TrialResult best;
    std::vector<TrialResult> trials;
};

/// n_runs independent seeded samples from the space; selects the lowest
/// validation loss (validation AUC is logged alongside).
SearchResult random_search(Arch arch, EncoderKind encoder, const SearchSpace& space, int n_runs,
                           const DatasetSplit& data, const Vocabulary& vocab,
                           const EmbeddingTable& table, const TrainingConfig& base,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training-size sensitivity
// ---------------------------------------------------------------------------

struct SweepPoint {
    double fraction = 1.0;
    double test_loss = 0.0;
    double test_auc = 0.0;
    double validation_loss = 0.0;
};

/// Retrains the same architecture/config per fraction, sampling training
/// queries from one seeded shuffle so smaller fractions are nested subsets;
/// fraction 1.0 reproduces the full run exactly.
std::vector<SweepPoint> training_size_sweep(Arch arch, const ModelConfig& mconfig,
                                            const TrainingConfig& tconfig, const DatasetSplit& data,
                                            const Vocabulary& vocab, const EmbeddingTable& table,
                                            const std::vector<double>& fractions);

}  // namespace mtr
