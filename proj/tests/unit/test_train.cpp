// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtr/synthetic.hpp"
#include "mtr/train.hpp"

using namespace mtr;

namespace {

/// Small generated corpus shared by the training tests.
struct Fixture {
    DatasetSplit data;
    Vocabulary vocab;
    EmbeddingTable table;
};

Fixture make_fixture(TaskKind kind = TaskKind::exact_match, int train_queries = 12) {
    SyntheticTaskSpec spec;
    spec.kind = kind;
    spec.vocab_size = 120;
    spec.train_queries = train_queries;
    spec.validation_queries = 4;
    spec.test_queries = 6;
    spec.results_per_query = 6;
    spec.doc_len_lo = 12;
    spec.doc_len_hi = 24;
    spec.embedding_dim = 8;
    spec.seed = 99;
    auto output = generate_synthetic(spec);
    Fixture f;
    f.data = std::move(output.dataset);
    auto [vocab, table] = parse_embeddings(output.embedding_file);
    f.vocab = std::move(vocab);
    f.table = std::move(table);
    return f;
}

ModelConfig tiny_model() {
    ModelConfig c;
    c.projection_dim = 6;
    c.query_hidden = 4;
    c.doc_hidden = 5;
    c.state_dim = 4;
    c.filters1 = 3;
    c.filters2 = 4;
    c.hidden_dim = 5;
    c.dropout = 0.1;
    return c;
}

std::vector<double> snapshot(const RankingModel& model) {
    std::vector<double> out;
    for (const auto& p : model.parameters()) {
        out.insert(out.end(), p.tensor->values.begin(), p.tensor->values.end());
    }
    return out;
}

}  // namespace

TEST_CASE("bce_loss frozen values") {
    CHECK(bce_loss_value(0.5, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss_value(0.5, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // Perfect predictions are clamped at 1e-12 scale rather than hitting log(0).
    const double tiny = bce_loss_value(1.0 - 1e-13, 1.0);
    CHECK(tiny > 0.0);
    CHECK(tiny < 1e-11);
    CHECK_THROWS_AS(bce_loss_value(0.0, 1.0), ValueError);
    CHECK_THROWS_AS(bce_loss_value(1.0, 1.0), ValueError);
    CHECK_THROWS_AS(bce_loss_value(-0.2, 1.0), ValueError);
}

TEST_CASE("bce gradient at p=0.5, t=1 is -2") {
    auto p = Tensor::make({1, 1}, {0.5}, true);
    Tape tape;
    auto loss = bce_loss(&tape, p, 1.0);
    tape.backward(loss);
    CHECK(p->grad[0] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("grade targets in both modes") {
    CHECK(target_value(RelevanceGrade::kNonrelevant, TargetMode::soft) == 0.0);
    CHECK(target_value(RelevanceGrade::kRelevant, TargetMode::soft) == 0.5);
    CHECK(target_value(RelevanceGrade::kVital, TargetMode::soft) == 1.0);
    CHECK(target_value(RelevanceGrade::kNonrelevant, TargetMode::binary) == 0.0);
    CHECK(target_value(RelevanceGrade::kRelevant, TargetMode::binary) == 1.0);
    CHECK(target_value(RelevanceGrade::kVital, TargetMode::binary) == 1.0);
}

TEST_CASE("one Adam step on gradient 1 moves a parameter by about the learning rate") {
    auto t = Tensor::make({1, 1}, {1.0}, true);
    std::vector<Parameter> params{Parameter{"w", t, true}};
    AdamOptimizer adam(params, AdamConfig{0.01, 0.9, 0.999, 1e-8});
    t->grad[0] = 1.0;
    adam.step(params);
    CHECK(t->values[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("Adam with zero gradients leaves parameters unchanged") {
    auto t = Tensor::make({1, 2}, {0.3, -0.4}, true);
    std::vector<Parameter> params{Parameter{"w", t, true}};
    AdamOptimizer adam(params, AdamConfig{});
    AdamOptimizer::zero_grad(params);
    adam.step(params);
    adam.step(params);
    CHECK(t->values[0] == 0.3);
    CHECK(t->values[1] == -0.4);
}

TEST_CASE("non-trainable parameters receive no updates") {
    auto w = Tensor::make({1, 1}, {1.0}, true);
    auto frozen = Tensor::make({1, 1}, {2.0}, true);
    std::vector<Parameter> params{Parameter{"w", w, true}, Parameter{"emb", frozen, false}};
    AdamOptimizer adam(params, AdamConfig{});
    w->grad[0] = 1.0;
    frozen->grad[0] = 1.0;
    adam.step(params);
    CHECK(w->values[0] != 1.0);
    CHECK(frozen->values[0] == 2.0);
}

TEST_CASE("zero epochs leave the model bit-identical to initialization") {
    auto f = make_fixture();
    auto model = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, 7);
    const auto before = snapshot(model);
    TrainingConfig cfg;
    cfg.epochs = 0.0;
    cfg.batch_size = 8;
    auto result = train(model, f.data, f.vocab, f.table, cfg);
    CHECK(result.steps == 0);
    CHECK(snapshot(model) == before);
}

TEST_CASE("training is reproducible for a fixed seed and diverges for another") {
    auto f = make_fixture();
    TrainingConfig cfg;
    cfg.epochs = 0.5;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.seed = 5;

    auto m1 = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, cfg.seed);
    auto r1 = train(m1, f.data, f.vocab, f.table, cfg);
    auto m2 = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, cfg.seed);
    auto r2 = train(m2, f.data, f.vocab, f.table, cfg);
    CHECK(std::abs(r1.final_validation_loss - r2.final_validation_loss) <= 1e-12);
    CHECK(snapshot(m1) == snapshot(m2));

    TrainingConfig other = cfg;
    other.seed = 6;
    auto m3 = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, other.seed);
    train(m3, f.data, f.vocab, f.table, other);
    CHECK(snapshot(m1) != snapshot(m3));
}

TEST_CASE("training rejects an empty training set") {
    auto f = make_fixture();
    DatasetSplit empty;
    empty.validation = f.data.validation;
    auto model = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, 1);
    TrainingConfig cfg;
    CHECK_THROWS_AS(train(model, empty, f.vocab, f.table, cfg), ValueError);
}

TEST_CASE("validation is recorded at quarter-epoch cadence") {
    auto f = make_fixture();
    auto model = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, 2);
    TrainingConfig cfg;
    cfg.epochs = 1.0;
    cfg.batch_size = 8;
    auto result = train(model, f.data, f.vocab, f.table, cfg);
    int validation_entries = 0;
    for (const auto& entry : result.log) {
        if (entry.split == "validation") {
            ++validation_entries;
            CHECK(entry.metrics.has_value());
        }
    }
    // The untrained point plus one per quarter.
    CHECK(validation_entries == 5);
}

TEST_CASE("training on the exact-match task halves the validation loss within two epochs") {
    auto f = make_fixture(TaskKind::exact_match, 24);
    auto cfg_model = tiny_model();
    auto model = RankingModel::create(Arch::match_tensor, cfg_model, f.table.dim, 11);
    TrainingConfig cfg;
    cfg.epochs = 2.0;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.02;
    cfg.targets = TargetMode::binary;
    cfg.seed = 11;
    auto result = train(model, f.data, f.vocab, f.table, cfg);
    double initial = 0.0, final_loss = 0.0;
    for (const auto& entry : result.log) {
        if (entry.split != "validation") continue;
        if (entry.epoch == 0.0) initial = entry.loss;
        final_loss = entry.loss;
    }
    CAPTURE(initial);
    CAPTURE(final_loss);
    CHECK(final_loss <= 0.5 * initial);
}

TEST_CASE("random_search: singleton space returns the singleton and is seed-deterministic") {
    auto f = make_fixture();
    SearchSpace space;
    space.projection_dim = {6, 6};
    space.query_hidden = {4, 4};
    space.doc_hidden = {5, 5};
    space.hidden_dim = {5, 5};
    space.state_dim = {4, 4};
    space.filters1 = {3, 3};
    space.filters2 = {4, 4};
    space.epochs_lo = space.epochs_hi = 0.25;
    space.dropout_lo = space.dropout_hi = 0.1;

    TrainingConfig base;
    base.batch_size = 8;
    auto r1 = random_search(Arch::ssm, EncoderKind::bilstm, space, 1, f.data, f.vocab, f.table, base, 3);
    CHECK(r1.trials.size() == 1);
    CHECK(r1.best.config.projection_dim == 6);
    CHECK(r1.best.training.epochs == 0.25);

    auto r2 = random_search(Arch::ssm, EncoderKind::bilstm, space, 1, f.data, f.vocab, f.table, base, 3);
    CHECK(r1.best.validation_loss == r2.best.validation_loss);
}

TEST_CASE("random_search samples inside ranges and rejects empty spaces") {
    auto f = make_fixture();
    SearchSpace space;
    space.projection_dim = {4, 8};
    space.query_hidden = {3, 5};
    space.doc_hidden = {3, 5};
    space.hidden_dim = {4, 6};
    space.state_dim = {3, 4};
    space.filters1 = {2, 3};
    space.filters2 = {2, 4};
    space.epochs_lo = 0.25;
    space.epochs_hi = 0.5;
    TrainingConfig base;
    base.batch_size = 8;
    auto result =
        random_search(Arch::match_tensor, EncoderKind::bilstm, space, 3, f.data, f.vocab, f.table,
                      base, 7);
    CHECK(result.trials.size() == 3);
    for (const auto& trial : result.trials) {
        CHECK(trial.config.projection_dim >= 4);
        CHECK(trial.config.projection_dim <= 8);
        CHECK(trial.training.epochs >= 0.25);
        CHECK(trial.training.epochs <= 0.5);
        CHECK(std::fmod(trial.training.epochs, 0.25) == doctest::Approx(0.0));
    }

    SearchSpace bad;
    bad.projection_dim = {8, 4};
    CHECK_THROWS_AS(
        random_search(Arch::ssm, EncoderKind::bilstm, bad, 1, f.data, f.vocab, f.table, base, 0),
        ValueError);
}

TEST_CASE("size sweep: fraction 1.0 reproduces the plain run; zero-query fractions are rejected") {
    auto f = make_fixture();
    auto mconfig = tiny_model();
    TrainingConfig cfg;
    cfg.epochs = 0.25;
    cfg.batch_size = 8;
    cfg.seed = 13;

    auto model = RankingModel::create(Arch::ssm, mconfig, f.table.dim, cfg.seed);
    train(model, f.data, f.vocab, f.table, cfg);
    auto baseline = evaluate_model(model, f.data.test, f.vocab, f.table, cfg.targets);

    auto curve = training_size_sweep(Arch::ssm, mconfig, cfg, f.data, f.vocab, f.table, {0.5, 1.0});
    REQUIRE(curve.size() == 2);
    CHECK(curve[1].test_loss == doctest::Approx(baseline.test_loss).epsilon(1e-15));
    CHECK(curve[1].test_auc == doctest::Approx(baseline.auc).epsilon(1e-15));

    CHECK_THROWS_AS(
        training_size_sweep(Arch::ssm, mconfig, cfg, f.data, f.vocab, f.table, {0.0}),
        ValueError);
    CHECK_THROWS_AS(
        training_size_sweep(Arch::ssm, mconfig, cfg, f.data, f.vocab, f.table, {1.5}),
        ValueError);
}

TEST_CASE("subsampling keeps whole query groups") {
    auto f = make_fixture();
    TrainingConfig cfg;
    cfg.epochs = 0.25;
    cfg.batch_size = 4;
    cfg.subsample = 0.5;
    auto model = RankingModel::create(Arch::ssm, tiny_model(), f.table.dim, 21);
    auto result = train(model, f.data, f.vocab, f.table, cfg);
    CHECK(result.steps > 0);
}
