// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "../common/oracles.hpp"
#include "mtr/bm25.hpp"
#include "mtr/boosted.hpp"

using namespace mtr;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> list) {
    return std::vector<std::string>(list.begin(), list.end());
}

/// Plain recursive walk, independent of RegressionTree::predict's loop.
double oracle_tree_walk(const RegressionTree& tree, int node, const std::vector<double>& x) {
    const auto& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.is_leaf) return n.value;
    if (x[static_cast<std::size_t>(n.feature)] < n.threshold) {
        return oracle_tree_walk(tree, n.left, x);
    }
    return oracle_tree_walk(tree, n.right, x);
}

}  // namespace

TEST_CASE("bm25 of a one-document corpus reproduces the hand computation") {
    auto doc = words({"a"});
    auto stats = CorpusStats::build({doc});
    const double score = bm25_score(words({"a"}), doc, stats, Bm25Params{1.2, 0.75});
    CHECK(score == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("bm25 is zero iff the document shares no query term") {
    auto d1 = words({"x", "y", "z"});
    auto d2 = words({"a", "y"});
    auto stats = CorpusStats::build({d1, d2});
    CHECK(bm25_score(words({"a", "b"}), d1, stats) == 0.0);
    CHECK(bm25_score(words({"a", "b"}), d2, stats) > 0.0);
}

TEST_CASE("bm25 ignores document word order") {
    auto d1 = words({"low", "fat", "high", "carb", "diet"});
    auto d2 = words({"low", "carb", "high", "fat", "diet"});
    auto stats = CorpusStats::build({d1, d2});
    const auto q = words({"low", "fat", "high", "carb"});
    CHECK(bm25_score(q, d1, stats) == doctest::Approx(bm25_score(q, d2, stats)).epsilon(1e-15));
}

TEST_CASE("bm25 is monotone non-decreasing in term frequency") {
    auto stats = CorpusStats::build({words({"a", "b"}), words({"c", "d"})});
    const auto q = words({"a"});
    double prev = 0.0;
    for (int tf = 1; tf <= 6; ++tf) {
        std::vector<std::string> doc(static_cast<std::size_t>(tf), "a");
        doc.resize(8, "z");  // fixed length so only tf varies
        const double score = bm25_score(q, doc, stats);
        CHECK(score >= prev);
        prev = score;
    }
}

TEST_CASE("bm25 validates corpus and parameters") {
    CHECK_THROWS_AS(CorpusStats::build({}), ValueError);
    auto stats = CorpusStats::build({words({"a"})});
    CHECK_THROWS_AS(bm25_score(words({"a"}), words({"a"}), stats, Bm25Params{-1.0, 0.5}), ValueError);
    CHECK_THROWS_AS(bm25_score(words({"a"}), words({"a"}), stats, Bm25Params{1.2, 1.5}), ValueError);
}

// ---------------------------------------------------------------------------
// Boosted trees
// ---------------------------------------------------------------------------

namespace {

/// Separable synthetic set: feature 0 decides the class, feature 1 is noise.
void separable_data(std::vector<std::vector<double>>& x, std::vector<int>& y, int n, Rng& rng) {
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        const double f0 = label == 1 ? uniform_real(rng, 0.6, 1.0) : uniform_real(rng, 0.0, 0.4);
        x.push_back({f0, uniform_real(rng, 0.0, 1.0)});
        y.push_back(label);
    }
}

}  // namespace

TEST_CASE("a perfectly separating feature reaches held-out AUC 1") {
    Rng rng(5);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_data(x, y, 160, rng);
    std::vector<std::vector<double>> train_x(x.begin(), x.begin() + 120);
    std::vector<int> train_y(y.begin(), y.begin() + 120);

    auto model = train_boosted_ensemble(train_x, train_y, 5, BoostedConfig{});
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t i = 120; i < x.size(); ++i) {
        scores.push_back(ensemble_score(model, x[i]));
        labels.push_back(y[i] != 0);
    }
    CHECK(roc_auc(scores, labels) == doctest::Approx(1.0));
}

TEST_CASE("duplicated feature columns predict identically to a constant second column") {
    Rng rng(6);
    std::vector<std::vector<double>> base;
    std::vector<int> y;
    for (int i = 0; i < 80; ++i) {
        const double v = uniform_real(rng, 0.0, 1.0);
        base.push_back({v});
        y.push_back(v + 0.2 * uniform_real(rng, -1.0, 1.0) > 0.5 ? 1 : 0);
    }
    std::vector<std::vector<double>> duplicated, padded;
    for (const auto& row : base) {
        duplicated.push_back({row[0], row[0]});
        padded.push_back({row[0], 0.0});  // constant column: never splittable
    }
    BoostedConfig config;
    config.max_rounds = 40;
    auto m_dup = train_boosted_ensemble(duplicated, y, 4, config);
    auto m_pad = train_boosted_ensemble(padded, y, 4, config);
    for (const auto& row : duplicated) {
        // Tie-break on the lowest feature index means the duplicate column
        // is never used, so both models walk identical trees.
        const std::vector<double> pad_row{row[0], 0.0};
        CHECK(ensemble_score(m_dup, row) ==
              doctest::Approx(ensemble_score(m_pad, pad_row)).epsilon(1e-15));
    }
    for (const auto& tree : m_dup.trees) {
        for (const auto& node : tree.nodes) {
            if (!node.is_leaf) CHECK(node.feature == 0);
        }
    }
}

TEST_CASE("zero boosting rounds yield the prior log-odds") {
    std::vector<std::vector<double>> x = {{0.0, 1.0}, {1.0, 0.0}, {0.5, 0.5}, {0.2, 0.8}};
    std::vector<int> y = {1, 1, 1, 0};
    BoostedConfig config;
    config.max_rounds = 0;
    auto model = train_boosted_ensemble(x, y, 2, config);
    CHECK(model.trees.empty());
    CHECK(ensemble_score(model, {9.9, -3.0}) == doctest::Approx(std::log(0.75 / 0.25)));
}

TEST_CASE("a single stump produces exactly two distinct outputs") {
    RegressionTree stump;
    stump.nodes.push_back(TreeNode{false, 0, 0.5, 0.0, 1, 2});
    stump.nodes.push_back(TreeNode{true, -1, 0.0, -1.5, -1, -1});
    stump.nodes.push_back(TreeNode{true, -1, 0.0, 2.5, -1, -1});
    std::set<double> outputs;
    for (double v : {0.0, 0.2, 0.499, 0.5, 0.7, 1.0}) {
        outputs.insert(stump.predict({v, 0.0}));
    }
    CHECK(outputs == std::set<double>{-1.5, 2.5});
}

TEST_CASE("ensemble_score matches a recursive tree-walk oracle on 1000 random inputs") {
    Rng rng(7);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
        const double a = uniform_real(rng, -1.0, 1.0), b = uniform_real(rng, -1.0, 1.0);
        x.push_back({a, b});
        y.push_back(a + 0.3 * b + 0.2 * uniform_real(rng, -1.0, 1.0) > 0.0 ? 1 : 0);
    }
    BoostedConfig config;
    config.max_rounds = 60;
    auto model = train_boosted_ensemble(x, y, 5, config);
    REQUIRE(!model.trees.empty());
    for (int i = 0; i < 1000; ++i) {
        const std::vector<double> probe{uniform_real(rng, -1.5, 1.5), uniform_real(rng, -1.5, 1.5)};
        double expected = model.base_score;
        for (const auto& tree : model.trees) {
            expected += model.shrinkage * oracle_tree_walk(tree, 0, probe);
        }
        CHECK(ensemble_score(model, probe) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("training loss is non-increasing and CV respects the round budget") {
    Rng rng(8);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_data(x, y, 100, rng);
    BoostedConfig config;
    config.max_rounds = 25;
    auto model = train_boosted_ensemble(x, y, 5, config);
    CHECK(model.selected_rounds <= 25);
    for (std::size_t i = 1; i < model.train_loss_curve.size(); ++i) {
        CHECK(model.train_loss_curve[i] <= model.train_loss_curve[i - 1] + 1e-12);
    }
}

TEST_CASE("single-class targets produce a constant model with a warning") {
    std::vector<std::vector<double>> x = {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
    std::vector<int> y = {1, 1, 1};
    auto model = train_boosted_ensemble(x, y, 2, BoostedConfig{});
    CHECK(model.degenerate_single_class);
    CHECK(model.trees.empty());
    CHECK(ensemble_score(model, {0.0, 0.0}) == ensemble_score(model, {5.0, 5.0}));
}

TEST_CASE("train_boosted_ensemble validates its inputs") {
    std::vector<std::vector<double>> one_feature = {{0.1}, {0.2}};
    std::vector<int> y = {0, 1};
    CHECK_THROWS_AS(train_boosted_ensemble(one_feature, y, 2, BoostedConfig{}), ValueError);
    std::vector<std::vector<double>> x = {{0.1, 0.2}, {0.3, 0.4}};
    CHECK_THROWS_AS(train_boosted_ensemble(x, y, 1, BoostedConfig{}), ValueError);
    CHECK_THROWS_AS(ensemble_score(train_boosted_ensemble(x, y, 2, BoostedConfig{}), {0.5}),
                    ValueError);
}

TEST_CASE("deterministic given the seed") {
    Rng rng(9);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    separable_data(x, y, 60, rng);
    BoostedConfig config;
    config.seed = 1234;
    config.max_rounds = 20;
    auto a = train_boosted_ensemble(x, y, 5, config);
    auto b = train_boosted_ensemble(x, y, 5, config);
    CHECK(a.selected_rounds == b.selected_rounds);
    CHECK(ensemble_score(a, {0.5, 0.5}) == ensemble_score(b, {0.5, 0.5}));
}

TEST_CASE("feature files round-trip and validate") {
    FeatureTable table;
    table.feature_names = {"model_score", "bm25"};
    table.rows = {{0.25, 1.5}, {0.75, 0.0}};
    table.targets = {0, 1};
    const std::string path = "test_features_tmp.tsv";
    save_feature_file(path, table);
    auto loaded = load_feature_file(path);
    CHECK(loaded.feature_names == table.feature_names);
    CHECK(loaded.rows == table.rows);
    CHECK(loaded.targets == table.targets);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_feature_file("does_not_exist.tsv"), Error);
}
