// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Gradient-boosted regression trees with logistic loss, used to fuse a
/// neural model score with BM25 and measure how much signal the neural
/// model leaves on the table.

#pragma once

#include <string>
#include <vector>

#include "mtr/common.hpp"

namespace mtr {

struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;  // leaf output
    int left = -1, right = -1;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(const std::vector<double>& features) const;
};

struct BoostedConfig {
    int max_rounds = 200;
    double shrinkage = 0.1;
    int max_depth = 2;
    std::uint64_t seed = 0;
};

struct BoostedEnsemble {
    std::vector<RegressionTree> trees;
    double shrinkage = 0.1;
    double base_score = 0.0;  // prior log-odds
    std::vector<std::string> feature_names;
    int selected_rounds = 0;
    bool degenerate_single_class = false;   // constant model, see training notes
    std::vector<double> train_loss_curve;   // loss after each kept round
};

/// Fits with k-fold cross-validation selecting the round count, then refits
/// on all data. Splits tie-break toward the lowest feature index and
/// threshold, so duplicated columns change nothing. Single-class targets
/// yield a constant model with `degenerate_single_class` set.
BoostedEnsemble train_boosted_ensemble(const std::vector<std::vector<double>>& features,
                                       const std::vector<int>& targets, int folds,
                                       const BoostedConfig& config,
                                       std::vector<std::string> feature_names = {});

/// base_score + shrinkage * sum of leaf outputs (a real-valued margin).
double ensemble_score(const BoostedEnsemble& model, const std::vector<double>& features);

inline double ensemble_probability(const BoostedEnsemble& model, const std::vector<double>& features) {
    const double s = ensemble_score(model, features);
    return 1.0 / (1.0 + std::exp(-s));
}

/// Tab-separated feature table: header row names the feature columns plus a
/// final "target" column of 0/1 values.
struct FeatureTable {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> rows;
    std::vector<int> targets;
};

FeatureTable load_feature_file(const std::string& path);
void save_feature_file(const std::string& path, const FeatureTable& table);

}  // namespace mtr
