// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/boosted.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace mtr {

namespace {

constexpr double kHessianFloor = 1e-6;
constexpr double kMinGain = 1e-12;

double clamp_probability(double p) { return std::min(1.0 - 1e-12, std::max(1e-12, p)); }

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// XGBoost-style exact greedy split on gradient/hessian sums. Ties keep the
/// first candidate found, i.e. the lowest feature index, then the lowest
/// threshold.
SplitChoice best_split(const std::vector<std::vector<double>>& features,
                       const std::vector<double>& grad, const std::vector<double>& hess,
                       const std::vector<int>& idx) {
    SplitChoice choice;
    const int n_features = static_cast<int>(features.front().size());
    double g_total = 0.0, h_total = 0.0;
    for (int i : idx) {
        g_total += grad[static_cast<std::size_t>(i)];
        h_total += hess[static_cast<std::size_t>(i)];
    }
    const double parent_score = g_total * g_total / (h_total + kHessianFloor);

    std::vector<int> order(idx);
    for (int f = 0; f < n_features; ++f) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return features[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] <
                   features[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
        });
        double g_left = 0.0, h_left = 0.0;
        for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
            const int i = order[pos];
            g_left += grad[static_cast<std::size_t>(i)];
            h_left += hess[static_cast<std::size_t>(i)];
            const double v = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
            const double v_next =
                features[static_cast<std::size_t>(order[pos + 1])][static_cast<std::size_t>(f)];
            if (v == v_next) continue;
            const double g_right = g_total - g_left, h_right = h_total - h_left;
            const double gain = g_left * g_left / (h_left + kHessianFloor) +
                                g_right * g_right / (h_right + kHessianFloor) - parent_score;
            if (gain > choice.gain + kMinGain) {
                choice.found = true;
                choice.feature = f;
                choice.threshold = (v + v_next) / 2.0;
                choice.gain = gain;
            }
        }
    }
    return choice;
}

int build_node(RegressionTree& tree, const std::vector<std::vector<double>>& features,
               const std::vector<double>& grad, const std::vector<double>& hess,
               const std::vector<int>& idx, int depth, int max_depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double g = 0.0, h = 0.0;
    for (int i : idx) {
        g += grad[static_cast<std::size_t>(i)];
        h += hess[static_cast<std::size_t>(i)];
    }
    auto& leaf = tree.nodes[static_cast<std::size_t>(node_id)];
    leaf.value = -g / (h + kHessianFloor);

    if (depth >= max_depth || idx.size() < 2) return node_id;
    const auto split = best_split(features, grad, hess, idx);
    if (!split.found) return node_id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx) {
        const double v = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(split.feature)];
        (v < split.threshold ? left_idx : right_idx).push_back(i);
    }
    const int left = build_node(tree, features, grad, hess, left_idx, depth + 1, max_depth);
    const int right = build_node(tree, features, grad, hess, right_idx, depth + 1, max_depth);
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.is_leaf = false;
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return node_id;
}

RegressionTree fit_tree(const std::vector<std::vector<double>>& features,
                        const std::vector<double>& grad, const std::vector<double>& hess,
                        const std::vector<int>& idx, int max_depth) {
    RegressionTree tree;
    build_node(tree, features, grad, hess, idx, 0, max_depth);
    return tree;
}

double prior_log_odds(const std::vector<int>& targets, const std::vector<int>& idx) {
    double pos = 0.0;
    for (int i : idx) pos += targets[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0;
    const double p = clamp_probability(pos / static_cast<double>(idx.size()));
    return std::log(p / (1.0 - p));
}

/// Boosting over the subset `train_idx`. When `eval_idx` is non-empty the
/// held-out loss after each round is appended to `eval_losses`.
std::vector<RegressionTree> boost(const std::vector<std::vector<double>>& features,
                                  const std::vector<int>& targets, const std::vector<int>& train_idx,
                                  const std::vector<int>& eval_idx, int rounds,
                                  const BoostedConfig& config, double base,
                                  std::vector<double>* eval_losses,
                                  std::vector<double>* train_losses) {
    const std::size_t n = features.size();
    std::vector<double> margin(n, base);
    std::vector<double> grad(n, 0.0), hess(n, 0.0);
    std::vector<RegressionTree> trees;

    auto loss_over = [&](const std::vector<int>& idx) {
        double acc = 0.0;
        for (int i : idx) {
            const double p = clamp_probability(1.0 / (1.0 + std::exp(-margin[static_cast<std::size_t>(i)])));
            acc -= targets[static_cast<std::size_t>(i)] != 0 ? std::log(p) : std::log(1.0 - p);
        }
        return acc / static_cast<double>(idx.size());
    };

    double prev_train_loss = loss_over(train_idx);
    for (int round = 0; round < rounds; ++round) {
        for (int i : train_idx) {
            const auto u = static_cast<std::size_t>(i);
            const double p = clamp_probability(1.0 / (1.0 + std::exp(-margin[u])));
            grad[u] = p - static_cast<double>(targets[u]);
            hess[u] = p * (1.0 - p);
        }
        RegressionTree tree = fit_tree(features, grad, hess, train_idx, config.max_depth);
        for (std::size_t i = 0; i < n; ++i) {
            margin[i] += config.shrinkage * tree.predict(features[i]);
        }
        const double train_loss = loss_over(train_idx);
        if (train_loss > prev_train_loss) {
            // A round that cannot improve the fit is dropped and boosting
            // stops; the training loss curve stays non-increasing.
            for (std::size_t i = 0; i < n; ++i) {
                margin[i] -= config.shrinkage * tree.predict(features[i]);
            }
            break;
        }
        prev_train_loss = train_loss;
        trees.push_back(std::move(tree));
        if (train_losses != nullptr) train_losses->push_back(train_loss);
        if (eval_losses != nullptr && !eval_idx.empty()) eval_losses->push_back(loss_over(eval_idx));
    }
    return trees;
}

}  // namespace

double RegressionTree::predict(const std::vector<double>& features) const {
    int node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf) {
        const auto& n = nodes[static_cast<std::size_t>(node)];
        node = features[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(node)].value;
}

BoostedEnsemble train_boosted_ensemble(const std::vector<std::vector<double>>& features,
                                       const std::vector<int>& targets, int folds,
                                       const BoostedConfig& config,
                                       std::vector<std::string> feature_names) {
    if (features.empty() || features.size() != targets.size()) {
        throw ValueError("train_boosted_ensemble: features and targets must be parallel and non-empty");
    }
    const std::size_t n_features = features.front().size();
    if (n_features < 2) {
        throw ValueError(msg("train_boosted_ensemble: expected >= 2 features per example, got ",
                             n_features));
    }
    for (const auto& row : features) {
        if (row.size() != n_features) throw ValueError("train_boosted_ensemble: ragged feature rows");
    }
    if (folds < 2) throw ValueError(msg("train_boosted_ensemble: fold count must be >= 2, got ", folds));

    BoostedEnsemble model;
    model.shrinkage = config.shrinkage;
    model.feature_names = std::move(feature_names);
    if (model.feature_names.empty()) {
        for (std::size_t f = 0; f < n_features; ++f) model.feature_names.push_back(msg("f", f));
    }

    std::vector<int> all_idx(features.size());
    std::iota(all_idx.begin(), all_idx.end(), 0);
    model.base_score = prior_log_odds(targets, all_idx);

    const bool single_class =
        std::all_of(targets.begin(), targets.end(), [&](int t) { return t == targets.front(); });
    if (single_class) {
        model.degenerate_single_class = true;
        return model;
    }

    // Fold assignment: seeded shuffle, then round-robin.
    std::vector<int> shuffled = all_idx;
    Rng rng(config.seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<int> fold_of(features.size());
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
        fold_of[static_cast<std::size_t>(shuffled[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
    }

    // Mean held-out loss per round count; index 0 is the base-only model.
    std::vector<double> cv_loss(static_cast<std::size_t>(config.max_rounds) + 1, 0.0);
    std::vector<int> cv_hits(static_cast<std::size_t>(config.max_rounds) + 1, 0);
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<int> train_idx, eval_idx;
        for (int i : all_idx) {
            (fold_of[static_cast<std::size_t>(i)] == fold ? eval_idx : train_idx).push_back(i);
        }
        if (train_idx.empty() || eval_idx.empty()) continue;
        const double base = prior_log_odds(targets, train_idx);
        std::vector<double> margins(eval_idx.size(), base);
        {
            double acc = 0.0;
            for (std::size_t e = 0; e < eval_idx.size(); ++e) {
                const double p = clamp_probability(1.0 / (1.0 + std::exp(-margins[e])));
                acc -= targets[static_cast<std::size_t>(eval_idx[e])] != 0 ? std::log(p)
                                                                           : std::log(1.0 - p);
            }
            cv_loss[0] += acc / static_cast<double>(eval_idx.size());
            cv_hits[0] += 1;
        }
        std::vector<double> eval_losses;
        boost(features, targets, train_idx, eval_idx, config.max_rounds, config, base, &eval_losses,
              nullptr);
        for (std::size_t r = 0; r < eval_losses.size(); ++r) {
            cv_loss[r + 1] += eval_losses[r];
            cv_hits[r + 1] += 1;
        }
    }

    int best_rounds = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < cv_loss.size(); ++r) {
        if (cv_hits[r] != folds) continue;  // some fold stopped early
        const double mean = cv_loss[r] / static_cast<double>(folds);
        if (mean < best) {
            best = mean;
            best_rounds = static_cast<int>(r);
        }
    }

    model.trees = boost(features, targets, all_idx, {}, best_rounds, config, model.base_score, nullptr,
                        &model.train_loss_curve);
    model.selected_rounds = static_cast<int>(model.trees.size());
    return model;
}

double ensemble_score(const BoostedEnsemble& model, const std::vector<double>& features) {
    if (!model.feature_names.empty() && features.size() != model.feature_names.size()) {
        throw ValueError(msg("ensemble_score: expected ", model.feature_names.size(),
                             " features, got ", features.size()));
    }
    double score = model.base_score;
    for (const auto& tree : model.trees) score += model.shrinkage * tree.predict(features);
    return score;
}

FeatureTable load_feature_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(msg("cannot open feature file: ", path));
    FeatureTable table;
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty feature file", 1);
    ++lineno;
    std::string cell;
    {
        std::istringstream header(line);
        std::vector<std::string> cols;
        while (std::getline(header, cell, '\t')) cols.push_back(cell);
        if (cols.size() < 2 || cols.back() != "target") {
            throw ParseError("header must name feature columns and end with \"target\"", lineno);
        }
        table.feature_names.assign(cols.begin(), cols.end() - 1);
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> row;
        while (std::getline(ls, cell, '\t')) row.push_back(std::stod(cell));
        if (row.size() != table.feature_names.size() + 1) {
            throw ParseError(msg("expected ", table.feature_names.size() + 1, " columns, got ",
                                 row.size()),
                             lineno);
        }
        const double target = row.back();
        row.pop_back();
        if (target != 0.0 && target != 1.0) {
            throw ParseError(msg("target must be 0 or 1, got ", target), lineno);
        }
        table.rows.push_back(std::move(row));
        table.targets.push_back(target != 0.0 ? 1 : 0);
    }
    return table;
}

void save_feature_file(const std::string& path, const FeatureTable& table) {
    std::ofstream out(path);
    if (!out) throw Error(msg("cannot write feature file: ", path));
    for (const auto& name : table.feature_names) out << name << '\t';
    out << "target\n";
    out.precision(17);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (double v : table.rows[i]) out << v << '\t';
        out << table.targets[i] << '\n';
    }
}

}  // namespace mtr
