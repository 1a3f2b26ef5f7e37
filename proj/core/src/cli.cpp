// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include "mtr/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtr/bm25.hpp"
#include "mtr/boosted.hpp"
#include "mtr/synthetic.hpp"
#include "mtr/train.hpp"

namespace mtr {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<std::string, std::string> parse_config_text(const std::string& content) {
    std::map<std::string, std::string> out;
    std::istringstream in(content);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && line[start] == ' ') ++start;
        if (start >= line.size()) continue;
        const auto eq = line.find('=', start);
        if (eq == std::string::npos) {
            throw ParseError(msg("expected key=value, got \"", line.substr(start), "\""), lineno);
        }
        std::string key = line.substr(start, eq - start);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        while (!value.empty() && value.front() == ' ') value.erase(value.begin());
        if (key.empty()) throw ParseError("empty key", lineno);
        out[key] = value;
    }
    return out;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(msg("cannot open config file: ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(msg("cannot write ", tmp));
        out << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error(msg("cannot move ", tmp, " into place at ", path));
    }
}

std::string out_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("--out is required");
    fs::create_directories(dir);
}

// -- config plumbing --------------------------------------------------------

TrainingConfig training_config_from(const std::map<std::string, std::string>& cfg) {
    TrainingConfig t;
    auto get = [&cfg](const char* key, const std::string& fallback) {
        auto it = cfg.find(key);
        return it == cfg.end() ? fallback : it->second;
    };
    t.learning_rate = std::stod(get("learning_rate", "0.001"));
    t.batch_size = std::stoi(get("batch_size", "200"));
    t.epochs = std::stod(get("epochs", "4.0"));
    t.dropout = std::stod(get("dropout", "0.2"));
    t.subsample = std::stod(get("subsample", "1.0"));
    t.targets = target_mode_from_string(get("targets", "soft"));
    return t;
}

std::map<std::string, std::string> training_config_map(const TrainingConfig& t) {
    std::map<std::string, std::string> m;
    m["learning_rate"] = std::to_string(t.learning_rate);
    m["batch_size"] = std::to_string(t.batch_size);
    m["epochs"] = std::to_string(t.epochs);
    m["subsample"] = std::to_string(t.subsample);
    m["targets"] = target_mode_name(t.targets);
    return m;
}

// -- report rendering -------------------------------------------------------

json metrics_json(const MetricsReport& report) {
    json j;
    j["loss"] = report.test_loss;
    j["ndcg1"] = report.mean_ndcg1;
    j["ndcg3"] = report.mean_ndcg3;
    j["ndcg10"] = report.mean_ndcg10;
    j["err"] = report.mean_err;
    j["auc"] = report.auc;
    j["flagged_queries"] = report.flagged_queries;
    return j;
}

/// One line-delimited record with the stable reporting fields.
std::string report_line(int run_id, const std::map<std::string, std::string>& config, double epoch,
                        const std::string& split, double loss, const MetricsReport* report) {
    json j;
    j["run_id"] = run_id;
    j["config"] = config;
    j["epoch"] = epoch;
    j["split"] = split;
    j["loss"] = loss;
    if (report != nullptr) {
        j["ndcg1"] = report->mean_ndcg1;
        j["ndcg3"] = report->mean_ndcg3;
        j["ndcg10"] = report->mean_ndcg10;
        j["err"] = report->mean_err;
        j["auc"] = report->auc;
    }
    return j.dump();
}

MetricsReport report_for_scored(const std::vector<ScoredRecord>& scored) {
    return compute_metrics(scored);
}

// -- scoring helpers --------------------------------------------------------

std::vector<ScoredRecord> score_records_bm25(const std::vector<TripletRecord>& records,
                                             const Bm25Params& params) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(records.size());
    for (const auto& r : records) docs.push_back(tokenize(r.doc.concatenated()));
    const auto stats = CorpusStats::build(docs);
    std::vector<ScoredRecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.push_back(ScoredRecord{records[i].query,
                                   bm25_score(tokenize(records[i].query), docs[i], stats, params),
                                   records[i].grade});
    }
    return out;
}

const std::vector<TripletRecord>& pick_split(const DatasetSplit& data, const std::string& name) {
    if (name == "train") return data.train;
    if (name == "validation") return data.validation;
    if (name == "test") return data.test;
    throw UsageError(msg("unknown split \"", name, "\" (expected train | validation | test)"));
}

}  // namespace

std::vector<ScoredRecord> score_with_manifest(const RunManifest& manifest,
                                              const std::vector<TripletRecord>& records) {
    if (manifest.is_bm25()) {
        Bm25Params params;
        auto it = manifest.config.find("k1");
        if (it != manifest.config.end()) params.k1 = std::stod(it->second);
        it = manifest.config.find("b");
        if (it != manifest.config.end()) params.b = std::stod(it->second);
        return score_records_bm25(records, params);
    }
    auto loaded = restore_model(manifest);
    auto examples = prepare_examples(records, loaded.vocab);
    return score_examples(loaded.model, examples, loaded.vocab, loaded.table);
}

namespace {

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

struct CommonFlags {
    std::string data, embeddings, arch = "match_tensor", encoder = "bilstm", config, out;
    std::uint64_t seed = 0;
};

int cmd_generate(const std::string& task, std::uint64_t seed, const std::string& out_dir,
                 int vocab_size, int queries, int val_queries, int test_queries, int results,
                 int dim) {
    ensure_out_dir(out_dir);
    SyntheticTaskSpec spec;
    spec.kind = task_from_string(task);
    spec.seed = seed;
    spec.vocab_size = vocab_size;
    spec.train_queries = queries;
    spec.validation_queries = val_queries;
    spec.test_queries = test_queries;
    spec.results_per_query = results;
    spec.embedding_dim = dim;
    auto output = generate_synthetic(spec);
    save_dataset(out_path(out_dir, "dataset.tsv"), output.dataset);
    write_text_atomic(out_path(out_dir, "embeddings.txt"), output.embedding_file);
    std::cout << "generated " << task_name(spec.kind) << " task: " << output.dataset.train.size()
              << " train, " << output.dataset.validation.size() << " validation, "
              << output.dataset.test.size() << " test triplets -> " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonFlags& flags) {
    if (flags.data.empty()) throw UsageError("--data is required");
    ensure_out_dir(flags.out);
    auto data = load_dataset(flags.data);
    const auto fingerprint = dataset_fingerprint(data);

    std::map<std::string, std::string> cfg;
    if (!flags.config.empty()) cfg = parse_config_file(flags.config);
    auto tconfig = training_config_from(cfg);
    tconfig.seed = flags.seed;

    if (flags.arch == "bm25") {
        Bm25Params params;
        if (cfg.count("k1")) params.k1 = std::stod(cfg.at("k1"));
        if (cfg.count("b")) params.b = std::stod(cfg.at("b"));
        auto scored = score_records_bm25(data.test, params);
        auto report = report_for_scored(scored);
        RunManifest manifest;
        manifest.arch = "bm25";
        manifest.config["k1"] = std::to_string(params.k1);
        manifest.config["b"] = std::to_string(params.b);
        manifest.seed = flags.seed;
        manifest.dataset_fingerprint = fingerprint;
        manifest.metrics["auc"] = report.auc;
        manifest.metrics["ndcg10"] = report.mean_ndcg10;
        manifest.metrics["err"] = report.mean_err;
        save_manifest(out_path(flags.out, "manifest.mtm"), manifest);
        std::string lines = report_line(0, manifest.config, 0.0, "test", 0.0, &report) + "\n";
        write_text_atomic(out_path(flags.out, "metrics.jsonl"), lines);
        json j = metrics_json(report);
        j["arch"] = "bm25";
        write_text_atomic(out_path(flags.out, "report.json"), j.dump(2) + "\n");
        std::cout << "bm25 test AUC " << report.auc << ", NDCG@10 " << report.mean_ndcg10 << "\n";
        return 0;
    }

    if (flags.embeddings.empty()) throw UsageError("--embeddings is required");
    auto [vocab, table] = load_embeddings(flags.embeddings);

    ModelConfig mconfig = ModelConfig::from_map(cfg);
    mconfig.encoder = encoder_kind_from_string(flags.encoder);
    mconfig.dropout = tconfig.dropout;
    const Arch arch = arch_from_string(flags.arch);

    auto model = RankingModel::create(arch, mconfig, table.dim, flags.seed);
    auto result = train(model, data, vocab, table, tconfig);

    auto full_config = mconfig.to_map();
    for (const auto& [k, v] : training_config_map(tconfig)) full_config[k] = v;

    std::string lines;
    for (const auto& entry : result.log) {
        lines += report_line(0, full_config, entry.epoch, entry.split, entry.loss,
                             entry.metrics ? &*entry.metrics : nullptr);
        lines += '\n';
    }
    write_text_atomic(out_path(flags.out, "train_log.jsonl"), lines);

    auto report = evaluate_model(model, data.test, vocab, table, tconfig.targets);
    std::map<std::string, double> metrics = {{"auc", report.auc},
                                             {"ndcg1", report.mean_ndcg1},
                                             {"ndcg3", report.mean_ndcg3},
                                             {"ndcg10", report.mean_ndcg10},
                                             {"err", report.mean_err},
                                             {"test_loss", report.test_loss},
                                             {"validation_loss", result.final_validation_loss}};
    auto manifest = make_model_manifest(model, vocab, table, flags.seed, fingerprint, metrics,
                                        training_config_map(tconfig));
    save_manifest(out_path(flags.out, "manifest.mtm"), manifest);

    json j = metrics_json(report);
    j["arch"] = flags.arch;
    j["encoder"] = flags.encoder;
    j["validation_loss"] = result.final_validation_loss;
    j["steps"] = result.steps;
    auto counts = count_parameters(model);
    j["trainable_parameters"] = counts.total;
    write_text_atomic(out_path(flags.out, "report.json"), j.dump(2) + "\n");
    write_text_atomic(out_path(flags.out, "metrics.jsonl"),
                      report_line(0, full_config, tconfig.epochs, "test", report.test_loss, &report) +
                          "\n");
    std::cout << "trained " << flags.arch << "/" << flags.encoder << ": validation loss "
              << result.final_validation_loss << ", test AUC " << report.auc << "\n";
    return 0;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& data_path,
                 const std::string& split, const std::string& out_dir) {
    if (manifest_path.empty()) throw UsageError("--manifest is required");
    if (data_path.empty()) throw UsageError("--data is required");
    auto manifest = load_manifest(manifest_path);
    auto data = load_dataset(data_path);
    auto scored = score_with_manifest(manifest, pick_split(data, split));
    auto report = report_for_scored(scored);
    json j = metrics_json(report);
    j["arch"] = manifest.arch;
    j["split"] = split;
    std::cout << j.dump(2) << "\n";
    if (!out_dir.empty()) {
        ensure_out_dir(out_dir);
        write_text_atomic(out_path(out_dir, "report.json"), j.dump(2) + "\n");
        write_text_atomic(out_path(out_dir, "metrics.jsonl"),
                          report_line(0, manifest.config, 0.0, split, report.test_loss, &report) +
                              "\n");
    }
    return 0;
}

int cmd_compare(const std::string& baseline_path, const std::string& candidate_path,
                const std::string& data_path, const std::string& split, const std::string& out_dir) {
    if (baseline_path.empty() || candidate_path.empty()) {
        throw UsageError("--baseline and --candidate are required");
    }
    if (data_path.empty()) throw UsageError("--data is required");
    auto baseline = load_manifest(baseline_path);
    auto candidate = load_manifest(candidate_path);
    auto data = load_dataset(data_path);
    const auto& records = pick_split(data, split);
    auto base_report = report_for_scored(score_with_manifest(baseline, records));
    auto cand_report = report_for_scored(score_with_manifest(candidate, records));

    struct Row {
        const char* name;
        double base, cand;
    };
    const Row rows[] = {{"ndcg1", base_report.mean_ndcg1, cand_report.mean_ndcg1},
                        {"ndcg3", base_report.mean_ndcg3, cand_report.mean_ndcg3},
                        {"ndcg10", base_report.mean_ndcg10, cand_report.mean_ndcg10},
                        {"err", base_report.mean_err, cand_report.mean_err},
                        {"auc", base_report.auc, cand_report.auc}};
    json deltas;
    std::cout << "metric      baseline   candidate  delta%\n";
    for (const auto& row : rows) {
        const double delta = row.base != 0.0 ? (row.cand - row.base) / row.base * 100.0 : 0.0;
        std::printf("%-10s  %9.4f  %9.4f  %+7.2f\n", row.name, row.base, row.cand, delta);
        deltas[row.name] = {{"baseline", row.base}, {"candidate", row.cand}, {"delta_pct", delta}};
    }
    if (!out_dir.empty()) {
        ensure_out_dir(out_dir);
        json j;
        j["baseline"] = baseline.arch;
        j["candidate"] = candidate.arch;
        j["split"] = split;
        j["metrics"] = deltas;
        write_text_atomic(out_path(out_dir, "compare.json"), j.dump(2) + "\n");
    }
    return 0;
}

HyperRange range_from(const std::map<std::string, std::string>& cfg, const char* key,
                      HyperRange fallback) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    const auto colon = it->second.find(':');
    if (colon == std::string::npos) {
        const int v = std::stoi(it->second);
        return HyperRange{v, v};
    }
    return HyperRange{std::stoi(it->second.substr(0, colon)), std::stoi(it->second.substr(colon + 1))};
}

std::pair<double, double> real_range_from(const std::map<std::string, std::string>& cfg,
                                          const char* key, double lo, double hi) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return {lo, hi};
    const auto colon = it->second.find(':');
    if (colon == std::string::npos) {
        const double v = std::stod(it->second);
        return {v, v};
    }
    return {std::stod(it->second.substr(0, colon)), std::stod(it->second.substr(colon + 1))};
}

int cmd_sweep(const CommonFlags& flags, int runs) {
    if (flags.data.empty() || flags.embeddings.empty()) {
        throw UsageError("--data and --embeddings are required");
    }
    ensure_out_dir(flags.out);
    auto data = load_dataset(flags.data);
    auto [vocab, table] = load_embeddings(flags.embeddings);

    std::map<std::string, std::string> cfg;
    if (!flags.config.empty()) cfg = parse_config_file(flags.config);
    SearchSpace space;
    space.projection_dim = range_from(cfg, "projection_dim", space.projection_dim);
    space.query_hidden = range_from(cfg, "query_hidden", space.query_hidden);
    space.doc_hidden = range_from(cfg, "doc_hidden", space.doc_hidden);
    space.hidden_dim = range_from(cfg, "hidden_dim", space.hidden_dim);
    space.state_dim = range_from(cfg, "state_dim", space.state_dim);
    space.filters1 = range_from(cfg, "filters1", space.filters1);
    space.filters2 = range_from(cfg, "filters2", space.filters2);
    std::tie(space.epochs_lo, space.epochs_hi) = real_range_from(cfg, "epochs", 4.0, 4.0);
    std::tie(space.dropout_lo, space.dropout_hi) = real_range_from(cfg, "dropout", 0.2, 0.2);

    auto base = training_config_from(cfg);
    base.seed = flags.seed;
    const Arch arch = arch_from_string(flags.arch);
    const EncoderKind encoder = encoder_kind_from_string(flags.encoder);

    auto result = random_search(arch, encoder, space, runs, data, vocab, table, base, flags.seed);

    std::string lines;
    for (const auto& trial : result.trials) {
        auto config = trial.config.to_map();
        for (const auto& [k, v] : training_config_map(trial.training)) config[k] = v;
        json j = json::parse(report_line(trial.run_id, config, trial.training.epochs, "validation",
                                         trial.validation_loss, nullptr));
        j["auc"] = trial.validation_auc;
        lines += j.dump();
        lines += '\n';
    }
    write_text_atomic(out_path(flags.out, "trials.jsonl"), lines);

    std::string best_cfg;
    for (const auto& [k, v] : result.best.config.to_map()) best_cfg += k + "=" + v + "\n";
    for (const auto& [k, v] : training_config_map(result.best.training)) best_cfg += k + "=" + v + "\n";
    write_text_atomic(out_path(flags.out, "best_config.cfg"), best_cfg);

    // Refit the winning configuration and persist it.
    auto model = RankingModel::create(arch, result.best.config, table.dim, result.best.training.seed);
    train(model, data, vocab, table, result.best.training);
    auto report = evaluate_model(model, data.test, vocab, table, result.best.training.targets);
    std::map<std::string, double> metrics = {{"auc", report.auc},
                                             {"validation_loss", result.best.validation_loss},
                                             {"test_loss", report.test_loss}};
    auto manifest = make_model_manifest(model, vocab, table, result.best.training.seed,
                                        dataset_fingerprint(data), metrics,
                                        training_config_map(result.best.training));
    save_manifest(out_path(flags.out, "manifest.mtm"), manifest);
    std::cout << "sweep: best run " << result.best.run_id << " validation loss "
              << result.best.validation_loss << ", refit test AUC " << report.auc << "\n";
    return 0;
}

int cmd_size_sweep(const CommonFlags& flags, const std::string& fractions_csv) {
    if (flags.data.empty() || flags.embeddings.empty()) {
        throw UsageError("--data and --embeddings are required");
    }
    ensure_out_dir(flags.out);
    auto data = load_dataset(flags.data);
    auto [vocab, table] = load_embeddings(flags.embeddings);

    std::vector<double> fractions;
    std::istringstream fs_in(fractions_csv);
    std::string cell;
    while (std::getline(fs_in, cell, ',')) {
        if (!cell.empty()) fractions.push_back(std::stod(cell));
    }
    if (fractions.empty()) throw UsageError("--fractions must list at least one value");

    std::map<std::string, std::string> cfg;
    if (!flags.config.empty()) cfg = parse_config_file(flags.config);
    auto tconfig = training_config_from(cfg);
    tconfig.seed = flags.seed;
    ModelConfig mconfig = ModelConfig::from_map(cfg);
    mconfig.encoder = encoder_kind_from_string(flags.encoder);
    mconfig.dropout = tconfig.dropout;

    auto curve = training_size_sweep(arch_from_string(flags.arch), mconfig, tconfig, data, vocab,
                                     table, fractions);
    std::string lines;
    std::cout << "fraction  test_loss  test_auc\n";
    for (const auto& point : curve) {
        json j;
        j["fraction"] = point.fraction;
        j["test_loss"] = point.test_loss;
        j["auc"] = point.test_auc;
        j["validation_loss"] = point.validation_loss;
        lines += j.dump();
        lines += '\n';
        std::printf("%8.2f  %9.4f  %8.4f\n", point.fraction, point.test_loss, point.test_auc);
    }
    write_text_atomic(out_path(flags.out, "size_sweep.jsonl"), lines);
    return 0;
}

FeatureTable features_for(const RunManifest& manifest, const std::vector<TripletRecord>& records) {
    FeatureTable table;
    table.feature_names = {"model_score", "bm25"};
    auto model_scored = score_with_manifest(manifest, records);
    auto bm25_scored = score_records_bm25(records, Bm25Params{});
    for (std::size_t i = 0; i < records.size(); ++i) {
        table.rows.push_back({model_scored[i].score, bm25_scored[i].score});
        table.targets.push_back(grade_is_positive(records[i].grade) ? 1 : 0);
    }
    return table;
}

int cmd_ensemble(const std::string& manifest_path, const std::string& data_path,
                 const std::string& features_train, const std::string& features_test,
                 const std::string& out_dir, std::uint64_t seed, int folds) {
    ensure_out_dir(out_dir);
    FeatureTable train_features, test_features;
    json j;
    if (!features_train.empty()) {
        train_features = load_feature_file(features_train);
        if (!features_test.empty()) test_features = load_feature_file(features_test);
        j["source"] = "feature_files";
    } else {
        if (manifest_path.empty() || data_path.empty()) {
            throw UsageError("ensemble needs either --features-train or --manifest with --data");
        }
        auto manifest = load_manifest(manifest_path);
        auto data = load_dataset(data_path);
        // Per-fold fitting happens on the validation split; the test split
        // only measures the outcome.
        train_features = features_for(manifest, data.validation);
        test_features = features_for(manifest, data.test);
        save_feature_file(out_path(out_dir, "features.validation.tsv"), train_features);
        save_feature_file(out_path(out_dir, "features.test.tsv"), test_features);
        j["source"] = "manifest";
        j["model_arch"] = manifest.arch;
    }

    BoostedConfig config;
    config.seed = seed;
    auto ensemble =
        train_boosted_ensemble(train_features.rows, train_features.targets, folds, config,
                               train_features.feature_names);
    j["selected_rounds"] = ensemble.selected_rounds;
    j["degenerate_single_class"] = ensemble.degenerate_single_class;

    if (!test_features.rows.empty()) {
        std::vector<double> model_scores, ensemble_scores;
        std::vector<bool> labels;
        for (std::size_t i = 0; i < test_features.rows.size(); ++i) {
            model_scores.push_back(test_features.rows[i][0]);
            ensemble_scores.push_back(ensemble_score(ensemble, test_features.rows[i]));
            labels.push_back(test_features.targets[i] != 0);
        }
        const double model_auc = roc_auc(model_scores, labels);
        const double ensemble_auc = roc_auc(ensemble_scores, labels);
        j["model_auc"] = model_auc;
        j["ensemble_auc"] = ensemble_auc;
        j["auc_gain"] = ensemble_auc - model_auc;
        std::cout << "model AUC " << model_auc << " -> ensemble AUC " << ensemble_auc << " (gain "
                  << ensemble_auc - model_auc << ")\n";
    }
    write_text_atomic(out_path(out_dir, "ensemble.json"), j.dump(2) + "\n");
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"neural relevance-ranking toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate a synthetic task dataset + embeddings");
    std::string gen_task = "exact_match", gen_out;
    std::uint64_t gen_seed = 0;
    int gen_vocab = 400, gen_queries = 300, gen_val = 60, gen_test = 120, gen_results = 17,
        gen_dim = 24;
    gen->add_option("--task", gen_task, "exact_match | order_sensitive | semantic");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--vocab-size", gen_vocab, "word tokens in the vocabulary");
    gen->add_option("--queries", gen_queries, "training queries");
    gen->add_option("--val-queries", gen_val, "validation queries");
    gen->add_option("--test-queries", gen_test, "test queries");
    gen->add_option("--results-per-query", gen_results, "documents per query group");
    gen->add_option("--dim", gen_dim, "embedding dimension");

    // shared flags for train-like commands
    auto add_common = [](CLI::App* cmd, CommonFlags& flags, bool with_arch = true) {
        cmd->add_option("--data", flags.data, "dataset file (tab-separated triplets)");
        cmd->add_option("--embeddings", flags.embeddings, "embedding file");
        if (with_arch) {
            cmd->add_option("--arch", flags.arch, "match_tensor | ssm | mt_exact_ssm | mt_ssm | bm25");
            cmd->add_option("--encoder", flags.encoder, "bilstm | cnn");
        }
        cmd->add_option("--config", flags.config, "key=value config file");
        cmd->add_option("--seed", flags.seed, "run seed");
        cmd->add_option("--out", flags.out, "output directory");
    };

    auto* train_cmd = app.add_subcommand("train", "train a model and write a manifest");
    CommonFlags train_flags;
    add_common(train_cmd, train_flags);

    auto* eval_cmd = app.add_subcommand("evaluate", "score a dataset split with a manifest");
    std::string eval_manifest, eval_data, eval_split = "test", eval_out;
    eval_cmd->add_option("--manifest", eval_manifest, "manifest file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset file")->required();
    eval_cmd->add_option("--split", eval_split, "train | validation | test");
    eval_cmd->add_option("--out", eval_out, "output directory (optional)");

    auto* cmp_cmd = app.add_subcommand("compare", "relative metric deltas between two manifests");
    std::string cmp_base, cmp_cand, cmp_data, cmp_split = "test", cmp_out;
    cmp_cmd->add_option("--baseline", cmp_base, "baseline manifest")->required();
    cmp_cmd->add_option("--candidate", cmp_cand, "candidate manifest")->required();
    cmp_cmd->add_option("--data", cmp_data, "dataset file")->required();
    cmp_cmd->add_option("--split", cmp_split, "train | validation | test");
    cmp_cmd->add_option("--out", cmp_out, "output directory (optional)");

    auto* sweep_cmd = app.add_subcommand("sweep", "random hyperparameter search");
    CommonFlags sweep_flags;
    int sweep_runs = 20;
    add_common(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--runs", sweep_runs, "number of sampled configurations");

    auto* size_cmd = app.add_subcommand("size-sweep", "training-size sensitivity curve");
    CommonFlags size_flags;
    std::string size_fractions = "0.1,0.25,0.5,1.0";
    add_common(size_cmd, size_flags);
    size_cmd->add_option("--fractions", size_fractions, "comma-separated fractions in (0,1]");

    auto* ens_cmd = app.add_subcommand("ensemble", "boosted trees over model score + BM25");
    std::string ens_manifest, ens_data, ens_ftrain, ens_ftest, ens_out;
    std::uint64_t ens_seed = 0;
    int ens_folds = 5;
    ens_cmd->add_option("--manifest", ens_manifest, "neural model manifest");
    ens_cmd->add_option("--data", ens_data, "dataset file");
    ens_cmd->add_option("--features-train", ens_ftrain, "feature file to fit on (alternative)");
    ens_cmd->add_option("--features-test", ens_ftest, "feature file to evaluate on");
    ens_cmd->add_option("--out", ens_out, "output directory")->required();
    ens_cmd->add_option("--seed", ens_seed, "cross-validation seed");
    ens_cmd->add_option("--folds", ens_folds, "cross-validation folds");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            return cmd_generate(gen_task, gen_seed, gen_out, gen_vocab, gen_queries, gen_val,
                                gen_test, gen_results, gen_dim);
        }
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_manifest, eval_data, eval_split, eval_out);
        if (cmp_cmd->parsed()) return cmd_compare(cmp_base, cmp_cand, cmp_data, cmp_split, cmp_out);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, sweep_runs);
        if (size_cmd->parsed()) return cmd_size_sweep(size_flags, size_fractions);
        if (ens_cmd->parsed()) {
            return cmd_ensemble(ens_manifest, ens_data, ens_ftrain, ens_ftest, ens_out, ens_seed,
                                ens_folds);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace mtr
