// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Run manifests: a self-contained container for a scoring function --
/// configuration, seeds, dataset fingerprint, metrics snapshot, vocabulary
/// and named parameter tensors (text header + raw double payload).
/// Reloading a manifest reproduces inference scores exactly.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtr/models.hpp"
#include "mtr/text.hpp"

namespace mtr {

inline constexpr int kManifestVersion = 1;

struct RunManifest {
    int version = kManifestVersion;
    std::string arch;  // architecture name, or "bm25" for the baseline
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;  // FNV over the canonical config listing
    std::uint64_t dataset_fingerprint = 0;
    std::map<std::string, double> metrics;
    std::vector<std::string> vocab_tokens;  // loaded (non-reserved) tokens
    std::vector<Parameter> tensors;

    bool is_bm25() const { return arch == "bm25"; }
};

std::uint64_t config_hash_of(const std::map<std::string, std::string>& config);

/// Writes atomically (temp file + rename).
void save_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_manifest(const std::string& path);

/// Captures a trained model together with its text pipeline.
RunManifest make_model_manifest(const RankingModel& model, const Vocabulary& vocab,
                                const EmbeddingTable& table, std::uint64_t seed,
                                std::uint64_t dataset_fingerprint,
                                const std::map<std::string, double>& metrics,
                                const std::map<std::string, std::string>& extra_config = {});

struct LoadedModel {
    RankingModel model;
    Vocabulary vocab;
    EmbeddingTable table;
};

/// Rebuilds the model/vocabulary/table from a neural manifest. Throws on
/// bm25 manifests or on missing/mismatched tensors.
LoadedModel restore_model(const RunManifest& manifest);

}  // namespace mtr
