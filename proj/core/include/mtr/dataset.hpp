// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// The (query, document, grade) triplet format and its loader. Files are
/// line-delimited with tab-separated columns:
///   split  query  grade  title  author  body
/// where split is train|validation|test and grade is
/// NONRELEVANT|RELEVANT|VITAL. Query strings must not repeat across splits.

#pragma once

#include <string>
#include <vector>

#include "mtr/metrics.hpp"

namespace mtr {

struct DocumentFields {
    std::string title, author, body;

    bool empty() const { return title.empty() && author.empty() && body.empty(); }
    std::string concatenated() const;
};

struct TripletRecord {
    std::string query;
    DocumentFields doc;
    RelevanceGrade grade = RelevanceGrade::kNonrelevant;
};

struct DatasetSplit {
    std::vector<TripletRecord> train, validation, test;

    std::size_t total() const { return train.size() + validation.size() + test.size(); }
};

DatasetSplit load_dataset(const std::string& path);
DatasetSplit parse_dataset(const std::string& content);
void save_dataset(const std::string& path, const DatasetSplit& split);
std::string serialize_dataset(const DatasetSplit& split);

/// Checks the invariants the loader enforces (used after programmatic
/// construction too): disjoint query strings, non-empty queries, at least
/// one non-empty document field per record.
void validate_dataset(const DatasetSplit& split);

/// FNV over the canonical serialization; identifies a dataset in manifests.
std::uint64_t dataset_fingerprint(const DatasetSplit& split);

}  // namespace mtr
