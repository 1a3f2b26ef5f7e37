// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Command-line surface: generate / train / evaluate / compare / sweep /
/// size-sweep / ensemble. Thin wrapper over the library; the tools/ binary
/// forwards argv here so tests can drive the same entry point.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtr/dataset.hpp"
#include "mtr/manifest.hpp"
#include "mtr/metrics.hpp"

namespace mtr {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit status (0 on success); failures print a one-line
/// diagnostic to stderr.
int run_command(const std::vector<std::string>& args);

/// key=value lines; '#' starts a comment, blank lines are skipped.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& content);

/// Scores records with whatever scoring function the manifest holds
/// (a restored neural model, or BM25 with stats over these records).
std::vector<ScoredRecord> score_with_manifest(const RunManifest& manifest,
                                              const std::vector<TripletRecord>& records);

}  // namespace mtr
