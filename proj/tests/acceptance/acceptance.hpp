// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

/// Acceptance harness: each criterion runs standalone, prints one pass/fail
/// line, and contributes to the process exit status.

#pragma once

#include <functional>
#include <string>
#include <vector>

namespace acceptance {

struct CriterionResult {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    std::function<CriterionResult()> run;
};

/// Fast structural criteria (gradients, metric oracles, parameter counts,
/// invariances).
std::vector<Criterion> fast_criteria();

/// Trained-model experiments on the synthetic tasks.
std::vector<Criterion> experiment_criteria();

}  // namespace acceptance
