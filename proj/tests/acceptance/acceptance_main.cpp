// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include "acceptance.hpp"

int main(int argc, char** argv) {
    int only = 0;  // 0: run everything
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[i + 1]);
            ++i;
        } else if (std::strcmp(argv[i], "--help") == 0) {
            std::printf("usage: acceptance [--only N]\n");
            return 0;
        }
    }

    std::vector<acceptance::Criterion> criteria = acceptance::fast_criteria();
    for (auto& c : acceptance::experiment_criteria()) criteria.push_back(std::move(c));
    std::sort(criteria.begin(), criteria.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });

    int failures = 0;
    for (const auto& criterion : criteria) {
        if (only != 0 && criterion.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        acceptance::CriterionResult result;
        try {
            result = criterion.run();
        } catch (const std::exception& e) {
            result.pass = false;
            result.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %d: %s (%.1fs) %s\n", result.pass ? "PASS" : "FAIL",
                    criterion.id, criterion.title.c_str(), seconds,
                    result.detail.empty() ? "" : ("- " + result.detail).c_str());
        std::fflush(stdout);
        failures += result.pass ? 0 : 1;
    }
    if (failures != 0) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
