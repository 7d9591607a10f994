#pragma once

// The acceptance suite: twelve criteria, each reduced to a measured value,
// a threshold and a verdict.

#include <cstddef>
#include <string>
#include <vector>

namespace ahrf {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
    double seconds = 0.0;
};

struct SuiteOptions {
    std::string scenario_dir = AHRF_SCENARIO_DIR;
    std::size_t workers = 0;  // 0: hardware concurrency
    /// Multiplies every threshold; anything other than 1 is for exercising the failure path.
    double tolerance_scale = 1.0;
    /// Criteria to run; empty runs all twelve.
    std::vector<int> only;
};

struct SuiteReport {
    std::vector<CriterionResult> criteria;
    double seconds = 0.0;

    bool all_passed() const;
    /// One line per criterion.
    std::string table() const;
};

SuiteReport run_acceptance_suite(const SuiteOptions& options = {});

}  // namespace ahrf
