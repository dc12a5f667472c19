#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace darkisp {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst = 0.0;        // worst observed error or margin
    std::string first_failure;  // seed / case digest of the first failing case
};

/// {grad, basis, lsq, attn, roundtrip}
std::vector<std::string> all_suites();

SuiteResult run_suite(const std::string& name, std::uint64_t seed);

/// Runs the listed suites (all of them when empty) and renders the
/// machine-readable JSON report. `all_passed` is the exit-code decision.
std::string run_verification(const std::vector<std::string>& suites,
                             std::uint64_t seed, bool& all_passed);

}  // namespace darkisp
