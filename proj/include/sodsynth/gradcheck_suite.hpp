#pragma once

#include <cstdint>
#include <vector>

#include "sodsynth/gradcheck.hpp"

namespace sodsynth {

/// Finite-difference verification of every loss operation plus the full
/// objective through the toy model. Entries named "negative_control" carry
/// a deliberately wrong gradient and are expected to fail; every other
/// entry is expected to pass.
struct GradSuiteResult {
    std::vector<ad::GradCheckReport> reports;
    bool all_passed = false; // real ops passed AND the negative control failed
};

GradSuiteResult run_gradcheck_suite(std::uint64_t seed, int instances_per_op = 20,
                                    double rel_tol = 1e-4, double composite_rel_tol = 1e-3);

} // namespace sodsynth
