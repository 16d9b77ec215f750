#pragma once

#include <functional>
#include <string>

#include "sodsynth/autodiff.hpp"

namespace sodsynth::ad {

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool passed = false;
};

/// Scalar-valued function of a tensor, built on the autodiff graph so the
/// same callable serves both the analytic and the finite-difference side.
using ScalarFn = std::function<Variable(const Variable&)>;

/// Compares the analytic gradient of f at x against central finite
/// differences, coordinate by coordinate. Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8). passed is
/// (max_rel_error <= rel_tol || max_abs_error <= abs_floor).
GradCheckReport grad_check(const std::string& op_name, const ScalarFn& f, const Tensor& x,
                           double eps = 1e-5, double rel_tol = 1e-4,
                           double abs_floor = 1e-8);

} // namespace sodsynth::ad
