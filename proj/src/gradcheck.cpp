#include "sodsynth/gradcheck.hpp"

#include <cmath>

namespace sodsynth::ad {

GradCheckReport grad_check(const std::string& op_name, const ScalarFn& f, const Tensor& x,
                           double eps, double rel_tol, double abs_floor) {
    Variable leaf(x, /*requires_grad=*/true);
    Variable y = f(leaf);
    if (!y.value().is_scalar() || y.value().rank() != 0)
        throw UsageError("grad_check: f must return a scalar, got " + y.value().shape_str());
    if (!std::isfinite(y.value().item()))
        throw EvaluationError("grad_check(" + op_name + "): f(x) is not finite");
    backward(y);
    const Tensor analytic = leaf.grad();

    GradCheckReport report;
    report.op_name = op_name;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        const double fp = f(Variable(xp)).value().item();
        const double fm = f(Variable(xm)).value().item();
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw EvaluationError("grad_check(" + op_name + "): perturbed f is not finite");
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double abs_err = std::fabs(a - numeric);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
    }
    report.passed = report.max_rel_error <= rel_tol || report.max_abs_error <= abs_floor;
    return report;
}

} // namespace sodsynth::ad
