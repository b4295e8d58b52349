#include "mqmc/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mqmc::num {

GradCheckReport grad_check(const LossFn& loss_fn, const ParamMap& params, double eps, double tolerance) {
    GradCheckReport report;
    const LossAndGrad base = loss_fn(params);
    ParamMap probe = params;

    for (const auto& [name, tensor] : params) {
        const auto found = base.grads.find(name);
        if (found != base.grads.end() && found->second.shape() != tensor.shape()) {
            throw NumericsError("grad_check: gradient for '" + name + "' has shape " +
                                shape_string(found->second.shape()));
        }
        Tensor<double>& slot = probe.at(name);
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const double original = slot[i];
            slot[i] = original + eps;
            const double up = loss_fn(probe).loss;
            slot[i] = original - eps;
            const double down = loss_fn(probe).loss;
            slot[i] = original;

            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = found != base.grads.end() ? found->second[i] : 0.0;
            const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            const double rel = std::abs(analytic - numeric) / scale;
            ++report.checked;
            if (rel > report.max_rel_error || report.worst_param.empty()) {
                report.max_rel_error = std::max(rel, report.max_rel_error);
                if (rel >= report.max_rel_error) {
                    report.worst_param = name;
                    report.worst_index = i;
                    report.worst_analytic = analytic;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace mqmc::num
