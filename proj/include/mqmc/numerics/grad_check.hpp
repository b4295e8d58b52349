#pragma once

#include <functional>
#include <map>
#include <string>

#include "mqmc/numerics/tensor.hpp"

namespace mqmc::num {

using ParamMap = std::map<std::string, Tensor<double>>;

struct LossAndGrad {
    double loss = 0.0;
    ParamMap grads;  // parameters missing here are taken to have zero gradient
};

using LossFn = std::function<LossAndGrad(const ParamMap&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

/// Compares analytic gradients against central differences on every entry of
/// every parameter: |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckReport grad_check(const LossFn& loss_fn, const ParamMap& params, double eps, double tolerance);

}  // namespace mqmc::num
