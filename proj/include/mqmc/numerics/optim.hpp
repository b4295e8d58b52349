#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mqmc/numerics/tensor.hpp"

namespace mqmc::num {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    Tensor<T> first;
    Tensor<T> second;
    std::uint64_t step = 0;
    AdamHyper hyper;

    AdamState() = default;
    explicit AdamState(const Shape& shape, AdamHyper h = {}) : first(shape), second(shape), hyper(h) {}
};

// Adam with bias correction and decoupled weight decay: the parameter is
// scaled by (1 - lr * weight_decay) before the moment-based delta is applied.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr, double weight_decay) {
    if (param.shape() != grad.shape() || state.first.shape() != param.shape()) {
        throw NumericsError("adam_step: shape mismatch between parameter " + shape_string(param.shape()) +
                            " and gradient " + shape_string(grad.shape()));
    }
    if (lr < 0.0) throw NumericsError("adam_step: negative learning rate");
    if (!grad.all_finite()) throw NumericsError("adam_step: non-finite gradient");

    state.step += 1;
    const double b1 = state.hyper.beta1;
    const double b2 = state.hyper.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double decay = 1.0 - lr * weight_decay;

    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double m = b1 * state.first[i] + (1.0 - b1) * g;
        const double v = b2 * state.second[i] + (1.0 - b2) * g * g;
        state.first[i] = static_cast<T>(m);
        state.second[i] = static_cast<T>(v);
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        const double updated = decay * param[i] - lr * m_hat / (std::sqrt(v_hat) + state.hyper.eps);
        param[i] = static_cast<T>(updated);
    }
}

/// base * 0.5 * (1 + cos(pi * step / total)), step clamped to [0, total].
inline double cosine_lr(std::uint64_t step, std::uint64_t total, double base) {
    if (total == 0) throw NumericsError("cosine_lr: total steps must be positive");
    if (step > total) step = total;
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    const double lr = base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return lr < 0.0 ? 0.0 : lr;
}

struct LrSchedule {
    double base = 1e-4;
    std::uint64_t total = 1;
    std::uint64_t current = 0;

    double lr() const { return cosine_lr(current, total, base); }
    void advance() {
        if (current < total) ++current;
    }
};

}  // namespace mqmc::num
