// SPDX-License-Identifier: Apache-2.0

#include "oopk/optim.hpp"

#include <cmath>

namespace oopk {

void adam_step(Parameter& param, AdamState& state) {
    if (!param.trainable()) throw UsageError("adam_step: parameter '" + param.name + "' is frozen");
    Tensor& val = param.value();
    if (val.grad.empty()) throw UsageError("adam_step: no gradient on '" + param.name + "'");
    state.t += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < val.data.size(); ++i) {
        const double g = val.grad[i];
        state.m.data[i] = c.beta1 * state.m.data[i] + (1.0 - c.beta1) * g;
        state.v.data[i] = c.beta2 * state.v.data[i] + (1.0 - c.beta2) * g * g;
        const double mhat = state.m.data[i] / bc1;
        const double vhat = state.v.data[i] / bc2;
        val.data[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    val.zero_grad();
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        // Parameters untouched by the current graph carry no gradient; treat
        // as zero gradient (still advances their moment clock).
        params_[i]->value().ensure_grad();
        adam_step(*params_[i], states_[i]);
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->value().zero_grad();
}

}  // namespace oopk
