// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "oopk/tensor.hpp"

namespace oopk {

// Central-difference gradient oracle: (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps)
// per coordinate. Evaluates f only on perturbed copies; independent of the
// reverse-mode engine.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double eps) {
    if (eps <= 0.0) throw UsageError("finite_diff_grad: eps must be > 0");
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double fp = f(probe);
        probe.data[i] = orig - eps;
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace oopk
