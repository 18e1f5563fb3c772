// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "oopk/autodiff.hpp"

namespace oopk {

// Named model parameter. Non-trainable parameters never receive gradients
// or optimizer updates.
struct Parameter {
    std::string name;
    ad::Var node;

    Parameter() = default;
    Parameter(std::string n, Tensor t, bool trainable)
        : name(std::move(n)), node(ad::leaf(std::move(t), trainable)) {}

    Tensor& value() { return node->value; }
    const Tensor& value() const { return node->value; }
    bool trainable() const { return node->requires_grad; }
    void set_trainable(bool t) { node->requires_grad = t; }
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Tensor m;
    Tensor v;
    long t = 0;
    AdamConfig cfg;

    explicit AdamState(const std::vector<int>& shape, AdamConfig c = {})
        : m(shape), v(shape), cfg(c) {}
};

// One bias-corrected Adam update; consumes and clears the gradient.
void adam_step(Parameter& param, AdamState& state);

// Optimizer over a parameter set; skips non-trainable entries at registration.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void add(Parameter* p) {
        if (!p->trainable()) return;
        params_.push_back(p);
        states_.emplace_back(p->value().shape, cfg_);
    }

    void step();
    void zero_grad();
    long step_count() const { return states_.empty() ? 0 : states_.front().t; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Parameter*> params_;
    std::vector<AdamState> states_;
};

}  // namespace oopk
