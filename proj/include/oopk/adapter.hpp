// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapter tuning: a frozen base weight W0 [d,k] gains a trainable
// pair (B [d,r], A [r,k]) so the effective weight is W0 + BA. B starts at
// zero, so a freshly injected adapter is the identity change. A soft
// orthogonality penalty pushes (BA)^T (BA) toward I_k.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oopk/optim.hpp"
#include "oopk/rng.hpp"

namespace oopk {

enum class OrthReduction { Mean, Sum };

struct LowRankAdapter {
    Parameter A;  // [r,k], Gaussian init
    Parameter B;  // [d,r], zero init
    int rank = 0;

    int d() const { return B.value().dim(0); }
    int k() const { return A.value().dim(1); }
};

// A ~ N(0, sigma^2) from the given rng; B = 0. Requires 1 <= r <= min(d,k).
LowRankAdapter adapter_init(const std::string& name, int d, int k, int r, double sigma, Rng rng);

// ΔW = B*A materialized (merge/tests only, not the forward hot path).
Tensor adapter_delta(const LowRankAdapter& ad);

// Forward contribution B*(A*x) for a column input [k,1] -> [d,1].
ad::Var adapter_apply(const LowRankAdapter& ad, const ad::Var& x_col);

// mean (or sum) over k^2 entries of ((BA)^T (BA) - I_k)^2, differentiable.
ad::Var orth_loss(const LowRankAdapter& ad, OrthReduction red = OrthReduction::Mean);

// Sum of orth_loss over a non-empty adapter set.
ad::Var total_orth_loss(const std::vector<const LowRankAdapter*>& adapters,
                        OrthReduction red = OrthReduction::Mean);

// Dense adapted layer: y = W0 x + B(Ax) (+ bias). W0 and bias stay frozen.
struct AdaptedLinear {
    Parameter W0;                    // [d,k] frozen
    std::optional<Parameter> bias;   // [d] frozen
    std::optional<LowRankAdapter> adapter;

    ad::Var forward(const ad::Var& x) const;  // x rank-1 [k] -> [d]
    // W' = W0 + BA; drops the adapter.
    Tensor merged_weight() const;
};

// Layer-name patterns with '*' wildcards; selects adapter placement.
struct PlacementSpec {
    std::vector<std::string> patterns;

    bool matches(const std::string& layer_name) const;
    static PlacementSpec parse(const std::string& comma_separated);
};

bool glob_match(const std::string& pattern, const std::string& text);

}  // namespace oopk
