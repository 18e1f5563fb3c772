// SPDX-License-Identifier: Apache-2.0
//
// Small fully-convolutional segmentation network: conv1 -> relu -> conv2 ->
// relu -> head, all 3x3 stride-1 same-padding, so logits keep the input's
// spatial extent at any resolution. Conv weights can carry low-rank adapters
// on their [F, C*kh*kw] flattening.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oopk/adapter.hpp"
#include "oopk/checkpoint.hpp"

namespace oopk {

struct ConvLayer {
    std::string name;
    Parameter weight;  // [F,C,kh,kw]
    Parameter bias;    // [F]
    std::optional<LowRankAdapter> adapter;
    bool apply_relu = false;

    int out_channels() const { return weight.value().dim(0); }
    int in_channels() const { return weight.value().dim(1); }
    int kernel() const { return weight.value().dim(2); }
};

struct SegNetConfig {
    int in_channels = 3;
    int hidden_channels = 12;
    int num_classes = 5;
    int kernel = 3;
};

class SegNet {
public:
    SegNet() = default;

    // He-style Gaussian init from the given rng.
    static SegNet create(const SegNetConfig& cfg, Rng rng);

    // x [C,H,W] -> logits [K,H,W]; differentiable when parameters are.
    ad::Var forward(const ad::Var& x) const;
    Tensor forward_value(const Tensor& x) const;
    std::vector<int> predict(const Tensor& x) const;  // argmax ids, H*W

    const SegNetConfig& config() const { return cfg_; }
    std::vector<ConvLayer>& layers() { return layers_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }

    std::vector<Parameter*> parameters();
    std::vector<Parameter*> trainable_parameters();
    std::vector<const LowRankAdapter*> adapters() const;
    bool has_adapters() const { return !adapters().empty(); }
    long parameter_count() const;
    long trainable_parameter_count();

    // Freeze everything, then attach adapters to layers matched by the
    // placement spec. Returns the resulting trainable parameter count.
    long inject_adapters(const PlacementSpec& placement, int rank, double sigma, Rng rng);

    // Fold every BA into its base weight and drop the adapters; the model
    // returns to the source parameter count, fully frozen.
    void merge_adapters();

    void freeze_all();
    SegNet clone() const;

    Checkpoint to_checkpoint() const;
    static SegNet from_checkpoint(const Checkpoint& ckpt);

private:
    SegNetConfig cfg_;
    std::vector<ConvLayer> layers_;
};

}  // namespace oopk
