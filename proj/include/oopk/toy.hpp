// SPDX-License-Identifier: Apache-2.0
//
// Motivation experiment: a small convolutional autoencoder trained with the
// ordinary inner-product forward and MSE, then evaluated by substituting the
// per-location activation with its magnitude (|w||p|) or angle (cosine)
// factor. The factorization inner = magnitude * angle holds exactly at each
// location with nonzero norms.

#pragma once

#include <vector>

#include "oopk/optim.hpp"
#include "oopk/rng.hpp"

namespace oopk {

enum class ActivationMode { Inner, Magnitude, Angle };

struct ToyConfig {
    int in_channels = 3;
    std::vector<int> widths = {16, 32, 64};  // encoder channel progression
    int kernel = 4;  // even: stride-2 layers halve/double extents exactly
    int epochs = 200;
    double lr = 1e-3;
};

struct ToyLayer {
    Parameter weight;  // conv: [F,C,k,k]; deconv: [C,F,k,k]
    Parameter bias;    // [F]
    bool transposed = false;
    bool apply_relu = false;
};

class ToyAutoencoder {
public:
    static ToyAutoencoder create(const ToyConfig& cfg, Rng rng);

    // Trained forward (inner product); differentiable. Input [3,H,W] with
    // H, W divisible by 8; output has the input's shape.
    ad::Var forward(const ad::Var& x) const;

    // Test-time forward with the chosen activation substitution applied to
    // every layer; weights are never mutated. Inner mode matches forward().
    Tensor reconstruct(const Tensor& x, ActivationMode mode) const;

    std::vector<Parameter*> parameters();
    const ToyConfig& config() const { return cfg_; }

private:
    ToyConfig cfg_;
    std::vector<ToyLayer> layers_;
};

struct ToyTrainResult {
    ToyAutoencoder model;
    std::vector<double> loss_curve;  // per-epoch mean MSE
};

ToyTrainResult train_autoencoder(const std::vector<Tensor>& dataset, const ToyConfig& cfg,
                                 std::uint64_t seed);

struct ModeComparison {
    double mse_inner = 0.0;
    double mse_magnitude = 0.0;
    double mse_angle = 0.0;
};

ModeComparison compare_modes(const ToyAutoencoder& model, const std::vector<Tensor>& heldout);

// Modal convolution core (exposed for the factorization property): per
// output location, dot = w.p, norms ||w|| and ||p||; Inner -> dot,
// Magnitude -> ||w||*||p||, Angle -> dot/(||w||*||p||) with exact division
// guarded to 0 when the norm product is <= eps. Bias added after.
Tensor conv2d_modal(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad,
                    ActivationMode mode, double eps = 1e-8);

double mse_value(const Tensor& a, const Tensor& b);

}  // namespace oopk
