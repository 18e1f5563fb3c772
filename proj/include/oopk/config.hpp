// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: line-oriented `key = value` with [section] headers and
// '#' comments. Unknown sections or keys are rejected; the fully resolved
// config can be echoed back in a canonical byte-stable form.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oopk/engine.hpp"
#include "oopk/synth.hpp"
#include "oopk/toy.hpp"

namespace oopk {

struct RunConfig {
    // [run]
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string preset = "main-text";  // main-text | supp-tta (learning-rate presets)

    // [data]
    int height = 48;
    int width = 64;
    int num_classes = 5;
    int samples_per_domain = 40;
    int source_samples = 60;
    int heldout_samples = 16;
    int rounds = 3;
    std::string domains = "fog:fog:0.70,night:dark:0.70,rain:noise:0.50,snow:blur:0.80";
    std::string data_dir = "data";

    // [model]
    int hidden_channels = 12;
    int kernel = 3;

    // [pretrain]
    int pretrain_epochs = 30;
    double pretrain_lr = 1e-3;

    // [adapt]
    int rank = 4;
    double sigma = 0.02;
    std::string placement = "*";
    double lambda = 1.0;
    int grid_size = 32;
    double mask_ratio = 0.75;
    std::string fill = "zero";  // zero | max | alternate
    double ema_beta = 0.999;
    double adapt_lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::string scales = "0.5,1.0,1.5,2.0";
    std::string orth_reduction = "mean";   // mean | sum
    std::string pseudo_labels = "soft";    // soft | hard
    std::string scale_average = "prob";    // prob | logit
    bool use_masking = true;
    bool use_orth = true;
    bool use_adapters = true;

    // [toy]
    std::string toy_widths = "16,32,64";
    int toy_kernel = 4;
    int toy_epochs = 200;
    double toy_lr = 1e-3;
    int toy_images = 16;
    int toy_heldout = 5;
    int toy_height = 24;
    int toy_width = 32;

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);
    // Canonical echo; parse(echo()) == *this, byte for byte.
    std::string echo() const;

    void validate() const;
    void apply_preset();  // resolves the lr preset into adapt_lr

    // Derived views.
    std::vector<DomainSpec> domain_specs() const;
    std::vector<double> scale_list() const;
    MaskFill fill_value() const;
    EngineConfig engine_config() const;
    SegNetConfig segnet_config() const;
    ToyConfig toy_config() const;
};

}  // namespace oopk
