// SPDX-License-Identifier: Apache-2.0
//
// Grid image masking: sample an s x s uniform grid, threshold at the masking
// ratio (cell kept where value >= ratio, so the expected masked fraction is
// the ratio itself), upscale to image resolution with nearest-neighbor, and
// fill masked pixels with 0, 1 (the [0,1] analogue of 255), or a per-step
// alternation of the two.

#pragma once

#include "oopk/rng.hpp"
#include "oopk/tensor.hpp"

namespace oopk {

enum class MaskFill { Zero, Max, Alternate };

struct MaskSpec {
    int grid_size = 32;
    double ratio = 0.75;
    MaskFill fill = MaskFill::Zero;
};

struct BinaryMask {
    Tensor grid;      // [s,s], entries 0/1; 1 = keep
    Tensor upscaled;  // [H,W] nearest-neighbor expansion
};

// i.i.d. uniform [0,1) values on an s x s grid.
Tensor sample_mask(int s, Rng& rng);

// 1 where grid >= ratio (keep), else 0 (masked); upscaled to [h,w].
BinaryMask binarize(const Tensor& grid, double ratio, int h, int w);

// Kept pixels copied, masked pixels set to the fill value. Alternate fill
// resolves to 0 on even steps, 1 on odd. Input is not mutated.
Tensor apply_mask(const Tensor& x, const BinaryMask& mask, MaskFill fill, long step = 0);

// Fraction of zero entries in the upscaled mask.
double masked_fraction(const BinaryMask& mask);

}  // namespace oopk
