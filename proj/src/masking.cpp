// SPDX-License-Identifier: Apache-2.0

#include "oopk/masking.hpp"

namespace oopk {

Tensor sample_mask(int s, Rng& rng) {
    if (s < 1) throw ConfigError("sample_mask: grid size must be >= 1");
    Tensor grid({s, s});
    for (double& v : grid.data) v = rng.uniform();
    return grid;
}

BinaryMask binarize(const Tensor& grid, double ratio, int h, int w) {
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("binarize: ratio must be in [0,1]");
    BinaryMask m;
    m.grid = Tensor(grid.shape);
    for (std::size_t i = 0; i < grid.data.size(); ++i)
        m.grid.data[i] = grid.data[i] >= ratio ? 1.0 : 0.0;
    m.upscaled = resize(m.grid, h, w, ResizeMode::Nearest);
    return m;
}

Tensor apply_mask(const Tensor& x, const BinaryMask& mask, MaskFill fill, long step) {
    if (x.rank() != 3) throw DimensionError("apply_mask: expected [C,H,W]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (mask.upscaled.rank() != 2 || mask.upscaled.dim(0) != h || mask.upscaled.dim(1) != w)
        throw DimensionError("apply_mask: mask extent " + shape_str(mask.upscaled.shape) +
                             " does not match image " + shape_str(x.shape));
    double fv = 0.0;
    if (fill == MaskFill::Max || (fill == MaskFill::Alternate && step % 2 == 1)) fv = 1.0;
    Tensor out = x;
    out.grad.clear();
    const long plane = static_cast<long>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        double* p = &out.data[static_cast<std::size_t>(ch) * plane];
        for (long i = 0; i < plane; ++i)
            if (mask.upscaled.data[static_cast<std::size_t>(i)] == 0.0) p[i] = fv;
    }
    return out;
}

double masked_fraction(const BinaryMask& mask) {
    long zeros = 0;
    for (double v : mask.upscaled.data) zeros += v == 0.0 ? 1 : 0;
    return static_cast<double>(zeros) / static_cast<double>(mask.upscaled.data.size());
}

}  // namespace oopk
