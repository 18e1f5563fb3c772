// SPDX-License-Identifier: Apache-2.0

#include "oopk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace oopk {

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min_value() const {
    return *std::min_element(data.begin(), data.end());
}

double Tensor::max_value() const {
    return *std::max_element(data.begin(), data.end());
}

double Tensor::mean_value() const {
    double s = 0.0;
    for (double v : data) s += v;
    return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

Tensor matmul_value(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " * " +
                             shape_str(b.shape));
    const int m = a.dim(0), n = a.dim(1), p = b.dim(1);
    Tensor c({m, p});
    for (int i = 0; i < m; ++i) {
        double* crow = &c.data[static_cast<std::size_t>(i) * p];
        const double* arow = &a.data[static_cast<std::size_t>(i) * n];
        for (int l = 0; l < n; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(l) * p];
            for (int j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

namespace {

// Resize one channel plane.
void resize_plane(const double* src, int h, int w, double* dst, int nh, int nw,
                  ResizeMode mode) {
    if (mode == ResizeMode::Nearest) {
        for (int i = 0; i < nh; ++i) {
            int si = static_cast<int>(static_cast<long>(i) * h / nh);
            if (si >= h) si = h - 1;
            const double* srow = src + static_cast<std::size_t>(si) * w;
            double* drow = dst + static_cast<std::size_t>(i) * nw;
            for (int j = 0; j < nw; ++j) {
                int sj = static_cast<int>(static_cast<long>(j) * w / nw);
                if (sj >= w) sj = w - 1;
                drow[j] = srow[sj];
            }
        }
        return;
    }
    const double sy = static_cast<double>(h) / nh;
    const double sx = static_cast<double>(w) / nw;
    for (int i = 0; i < nh; ++i) {
        double fy = (i + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        if (fy > h - 1) fy = h - 1;
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        double* drow = dst + static_cast<std::size_t>(i) * nw;
        for (int j = 0; j < nw; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            if (fx > w - 1) fx = w - 1;
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            const double v00 = src[static_cast<std::size_t>(y0) * w + x0];
            const double v01 = src[static_cast<std::size_t>(y0) * w + x1];
            const double v10 = src[static_cast<std::size_t>(y1) * w + x0];
            const double v11 = src[static_cast<std::size_t>(y1) * w + x1];
            drow[j] = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        }
    }
}

}  // namespace

Tensor resize(const Tensor& x, int new_h, int new_w, ResizeMode mode) {
    if (new_h < 1 || new_w < 1) throw DimensionError("resize: target extents must be >= 1");
    if (x.rank() == 2) {
        Tensor out({new_h, new_w});
        resize_plane(x.data.data(), x.dim(0), x.dim(1), out.data.data(), new_h, new_w, mode);
        return out;
    }
    if (x.rank() != 3) throw DimensionError("resize: expected [C,H,W] or [H,W]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, new_h, new_w});
    for (int ch = 0; ch < c; ++ch)
        resize_plane(x.data.data() + static_cast<std::size_t>(ch) * h * w, h, w,
                     out.data.data() + static_cast<std::size_t>(ch) * new_h * new_w, new_h, new_w,
                     mode);
    return out;
}

}  // namespace oopk
