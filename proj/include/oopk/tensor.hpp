// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace oopk {

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense n-d value, row-major doubles. The grad slot is empty unless the
// autodiff engine (or a caller) allocates it; when present it matches data
// in length.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty == absent

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::size_t>(numel_of(shape)) != data.size())
            throw DimensionError("tensor: shape/data length mismatch");
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int e : s) {
            if (e < 0) throw DimensionError("tensor: negative extent");
            n *= e;
        }
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double& at(int c, int i, int j) {
        return data[(static_cast<std::size_t>(c) * shape[1] + i) * shape[2] + j];
    }
    double at(int c, int i, int j) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + i) * shape[2] + j];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) grad.assign(data.size(), 0.0);
    }

    bool all_finite() const;
    double min_value() const;
    double max_value() const;
    double mean_value() const;

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = v;
        return t;
    }
    static Tensor identity(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
};

// Value-level helpers (no gradient tracking).
Tensor matmul_value(const Tensor& a, const Tensor& b);

enum class ResizeMode { Nearest, Bilinear };

// Resize [C,H,W] (or [H,W]) to new spatial extents. Bilinear uses the
// align-corners-false convention: source coordinate = (dst + 0.5) * scale - 0.5,
// clamped to the valid range.
Tensor resize(const Tensor& x, int new_h, int new_w, ResizeMode mode);

std::string shape_str(const std::vector<int>& s);

}  // namespace oopk
