// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over dense double tensors. Graphs are built
// per-forward-pass out of shared Node pointers; leaves (parameters) persist
// across passes and accumulate gradients in their Tensor grad slot until
// zeroed. Single-writer: one graph is never mutated concurrently.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "oopk/tensor.hpp"

namespace oopk::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;  // value.grad doubles as the gradient buffer
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;  // scatter value.grad into parents

    const Tensor& val() const { return value; }
    Tensor& grad_tensor() { return value; }
};

// Trainable leaf: participates in backward, grad allocated on demand.
Var leaf(Tensor t, bool requires_grad = true);
// Constant: never receives a gradient.
Var constant(Tensor t);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var relu(const Var& a);
// log(x + eps); eps bounds the loss for zero inputs.
Var log_eps(const Var& a, double eps);
Var sum(const Var& a);
Var mean(const Var& a);
// Same data, new shape (numel preserved); gradient passes through.
Var reshape(const Var& a, std::vector<int> shape);

// Softmax over the last dimension (rank 1 or 2), max-subtracted.
Var softmax(const Var& logits);
// Softmax over the channel dimension of a [K,H,W] map.
Var softmax_channels(const Var& logits);

// Cross-correlation with zero padding; x [C,H,W], w [F,C,kh,kw], optional
// bias [F]. Output extent (H + 2*pad - kh) / stride + 1 must be integral.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
// Transposed convolution; x [C,H,W], w [C,F,kh,kw], optional bias [F].
// Output extent (H-1)*stride - 2*pad + kh + out_pad.
Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int stride, int pad,
                     int out_pad);

// Populate grad slots of every reachable leaf with d(loss)/d(leaf).
// loss must be scalar; repeated calls accumulate.
void backward(const Var& loss);

// Value-level conv used by non-autodiff paths (same convention as conv2d).
Tensor conv2d_value(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad);

}  // namespace oopk::ad
