// SPDX-License-Identifier: Apache-2.0

#include "oopk/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace oopk::ad {

namespace {

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    bool needs = false;
    for (const auto& p : n->parents) needs = needs || p->requires_grad;
    n->requires_grad = needs;
    if (needs) n->backward_fn = std::move(back);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a->value.shape) +
                             " vs " + shape_str(b->value.shape));
}

// Valid output-index range so that oi*stride + u - pad lands in [0, extent).
struct Range {
    int lo, hi;  // inclusive; empty when hi < lo
};
Range valid_range(int extent, int out_extent, int u, int pad, int stride) {
    int lo = 0;
    if (pad - u > 0) lo = (pad - u + stride - 1) / stride;
    const int num = extent - 1 + pad - u;
    int hi = num < 0 ? -1 : num / stride;
    hi = std::min(hi, out_extent - 1);
    return {lo, hi};
}

}  // namespace

Var leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor t) { return leaf(std::move(t), false); }

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
    out.grad.clear();
    return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
        const auto& g = self.value.grad;
        if (a->requires_grad) {
            a->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) a->value.grad[i] += g[i];
        }
        if (b->requires_grad) {
            b->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) b->value.grad[i] += g[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
    out.grad.clear();
    return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
        const auto& g = self.value.grad;
        if (a->requires_grad) {
            a->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) a->value.grad[i] += g[i];
        }
        if (b->requires_grad) {
            b->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) b->value.grad[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
    out.grad.clear();
    return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
        const auto& g = self.value.grad;
        if (a->requires_grad) {
            a->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) a->value.grad[i] += g[i] * b->value.data[i];
        }
        if (b->requires_grad) {
            b->value.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) b->value.grad[i] += g[i] * a->value.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (double& v : out.data) v *= s;
    out.grad.clear();
    return make_node(std::move(out), {a}, [a = a.get(), s](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        const auto& g = self.value.grad;
        for (std::size_t i = 0; i < g.size(); ++i) a->value.grad[i] += s * g[i];
    });
}

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul_value(a->value, b->value);
    const int m = a->value.dim(0), n = a->value.dim(1), p = b->value.dim(1);
    return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get(), m, n, p](Node& self) {
        const auto& g = self.value.grad;
        if (a->requires_grad) {
            a->value.ensure_grad();
            // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int l = 0; l < n; ++l) {
                    double acc = 0.0;
                    const double* grow = &g[static_cast<std::size_t>(i) * p];
                    const double* brow = &b->value.data[static_cast<std::size_t>(l) * p];
                    for (int j = 0; j < p; ++j) acc += grow[j] * brow[j];
                    a->value.grad[static_cast<std::size_t>(i) * n + l] += acc;
                }
        }
        if (b->requires_grad) {
            b->value.ensure_grad();
            // dB = A^T * G
            for (int l = 0; l < n; ++l)
                for (int i = 0; i < m; ++i) {
                    const double av = a->value.data[static_cast<std::size_t>(i) * n + l];
                    if (av == 0.0) continue;
                    const double* grow = &g[static_cast<std::size_t>(i) * p];
                    double* brow = &b->value.grad[static_cast<std::size_t>(l) * p];
                    for (int j = 0; j < p; ++j) brow[j] += av * grow[j];
                }
        }
    });
}

Var transpose(const Var& a) {
    if (a->value.rank() != 2) throw DimensionError("transpose: rank-2 only");
    const int m = a->value.dim(0), n = a->value.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
    return make_node(std::move(out), {a}, [a = a.get(), m, n](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                a->value.grad[static_cast<std::size_t>(i) * n + j] +=
                    self.value.grad[static_cast<std::size_t>(j) * m + i];
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    out.grad.clear();
    return make_node(std::move(out), {a}, [a = a.get()](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        const auto& g = self.value.grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a->value.data[i] > 0.0) a->value.grad[i] += g[i];
    });
}

Var log_eps(const Var& a, double eps) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::log(v + eps);
    out.grad.clear();
    return make_node(std::move(out), {a}, [a = a.get(), eps](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        const auto& g = self.value.grad;
        for (std::size_t i = 0; i < g.size(); ++i)
            a->value.grad[i] += g[i] / (a->value.data[i] + eps);
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_node(Tensor::scalar(s), {a}, [a = a.get()](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        const double g = self.value.grad[0];
        for (double& gv : a->value.grad) gv += g;
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a->value.numel());
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return make_node(Tensor::scalar(s / n), {a}, [a = a.get(), n](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        const double g = self.value.grad[0] / n;
        for (double& gv : a->value.grad) gv += g;
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a->value.numel())
        throw DimensionError("reshape: numel mismatch " + shape_str(a->value.shape) + " -> " +
                             shape_str(shape));
    Tensor out(std::move(shape), a->value.data);
    return make_node(std::move(out), {a}, [a = a.get()](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        for (std::size_t i = 0; i < self.value.grad.size(); ++i)
            a->value.grad[i] += self.value.grad[i];
    });
}

namespace {

// Shared softmax grad: dx = y * (g - sum(g*y)) per group.
void softmax_group_backward(const double* y, const double* g, double* dx, int k) {
    double dot = 0.0;
    for (int i = 0; i < k; ++i) dot += g[i] * y[i];
    for (int i = 0; i < k; ++i) dx[i] += y[i] * (g[i] - dot);
}

void softmax_group_forward(const double* x, double* y, int k) {
    double mx = x[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (int i = 0; i < k; ++i) {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
    }
    for (int i = 0; i < k; ++i) y[i] /= z;
}

}  // namespace

Var softmax(const Var& logits) {
    const auto& v = logits->value;
    if (v.rank() < 1 || v.rank() > 2) throw DimensionError("softmax: rank 1 or 2 expected");
    const int k = v.shape.back();
    if (k < 1) throw DimensionError("softmax: empty last dim");
    const int rows = static_cast<int>(v.numel()) / k;
    Tensor out(v.shape);
    for (int r = 0; r < rows; ++r)
        softmax_group_forward(&v.data[static_cast<std::size_t>(r) * k], &out.data[static_cast<std::size_t>(r) * k], k);
    return make_node(std::move(out), {logits}, [a = logits.get(), rows, k](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        for (int r = 0; r < rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * k;
            softmax_group_backward(&self.value.data[off], &self.value.grad[off],
                                   &a->value.grad[off], k);
        }
    });
}

Var softmax_channels(const Var& logits) {
    const auto& v = logits->value;
    if (v.rank() != 3) throw DimensionError("softmax_channels: [K,H,W] expected");
    const int k = v.dim(0);
    const long plane = static_cast<long>(v.dim(1)) * v.dim(2);
    Tensor out(v.shape);
    std::vector<double> buf(static_cast<std::size_t>(k)), ybuf(static_cast<std::size_t>(k));
    for (long p = 0; p < plane; ++p) {
        for (int c = 0; c < k; ++c) buf[c] = v.data[static_cast<std::size_t>(c) * plane + p];
        softmax_group_forward(buf.data(), ybuf.data(), k);
        for (int c = 0; c < k; ++c) out.data[static_cast<std::size_t>(c) * plane + p] = ybuf[c];
    }
    return make_node(std::move(out), {logits}, [a = logits.get(), k, plane](Node& self) {
        if (!a->requires_grad) return;
        a->value.ensure_grad();
        for (long p = 0; p < plane; ++p) {
            double dot = 0.0;
            for (int c = 0; c < k; ++c) {
                const std::size_t i = static_cast<std::size_t>(c) * plane + p;
                dot += self.value.grad[i] * self.value.data[i];
            }
            for (int c = 0; c < k; ++c) {
                const std::size_t i = static_cast<std::size_t>(c) * plane + p;
                a->value.grad[i] += self.value.data[i] * (self.value.grad[i] - dot);
            }
        }
    });
}

namespace {

void conv2d_check(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad,
                  int& oh, int& ow) {
    if (x.rank() != 3 || w.rank() != 4) throw DimensionError("conv2d: x [C,H,W], w [F,C,kh,kw]");
    if (w.dim(1) != x.dim(0))
        throw DimensionError("conv2d: channel mismatch " + shape_str(x.shape) + " vs " +
                             shape_str(w.shape));
    if (bias && (bias->rank() != 1 || bias->dim(0) != w.dim(0)))
        throw DimensionError("conv2d: bias extent mismatch");
    const int h = x.dim(1), wd = x.dim(2), kh = w.dim(2), kw = w.dim(3);
    if (kh > h + 2 * pad || kw > wd + 2 * pad) throw DimensionError("conv2d: kernel exceeds input");
    if ((h + 2 * pad - kh) % stride != 0 || (wd + 2 * pad - kw) % stride != 0)
        throw ConfigError("conv2d: non-integral output extent");
    oh = (h + 2 * pad - kh) / stride + 1;
    ow = (wd + 2 * pad - kw) / stride + 1;
}

}  // namespace

Tensor conv2d_value(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
    int oh, ow;
    conv2d_check(x, w, bias, stride, pad, oh, ow);
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    Tensor y({f, oh, ow});
    for (int fo = 0; fo < f; ++fo) {
        double* yplane = &y.data[static_cast<std::size_t>(fo) * oh * ow];
        if (bias) {
            const double b = bias->data[static_cast<std::size_t>(fo)];
            for (long i = 0; i < static_cast<long>(oh) * ow; ++i) yplane[i] = b;
        }
        for (int ci = 0; ci < c; ++ci) {
            const double* xplane = &x.data[static_cast<std::size_t>(ci) * h * wd];
            for (int u = 0; u < kh; ++u) {
                const Range ri = valid_range(h, oh, u, pad, stride);
                for (int v = 0; v < kw; ++v) {
                    const double wv =
                        w.data[((static_cast<std::size_t>(fo) * c + ci) * kh + u) * kw + v];
                    if (wv == 0.0) continue;
                    const Range rj = valid_range(wd, ow, v, pad, stride);
                    for (int oi = ri.lo; oi <= ri.hi; ++oi) {
                        const double* xrow = xplane + static_cast<std::size_t>(oi * stride + u - pad) * wd + (rj.lo * stride + v - pad);
                        double* yrow = yplane + static_cast<std::size_t>(oi) * ow + rj.lo;
                        const int len = rj.hi - rj.lo + 1;
                        if (stride == 1) {
                            for (int j = 0; j < len; ++j) yrow[j] += wv * xrow[j];
                        } else {
                            for (int j = 0; j < len; ++j) yrow[j] += wv * xrow[static_cast<std::size_t>(j) * stride];
                        }
                    }
                }
            }
        }
    }
    return y;
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const Tensor* bt = bias ? &bias->value : nullptr;
    Tensor out = conv2d_value(x->value, w->value, bt, stride, pad);
    std::vector<Var> parents = {x, w};
    if (bias) parents.push_back(bias);
    const int c = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int f = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    const int oh = out.dim(1), ow = out.dim(2);
    Node* braw = bias ? bias.get() : nullptr;
    return make_node(
        std::move(out), std::move(parents),
        [xn = x.get(), wn = w.get(), braw, c, h, wd, f, kh, kw, oh, ow, stride, pad](Node& self) {
            const auto& g = self.value.grad;
            if (braw && braw->requires_grad) {
                braw->value.ensure_grad();
                for (int fo = 0; fo < f; ++fo) {
                    double acc = 0.0;
                    const double* gp = &g[static_cast<std::size_t>(fo) * oh * ow];
                    for (long i = 0; i < static_cast<long>(oh) * ow; ++i) acc += gp[i];
                    braw->value.grad[static_cast<std::size_t>(fo)] += acc;
                }
            }
            if (wn->requires_grad) {
                wn->value.ensure_grad();
                for (int fo = 0; fo < f; ++fo) {
                    const double* gplane = &g[static_cast<std::size_t>(fo) * oh * ow];
                    for (int ci = 0; ci < c; ++ci) {
                        const double* xplane = &xn->value.data[static_cast<std::size_t>(ci) * h * wd];
                        for (int u = 0; u < kh; ++u) {
                            const Range ri = valid_range(h, oh, u, pad, stride);
                            for (int v = 0; v < kw; ++v) {
                                const Range rj = valid_range(wd, ow, v, pad, stride);
                                double acc = 0.0;
                                for (int oi = ri.lo; oi <= ri.hi; ++oi) {
                                    const double* xrow = xplane + static_cast<std::size_t>(oi * stride + u - pad) * wd + (rj.lo * stride + v - pad);
                                    const double* grow = gplane + static_cast<std::size_t>(oi) * ow + rj.lo;
                                    const int len = rj.hi - rj.lo + 1;
                                    if (stride == 1) {
                                        for (int j = 0; j < len; ++j) acc += grow[j] * xrow[j];
                                    } else {
                                        for (int j = 0; j < len; ++j) acc += grow[j] * xrow[static_cast<std::size_t>(j) * stride];
                                    }
                                }
                                wn->value.grad[((static_cast<std::size_t>(fo) * c + ci) * kh + u) * kw + v] += acc;
                            }
                        }
                    }
                }
            }
            if (xn->requires_grad) {
                xn->value.ensure_grad();
                for (int fo = 0; fo < f; ++fo) {
                    const double* gplane = &g[static_cast<std::size_t>(fo) * oh * ow];
                    for (int ci = 0; ci < c; ++ci) {
                        double* dxplane = &xn->value.grad[static_cast<std::size_t>(ci) * h * wd];
                        for (int u = 0; u < kh; ++u) {
                            const Range ri = valid_range(h, oh, u, pad, stride);
                            for (int v = 0; v < kw; ++v) {
                                const double wv = wn->value.data[((static_cast<std::size_t>(fo) * c + ci) * kh + u) * kw + v];
                                if (wv == 0.0) continue;
                                const Range rj = valid_range(wd, ow, v, pad, stride);
                                for (int oi = ri.lo; oi <= ri.hi; ++oi) {
                                    double* dxrow = dxplane + static_cast<std::size_t>(oi * stride + u - pad) * wd + (rj.lo * stride + v - pad);
                                    const double* grow = gplane + static_cast<std::size_t>(oi) * ow + rj.lo;
                                    const int len = rj.hi - rj.lo + 1;
                                    if (stride == 1) {
                                        for (int j = 0; j < len; ++j) dxrow[j] += wv * grow[j];
                                    } else {
                                        for (int j = 0; j < len; ++j) dxrow[static_cast<std::size_t>(j) * stride] += wv * grow[j];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, int stride, int pad,
                     int out_pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.rank() != 3 || wv.rank() != 4)
        throw DimensionError("conv_transpose2d: x [C,H,W], w [C,F,kh,kw]");
    if (wv.dim(0) != xv.dim(0)) throw DimensionError("conv_transpose2d: channel mismatch");
    const int c = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int f = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
    const int oh = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int ow = (wd - 1) * stride - 2 * pad + kw + out_pad;
    if (oh < 1 || ow < 1) throw ConfigError("conv_transpose2d: non-positive output extent");
    if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != f))
        throw DimensionError("conv_transpose2d: bias extent mismatch");

    Tensor y({f, oh, ow});
    if (bias)
        for (int fo = 0; fo < f; ++fo) {
            double* yp = &y.data[static_cast<std::size_t>(fo) * oh * ow];
            const double b = bias->value.data[static_cast<std::size_t>(fo)];
            for (long i = 0; i < static_cast<long>(oh) * ow; ++i) yp[i] = b;
        }
    for (int ci = 0; ci < c; ++ci) {
        const double* xplane = &xv.data[static_cast<std::size_t>(ci) * h * wd];
        for (int fo = 0; fo < f; ++fo) {
            double* yplane = &y.data[static_cast<std::size_t>(fo) * oh * ow];
            for (int u = 0; u < kh; ++u) {
                const Range ri = valid_range(oh, h, u, pad, stride);  // i*stride+u-pad in [0,oh)
                for (int v = 0; v < kw; ++v) {
                    const double wval = wv.data[((static_cast<std::size_t>(ci) * f + fo) * kh + u) * kw + v];
                    if (wval == 0.0) continue;
                    const Range rj = valid_range(ow, wd, v, pad, stride);
                    for (int i = ri.lo; i <= ri.hi; ++i) {
                        const double* xrow = xplane + static_cast<std::size_t>(i) * wd + rj.lo;
                        double* yrow = yplane + static_cast<std::size_t>(i * stride + u - pad) * ow + (rj.lo * stride + v - pad);
                        const int len = rj.hi - rj.lo + 1;
                        for (int j = 0; j < len; ++j) yrow[static_cast<std::size_t>(j) * stride] += wval * xrow[j];
                    }
                }
            }
        }
    }

    std::vector<Var> parents = {x, w};
    if (bias) parents.push_back(bias);
    Node* braw = bias ? bias.get() : nullptr;
    return make_node(
        std::move(y), std::move(parents),
        [xn = x.get(), wn = w.get(), braw, c, h, wd, f, kh, kw, oh, ow, stride, pad](Node& self) {
            const auto& g = self.value.grad;
            if (braw && braw->requires_grad) {
                braw->value.ensure_grad();
                for (int fo = 0; fo < f; ++fo) {
                    double acc = 0.0;
                    const double* gp = &g[static_cast<std::size_t>(fo) * oh * ow];
                    for (long i = 0; i < static_cast<long>(oh) * ow; ++i) acc += gp[i];
                    braw->value.grad[static_cast<std::size_t>(fo)] += acc;
                }
            }
            for (int ci = 0; ci < c; ++ci) {
                const double* xplane = &xn->value.data[static_cast<std::size_t>(ci) * h * wd];
                double* dxplane = xn->requires_grad
                                      ? (xn->value.ensure_grad(), &xn->value.grad[static_cast<std::size_t>(ci) * h * wd])
                                      : nullptr;
                for (int fo = 0; fo < f; ++fo) {
                    const double* gplane = &g[static_cast<std::size_t>(fo) * oh * ow];
                    for (int u = 0; u < kh; ++u) {
                        const Range ri = valid_range(oh, h, u, pad, stride);
                        for (int v = 0; v < kw; ++v) {
                            const std::size_t widx = ((static_cast<std::size_t>(ci) * f + fo) * kh + u) * kw + v;
                            const Range rj = valid_range(ow, wd, v, pad, stride);
                            double wacc = 0.0;
                            const double wval = wn->value.data[widx];
                            for (int i = ri.lo; i <= ri.hi; ++i) {
                                const double* xrow = xplane + static_cast<std::size_t>(i) * wd + rj.lo;
                                const double* grow = gplane + static_cast<std::size_t>(i * stride + u - pad) * ow + (rj.lo * stride + v - pad);
                                double* dxrow = dxplane ? dxplane + static_cast<std::size_t>(i) * wd + rj.lo : nullptr;
                                const int len = rj.hi - rj.lo + 1;
                                for (int j = 0; j < len; ++j) {
                                    const double gv = grow[static_cast<std::size_t>(j) * stride];
                                    wacc += xrow[j] * gv;
                                    if (dxrow) dxrow[j] += wval * gv;
                                }
                            }
                            if (wn->requires_grad) {
                                wn->value.ensure_grad();
                                wn->value.grad[widx] += wacc;
                            }
                        }
                    }
                }
            }
        });
}

void backward(const Var& loss) {
    if (loss->value.numel() != 1) throw UsageError("backward: loss must be scalar");
    // Iterative topo sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior nodes are transient: reset them so each backward call
    // contributes exactly one d(loss) into the persistent leaves.
    for (Node* n : order)
        if (!n->parents.empty()) n->value.zero_grad();
    loss->value.ensure_grad();
    loss->value.grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->backward_fn) {
            n->value.ensure_grad();
            n->backward_fn(*n);
        }
    }
}

}  // namespace oopk::ad
