// SPDX-License-Identifier: Apache-2.0

#include "oopk/toy.hpp"

#include <cmath>

namespace oopk {

namespace {

// Zero-stuff for expressing a transposed conv as a stride-1 correlation:
// insert (stride-1) zeros between entries, plus out_pad rows/cols at the end.
Tensor zero_stuff(const Tensor& x, int stride, int out_pad) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int nh = (h - 1) * stride + 1 + out_pad;
    const int nw = (w - 1) * stride + 1 + out_pad;
    Tensor out({c, nh, nw});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out.at(ch, i * stride, j * stride) = x.at(ch, i, j);
    return out;
}

// [C,F,kh,kw] -> [F,C,kh,kw] with both spatial dims flipped.
Tensor flip_transpose_kernel(const Tensor& w) {
    const int c = w.dim(0), f = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    Tensor out({f, c, kh, kw});
    for (int ci = 0; ci < c; ++ci)
        for (int fi = 0; fi < f; ++fi)
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v)
                    out.data[((static_cast<std::size_t>(fi) * c + ci) * kh + (kh - 1 - u)) * kw +
                             (kw - 1 - v)] =
                        w.data[((static_cast<std::size_t>(ci) * f + fi) * kh + u) * kw + v];
    return out;
}

void relu_inplace(Tensor& t) {
    for (double& v : t.data)
        if (v < 0.0) v = 0.0;
}

}  // namespace

Tensor conv2d_modal(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad,
                    ActivationMode mode, double eps) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0))
        throw DimensionError("conv2d_modal: x [C,H,W], w [F,C,kh,kw]");
    const int c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if ((h + 2 * pad - kh) % stride != 0 || (wd + 2 * pad - kw) % stride != 0)
        throw ConfigError("conv2d_modal: non-integral output extent");
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;

    std::vector<double> wnorm(static_cast<std::size_t>(f));
    const std::size_t ksz = static_cast<std::size_t>(c) * kh * kw;
    for (int fi = 0; fi < f; ++fi) {
        double s = 0.0;
        const double* wp = &w.data[static_cast<std::size_t>(fi) * ksz];
        for (std::size_t i = 0; i < ksz; ++i) s += wp[i] * wp[i];
        wnorm[static_cast<std::size_t>(fi)] = std::sqrt(s);
    }

    Tensor y({f, oh, ow});
    std::vector<double> patch(ksz);
    for (int oi = 0; oi < oh; ++oi)
        for (int oj = 0; oj < ow; ++oj) {
            double pnorm2 = 0.0;
            std::size_t idx = 0;
            for (int ci = 0; ci < c; ++ci)
                for (int u = 0; u < kh; ++u)
                    for (int v = 0; v < kw; ++v, ++idx) {
                        const int yi = oi * stride + u - pad;
                        const int xj = oj * stride + v - pad;
                        const double pv = (yi < 0 || yi >= h || xj < 0 || xj >= wd)
                                              ? 0.0
                                              : x.at(ci, yi, xj);
                        patch[idx] = pv;
                        pnorm2 += pv * pv;
                    }
            const double pnorm = std::sqrt(pnorm2);
            for (int fi = 0; fi < f; ++fi) {
                const double* wp = &w.data[static_cast<std::size_t>(fi) * ksz];
                double dot = 0.0;
                for (std::size_t i = 0; i < ksz; ++i) dot += wp[i] * patch[i];
                const double nprod = wnorm[static_cast<std::size_t>(fi)] * pnorm;
                double z = 0.0;
                switch (mode) {
                    case ActivationMode::Inner: z = dot; break;
                    case ActivationMode::Magnitude: z = nprod; break;
                    case ActivationMode::Angle: z = nprod > eps ? dot / nprod : 0.0; break;
                }
                if (bias) z += bias->data[static_cast<std::size_t>(fi)];
                y.at(fi, oi, oj) = z;
            }
        }
    return y;
}

ToyAutoencoder ToyAutoencoder::create(const ToyConfig& cfg, Rng rng) {
    ToyAutoencoder net;
    net.cfg_ = cfg;
    const int k = cfg.kernel;
    auto add_layer = [&](const std::string& name, int cin, int cout, bool transposed,
                         bool relu_after) {
        ToyLayer layer;
        layer.transposed = transposed;
        layer.apply_relu = relu_after;
        const double sigma = std::sqrt(2.0 / (cin * k * k));
        Rng lrng = rng.stream(name);
        Tensor w(transposed ? std::vector<int>{cin, cout, k, k}
                            : std::vector<int>{cout, cin, k, k});
        for (double& v : w.data) v = lrng.gaussian(0.0, sigma);
        layer.weight = Parameter(name + ".weight", std::move(w), true);
        layer.bias = Parameter(name + ".bias", Tensor({cout}), true);
        net.layers_.push_back(std::move(layer));
    };
    const auto& ws = cfg.widths;
    add_layer("enc1", cfg.in_channels, ws[0], false, true);
    add_layer("enc2", ws[0], ws[1], false, true);
    add_layer("enc3", ws[1], ws[2], false, true);
    add_layer("dec1", ws[2], ws[1], true, true);
    add_layer("dec2", ws[1], ws[0], true, true);
    add_layer("dec3", ws[0], cfg.in_channels, true, false);
    return net;
}

// Even kernels with pad (k-2)/2 halve even extents exactly under stride 2,
// and the matching transposed conv doubles them with no output padding.
static int toy_pad(int k) { return k % 2 == 0 ? (k - 2) / 2 : k / 2; }
static int toy_out_pad(int k) { return k % 2 == 0 ? 0 : 1; }

ad::Var ToyAutoencoder::forward(const ad::Var& x) const {
    const int pad = toy_pad(cfg_.kernel);
    const int out_pad = toy_out_pad(cfg_.kernel);
    ad::Var h = x;
    for (const auto& layer : layers_) {
        h = layer.transposed
                ? ad::conv_transpose2d(h, layer.weight.node, layer.bias.node, 2, pad, out_pad)
                : ad::conv2d(h, layer.weight.node, layer.bias.node, 2, pad);
        if (layer.apply_relu) h = ad::relu(h);
    }
    return h;
}

Tensor ToyAutoencoder::reconstruct(const Tensor& x, ActivationMode mode) const {
    const int k = cfg_.kernel;
    const int pad = toy_pad(k);
    Tensor h = x;
    for (const auto& layer : layers_) {
        if (layer.transposed) {
            Tensor stuffed = zero_stuff(h, 2, toy_out_pad(k));
            Tensor kernel = flip_transpose_kernel(layer.weight.value());
            h = conv2d_modal(stuffed, kernel, &layer.bias.value(), 1, k - 1 - pad, mode);
        } else {
            h = conv2d_modal(h, layer.weight.value(), &layer.bias.value(), 2, pad, mode);
        }
        if (layer.apply_relu) relu_inplace(h);
    }
    return h;
}

std::vector<Parameter*> ToyAutoencoder::parameters() {
    std::vector<Parameter*> ps;
    for (auto& layer : layers_) {
        ps.push_back(&layer.weight);
        ps.push_back(&layer.bias);
    }
    return ps;
}

double mse_value(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

ToyTrainResult train_autoencoder(const std::vector<Tensor>& dataset, const ToyConfig& cfg,
                                 std::uint64_t seed) {
    if (dataset.empty()) throw UsageError("train_autoencoder: empty dataset");
    ToyTrainResult result{ToyAutoencoder::create(cfg, Rng(seed).stream("toy-init")), {}};
    AdamConfig ac;
    ac.lr = cfg.lr;
    Adam opt(ac);
    for (Parameter* p : result.model.parameters()) opt.add(p);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const auto& img : dataset) {
            auto x = ad::constant(img);
            auto out = result.model.forward(x);
            auto diff = ad::sub(out, x);
            auto loss = ad::mean(ad::mul(diff, diff));
            epoch_loss += loss->value.data[0];
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    return result;
}

ModeComparison compare_modes(const ToyAutoencoder& model, const std::vector<Tensor>& heldout) {
    ModeComparison cmp;
    for (const auto& img : heldout) {
        cmp.mse_inner += mse_value(model.reconstruct(img, ActivationMode::Inner), img);
        cmp.mse_magnitude += mse_value(model.reconstruct(img, ActivationMode::Magnitude), img);
        cmp.mse_angle += mse_value(model.reconstruct(img, ActivationMode::Angle), img);
    }
    const double n = static_cast<double>(heldout.size());
    cmp.mse_inner /= n;
    cmp.mse_magnitude /= n;
    cmp.mse_angle /= n;
    return cmp;
}

}  // namespace oopk
