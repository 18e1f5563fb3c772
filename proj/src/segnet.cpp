// SPDX-License-Identifier: Apache-2.0

#include "oopk/segnet.hpp"

#include <cmath>

namespace oopk {

namespace {

Parameter gaussian_param(const std::string& name, std::vector<int> shape, double sigma,
                         Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.gaussian(0.0, sigma);
    return Parameter(name, std::move(t), true);
}

ad::Var conv_layer_forward(const ConvLayer& layer, const ad::Var& x) {
    const int pad = layer.kernel() / 2;
    auto y = ad::conv2d(x, layer.weight.node, layer.bias.node, 1, pad);
    if (layer.adapter) {
        const auto& adp = *layer.adapter;
        const int f = layer.out_channels(), c = layer.in_channels(), k = layer.kernel();
        // Two rank-r convolutions: A as [r,C,kh,kw], then B as a 1x1 mix.
        auto a_kernel = ad::reshape(adp.A.node, {adp.rank, c, k, k});
        auto low = ad::conv2d(x, a_kernel, nullptr, 1, pad);
        auto b_kernel = ad::reshape(adp.B.node, {f, adp.rank, 1, 1});
        auto delta = ad::conv2d(low, b_kernel, nullptr, 1, 0);
        y = ad::add(y, delta);
    }
    return layer.apply_relu ? ad::relu(y) : y;
}

}  // namespace

SegNet SegNet::create(const SegNetConfig& cfg, Rng rng) {
    SegNet net;
    net.cfg_ = cfg;
    const int k = cfg.kernel;
    auto make_layer = [&](const std::string& name, int cin, int cout, bool relu_after) {
        ConvLayer layer;
        layer.name = name;
        const double sigma = std::sqrt(2.0 / (cin * k * k));
        Rng lrng = rng.stream(name);
        layer.weight = gaussian_param(name + ".weight", {cout, cin, k, k}, sigma, lrng);
        layer.bias = Parameter(name + ".bias", Tensor({cout}), true);
        layer.apply_relu = relu_after;
        return layer;
    };
    net.layers_.push_back(make_layer("conv1", cfg.in_channels, cfg.hidden_channels, true));
    net.layers_.push_back(make_layer("conv2", cfg.hidden_channels, cfg.hidden_channels, true));
    net.layers_.push_back(make_layer("head", cfg.hidden_channels, cfg.num_classes, false));
    return net;
}

ad::Var SegNet::forward(const ad::Var& x) const {
    ad::Var h = x;
    for (const auto& layer : layers_) h = conv_layer_forward(layer, h);
    return h;
}

Tensor SegNet::forward_value(const Tensor& x) const {
    auto out = forward(ad::constant(x));
    return out->value;
}

std::vector<int> SegNet::predict(const Tensor& x) const {
    Tensor logits = forward_value(x);
    const int k = logits.dim(0);
    const long plane = static_cast<long>(logits.dim(1)) * logits.dim(2);
    std::vector<int> ids(static_cast<std::size_t>(plane));
    for (long p = 0; p < plane; ++p) {
        int best = 0;
        double bv = logits.data[static_cast<std::size_t>(p)];
        for (int c = 1; c < k; ++c) {
            const double v = logits.data[static_cast<std::size_t>(c) * plane + p];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        ids[static_cast<std::size_t>(p)] = best;
    }
    return ids;
}

std::vector<Parameter*> SegNet::parameters() {
    std::vector<Parameter*> ps;
    for (auto& layer : layers_) {
        ps.push_back(&layer.weight);
        ps.push_back(&layer.bias);
        if (layer.adapter) {
            ps.push_back(&layer.adapter->A);
            ps.push_back(&layer.adapter->B);
        }
    }
    return ps;
}

std::vector<Parameter*> SegNet::trainable_parameters() {
    std::vector<Parameter*> ps;
    for (Parameter* p : parameters())
        if (p->trainable()) ps.push_back(p);
    return ps;
}

std::vector<const LowRankAdapter*> SegNet::adapters() const {
    std::vector<const LowRankAdapter*> as;
    for (const auto& layer : layers_)
        if (layer.adapter) as.push_back(&*layer.adapter);
    return as;
}

long SegNet::parameter_count() const {
    long n = 0;
    for (const auto& layer : layers_) {
        n += layer.weight.value().numel() + layer.bias.value().numel();
        if (layer.adapter)
            n += layer.adapter->A.value().numel() + layer.adapter->B.value().numel();
    }
    return n;
}

long SegNet::trainable_parameter_count() {
    long n = 0;
    for (Parameter* p : trainable_parameters()) n += p->value().numel();
    return n;
}

void SegNet::freeze_all() {
    for (Parameter* p : parameters()) {
        p->set_trainable(false);
        p->value().grad.clear();
    }
}

long SegNet::inject_adapters(const PlacementSpec& placement, int rank, double sigma, Rng rng) {
    if (placement.patterns.empty()) throw ConfigError("inject_adapters: empty placement");
    for (const auto& pat : placement.patterns) {
        bool any = false;
        for (const auto& layer : layers_) any = any || glob_match(pat, layer.name);
        if (!any) throw ConfigError("inject_adapters: pattern '" + pat + "' matches no layer");
    }
    freeze_all();
    for (auto& layer : layers_) {
        if (!placement.matches(layer.name)) continue;
        const int d = layer.out_channels();
        const int k = layer.in_channels() * layer.kernel() * layer.kernel();
        layer.adapter = adapter_init(layer.name, d, k, rank, sigma, rng.stream(layer.name));
    }
    return trainable_parameter_count();
}

void SegNet::merge_adapters() {
    if (!has_adapters()) throw UsageError("merge_adapters: model has no adapters");
    for (auto& layer : layers_) {
        if (!layer.adapter) continue;
        Tensor delta = adapter_delta(*layer.adapter);  // [F, C*kh*kw]
        Tensor& w = layer.weight.value();
        for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] += delta.data[i];
        layer.adapter.reset();
    }
    freeze_all();
}

SegNet SegNet::clone() const {
    SegNet copy;
    copy.cfg_ = cfg_;
    for (const auto& layer : layers_) {
        ConvLayer c;
        c.name = layer.name;
        c.apply_relu = layer.apply_relu;
        c.weight = Parameter(layer.weight.name, layer.weight.value(), layer.weight.trainable());
        c.bias = Parameter(layer.bias.name, layer.bias.value(), layer.bias.trainable());
        if (layer.adapter) {
            LowRankAdapter adp;
            adp.rank = layer.adapter->rank;
            adp.A = Parameter(layer.adapter->A.name, layer.adapter->A.value(),
                              layer.adapter->A.trainable());
            adp.B = Parameter(layer.adapter->B.name, layer.adapter->B.value(),
                              layer.adapter->B.trainable());
            c.adapter = std::move(adp);
        }
        copy.layers_.push_back(std::move(c));
    }
    return copy;
}

Checkpoint SegNet::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "segnet-v1";
    ckpt.meta["in_channels"] = std::to_string(cfg_.in_channels);
    ckpt.meta["hidden_channels"] = std::to_string(cfg_.hidden_channels);
    ckpt.meta["num_classes"] = std::to_string(cfg_.num_classes);
    ckpt.meta["kernel"] = std::to_string(cfg_.kernel);
    std::string adapted;
    for (const auto& layer : layers_) {
        Tensor w = layer.weight.value();
        w.grad.clear();
        Tensor b = layer.bias.value();
        b.grad.clear();
        ckpt.tensors[layer.weight.name] = std::move(w);
        ckpt.tensors[layer.bias.name] = std::move(b);
        if (layer.adapter) {
            Tensor a = layer.adapter->A.value();
            a.grad.clear();
            Tensor bb = layer.adapter->B.value();
            bb.grad.clear();
            ckpt.tensors[layer.adapter->A.name] = std::move(a);
            ckpt.tensors[layer.adapter->B.name] = std::move(bb);
            if (!adapted.empty()) adapted += ",";
            adapted += layer.name + ":" + std::to_string(layer.adapter->rank);
        }
    }
    if (!adapted.empty()) ckpt.meta["adapters"] = adapted;
    return ckpt;
}

SegNet SegNet::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.meta_at("arch") != "segnet-v1")
        throw UsageError("checkpoint: unknown arch '" + ckpt.meta_at("arch") + "'");
    SegNetConfig cfg;
    cfg.in_channels = std::stoi(ckpt.meta_at("in_channels"));
    cfg.hidden_channels = std::stoi(ckpt.meta_at("hidden_channels"));
    cfg.num_classes = std::stoi(ckpt.meta_at("num_classes"));
    cfg.kernel = std::stoi(ckpt.meta_at("kernel"));
    SegNet net = SegNet::create(cfg, Rng(0));
    for (auto& layer : net.layers_) {
        layer.weight = Parameter(layer.weight.name, ckpt.tensors.at(layer.weight.name), true);
        layer.bias = Parameter(layer.bias.name, ckpt.tensors.at(layer.bias.name), true);
    }
    auto it = ckpt.meta.find("adapters");
    if (it != ckpt.meta.end()) {
        net.freeze_all();
        std::string spec = it->second;
        std::size_t start = 0;
        while (start < spec.size()) {
            std::size_t end = spec.find(',', start);
            if (end == std::string::npos) end = spec.size();
            const std::string item = spec.substr(start, end - start);
            const std::size_t colon = item.find(':');
            const std::string lname = item.substr(0, colon);
            const int rank = std::stoi(item.substr(colon + 1));
            for (auto& layer : net.layers_) {
                if (layer.name != lname) continue;
                LowRankAdapter adp;
                adp.rank = rank;
                adp.A = Parameter(lname + ".A", ckpt.tensors.at(lname + ".A"), true);
                adp.B = Parameter(lname + ".B", ckpt.tensors.at(lname + ".B"), true);
                layer.adapter = std::move(adp);
            }
            start = end + 1;
        }
    }
    return net;
}

}  // namespace oopk
