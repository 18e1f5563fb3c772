// SPDX-License-Identifier: Apache-2.0

#include "oopk/adapter.hpp"

#include <algorithm>

namespace oopk {

LowRankAdapter adapter_init(const std::string& name, int d, int k, int r, double sigma, Rng rng) {
    if (r < 1 || r > std::min(d, k))
        throw ConfigError("adapter_init: rank " + std::to_string(r) + " out of range for d=" +
                          std::to_string(d) + ", k=" + std::to_string(k));
    if (sigma <= 0.0) throw ConfigError("adapter_init: sigma must be > 0");
    Tensor a({r, k});
    for (double& v : a.data) v = rng.gaussian(0.0, sigma);
    LowRankAdapter ad;
    ad.A = Parameter(name + ".A", std::move(a), true);
    ad.B = Parameter(name + ".B", Tensor({d, r}), true);
    ad.rank = r;
    return ad;
}

Tensor adapter_delta(const LowRankAdapter& ad) {
    return matmul_value(ad.B.value(), ad.A.value());
}

ad::Var adapter_apply(const LowRankAdapter& adp, const ad::Var& x_col) {
    return ad::matmul(adp.B.node, ad::matmul(adp.A.node, x_col));
}

ad::Var orth_loss(const LowRankAdapter& adp, OrthReduction red) {
    const int k = adp.k();
    auto m = ad::matmul(adp.B.node, adp.A.node);                    // [d,k]
    auto gram = ad::matmul(ad::transpose(m), m);                    // [k,k]
    auto dev = ad::sub(gram, ad::constant(Tensor::identity(k)));
    auto sq = ad::mul(dev, dev);
    return red == OrthReduction::Mean ? ad::mean(sq) : ad::sum(sq);
}

ad::Var total_orth_loss(const std::vector<const LowRankAdapter*>& adapters, OrthReduction red) {
    if (adapters.empty()) throw UsageError("total_orth_loss: no adapters");
    ad::Var acc;
    for (const auto* a : adapters) {
        auto l = orth_loss(*a, red);
        acc = acc ? ad::add(acc, l) : l;
    }
    return acc;
}

ad::Var AdaptedLinear::forward(const ad::Var& x) const {
    if (x->value.rank() != 1 || x->value.dim(0) != W0.value().dim(1))
        throw DimensionError("adapted forward: input extent mismatch");
    const int d = W0.value().dim(0);
    auto xcol = ad::reshape(x, {x->value.dim(0), 1});
    auto y = ad::matmul(W0.node, xcol);
    if (adapter) y = ad::add(y, adapter_apply(*adapter, xcol));
    auto yvec = ad::reshape(y, {d});
    if (bias) yvec = ad::add(yvec, bias->node);
    return yvec;
}

Tensor AdaptedLinear::merged_weight() const {
    Tensor w = W0.value();
    if (adapter) {
        Tensor delta = adapter_delta(*adapter);
        for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] += delta.data[i];
    }
    w.grad.clear();
    return w;
}

bool glob_match(const std::string& pattern, const std::string& text) {
    // Iterative '*' matcher; no other metacharacters.
    std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == text[t])) {
            ++p, ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

bool PlacementSpec::matches(const std::string& layer_name) const {
    for (const auto& pat : patterns)
        if (glob_match(pat, layer_name)) return true;
    return false;
}

PlacementSpec PlacementSpec::parse(const std::string& comma_separated) {
    PlacementSpec spec;
    std::size_t start = 0;
    while (start <= comma_separated.size()) {
        std::size_t end = comma_separated.find(',', start);
        if (end == std::string::npos) end = comma_separated.size();
        std::string item = comma_separated.substr(start, end - start);
        // trim
        while (!item.empty() && (item.front() == ' ' || item.front() == '\t')) item.erase(0, 1);
        while (!item.empty() && (item.back() == ' ' || item.back() == '\t')) item.pop_back();
        if (!item.empty()) spec.patterns.push_back(item);
        start = end + 1;
    }
    return spec;
}

}  // namespace oopk
