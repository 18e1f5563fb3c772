// SPDX-License-Identifier: Apache-2.0

#include "oopk/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace oopk {

namespace {

std::string trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct Binding {
    std::string section, key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::vector<Binding> bindings() {
    std::vector<Binding> b;
    auto add_int = [&](const char* sec, const char* key, int RunConfig::*f) {
        b.push_back({sec, key,
                     [f](RunConfig& c, const std::string& v) { c.*f = std::stoi(v); },
                     [f](const RunConfig& c) { return std::to_string(c.*f); }});
    };
    auto add_u64 = [&](const char* sec, const char* key, std::uint64_t RunConfig::*f) {
        b.push_back({sec, key,
                     [f](RunConfig& c, const std::string& v) { c.*f = std::stoull(v); },
                     [f](const RunConfig& c) { return std::to_string(c.*f); }});
    };
    auto add_double = [&](const char* sec, const char* key, double RunConfig::*f) {
        b.push_back({sec, key,
                     [f](RunConfig& c, const std::string& v) { c.*f = std::stod(v); },
                     [f](const RunConfig& c) { return fmt_double(c.*f); }});
    };
    auto add_bool = [&](const char* sec, const char* key, bool RunConfig::*f) {
        b.push_back({sec, key,
                     [f, key](RunConfig& c, const std::string& v) {
                         if (v == "true")
                             c.*f = true;
                         else if (v == "false")
                             c.*f = false;
                         else
                             throw ConfigError(std::string("config: boolean key '") + key +
                                               "' expects true/false, got '" + v + "'");
                     },
                     [f](const RunConfig& c) { return c.*f ? "true" : "false"; }});
    };
    auto add_str = [&](const char* sec, const char* key, std::string RunConfig::*f) {
        b.push_back({sec, key,
                     [f](RunConfig& c, const std::string& v) { c.*f = v; },
                     [f](const RunConfig& c) { return c.*f; }});
    };

    add_u64("run", "seed", &RunConfig::seed);
    add_str("run", "out_dir", &RunConfig::out_dir);
    add_str("run", "preset", &RunConfig::preset);

    add_int("data", "height", &RunConfig::height);
    add_int("data", "width", &RunConfig::width);
    add_int("data", "num_classes", &RunConfig::num_classes);
    add_int("data", "samples_per_domain", &RunConfig::samples_per_domain);
    add_int("data", "source_samples", &RunConfig::source_samples);
    add_int("data", "heldout_samples", &RunConfig::heldout_samples);
    add_int("data", "rounds", &RunConfig::rounds);
    add_str("data", "domains", &RunConfig::domains);
    add_str("data", "data_dir", &RunConfig::data_dir);

    add_int("model", "hidden_channels", &RunConfig::hidden_channels);
    add_int("model", "kernel", &RunConfig::kernel);

    add_int("pretrain", "epochs", &RunConfig::pretrain_epochs);
    add_double("pretrain", "lr", &RunConfig::pretrain_lr);

    add_int("adapt", "rank", &RunConfig::rank);
    add_double("adapt", "sigma", &RunConfig::sigma);
    add_str("adapt", "placement", &RunConfig::placement);
    add_double("adapt", "lambda", &RunConfig::lambda);
    add_int("adapt", "grid_size", &RunConfig::grid_size);
    add_double("adapt", "mask_ratio", &RunConfig::mask_ratio);
    add_str("adapt", "fill", &RunConfig::fill);
    add_double("adapt", "ema_beta", &RunConfig::ema_beta);
    add_double("adapt", "lr", &RunConfig::adapt_lr);
    add_double("adapt", "beta1", &RunConfig::beta1);
    add_double("adapt", "beta2", &RunConfig::beta2);
    add_str("adapt", "scales", &RunConfig::scales);
    add_str("adapt", "orth_reduction", &RunConfig::orth_reduction);
    add_str("adapt", "pseudo_labels", &RunConfig::pseudo_labels);
    add_str("adapt", "scale_average", &RunConfig::scale_average);
    add_bool("adapt", "use_masking", &RunConfig::use_masking);
    add_bool("adapt", "use_orth", &RunConfig::use_orth);
    add_bool("adapt", "use_adapters", &RunConfig::use_adapters);

    add_str("toy", "widths", &RunConfig::toy_widths);
    add_int("toy", "kernel", &RunConfig::toy_kernel);
    add_int("toy", "epochs", &RunConfig::toy_epochs);
    add_double("toy", "lr", &RunConfig::toy_lr);
    add_int("toy", "images", &RunConfig::toy_images);
    add_int("toy", "heldout", &RunConfig::toy_heldout);
    add_int("toy", "height", &RunConfig::toy_height);
    add_int("toy", "width", &RunConfig::toy_width);
    return b;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    const auto binds = bindings();
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& bd : binds) known = known || bd.section == section;
            if (!known)
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool matched = false;
        for (const auto& bd : binds)
            if (bd.section == section && bd.key == key) {
                try {
                    bd.set(cfg, value);
                } catch (const ConfigError&) {
                    throw;
                } catch (const std::exception&) {
                    throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" +
                                      value + "' for " + section + "." + key);
                }
                matched = true;
                break;
            }
        if (!matched)
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                              "' in section [" + section + "]");
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::echo() const {
    const auto binds = bindings();
    std::ostringstream os;
    std::string section;
    for (const auto& bd : binds) {
        if (bd.section != section) {
            if (!section.empty()) os << "\n";
            section = bd.section;
            os << "[" << section << "]\n";
        }
        os << bd.key << " = " << bd.get(*this) << "\n";
    }
    return os.str();
}

void RunConfig::validate() const {
    if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    if (height < 16 || width < 16) throw ConfigError("config: image extents must be >= 16");
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw ConfigError("config: mask_ratio in [0,1]");
    if (grid_size < 1) throw ConfigError("config: grid_size must be >= 1");
    if (rank < 1) throw ConfigError("config: rank must be >= 1");
    if (ema_beta < 0.0 || ema_beta > 1.0) throw ConfigError("config: ema_beta in [0,1]");
    if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
    if (preset != "main-text" && preset != "supp-tta")
        throw ConfigError("config: preset must be main-text or supp-tta");
    if (fill != "zero" && fill != "max" && fill != "alternate")
        throw ConfigError("config: fill must be zero, max, or alternate");
    if (orth_reduction != "mean" && orth_reduction != "sum")
        throw ConfigError("config: orth_reduction must be mean or sum");
    if (pseudo_labels != "soft" && pseudo_labels != "hard")
        throw ConfigError("config: pseudo_labels must be soft or hard");
    if (scale_average != "prob" && scale_average != "logit")
        throw ConfigError("config: scale_average must be prob or logit");
    domain_specs();
    if (scale_list().empty()) throw ConfigError("config: scales must be non-empty");
}

void RunConfig::apply_preset() {
    if (preset == "supp-tta") adapt_lr = 6e-4;
}

std::vector<DomainSpec> RunConfig::domain_specs() const {
    std::vector<DomainSpec> specs;
    std::istringstream is(domains);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const std::size_t c1 = item.find(':');
        const std::size_t c2 = item.find(':', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ConfigError("config: domain entry '" + item + "' must be name:kind:severity");
        DomainSpec d;
        d.name = trim(item.substr(0, c1));
        d.kind = corruption_kind_from(trim(item.substr(c1 + 1, c2 - c1 - 1)));
        d.severity = std::stod(item.substr(c2 + 1));
        if (d.severity < 0.0 || d.severity > 1.0)
            throw ConfigError("config: severity out of [0,1] in '" + item + "'");
        specs.push_back(std::move(d));
    }
    if (specs.empty()) throw ConfigError("config: no domains configured");
    return specs;
}

std::vector<double> RunConfig::scale_list() const {
    std::vector<double> out;
    std::istringstream is(scales);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

MaskFill RunConfig::fill_value() const {
    if (fill == "zero") return MaskFill::Zero;
    if (fill == "max") return MaskFill::Max;
    return MaskFill::Alternate;
}

EngineConfig RunConfig::engine_config() const {
    EngineConfig e;
    e.ema_beta = ema_beta;
    e.lambda = lambda;
    e.mask.grid_size = grid_size;
    e.mask.ratio = mask_ratio;
    e.mask.fill = fill_value();
    e.use_masking = use_masking;
    e.use_orth = use_orth;
    e.scales = scale_list();
    e.adam.lr = adapt_lr;
    e.adam.beta1 = beta1;
    e.adam.beta2 = beta2;
    e.orth_reduction = orth_reduction == "mean" ? OrthReduction::Mean : OrthReduction::Sum;
    e.hard_pseudo_labels = pseudo_labels == "hard";
    e.average_logits = scale_average == "logit";
    return e;
}

SegNetConfig RunConfig::segnet_config() const {
    SegNetConfig s;
    s.in_channels = 3;
    s.hidden_channels = hidden_channels;
    s.num_classes = num_classes;
    s.kernel = kernel;
    return s;
}

ToyConfig RunConfig::toy_config() const {
    ToyConfig t;
    t.in_channels = 3;
    t.widths.clear();
    std::istringstream is(toy_widths);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) t.widths.push_back(std::stoi(item));
    }
    if (t.widths.size() != 3) throw ConfigError("config: toy widths must list 3 values");
    t.kernel = toy_kernel;
    t.epochs = toy_epochs;
    t.lr = toy_lr;
    return t;
}

}  // namespace oopk
