// SPDX-License-Identifier: Apache-2.0

#include "oopk/engine.hpp"

#include <cmath>
#include <set>
#include <unordered_set>

namespace oopk {

PseudoLabel multiscale_predict(const SegNet& model, const Tensor& x,
                               const std::vector<double>& scales, bool average_logits) {
    if (scales.empty()) throw ConfigError("multiscale_predict: empty scale list");
    if (x.rank() != 3) throw DimensionError("multiscale_predict: expected [C,H,W]");
    const int h = x.dim(1), w = x.dim(2);
    const int k = model.config().num_classes;
    Tensor acc({k, h, w});
    for (double f : scales) {
        const int nh = std::max(1, static_cast<int>(std::lround(h * f)));
        const int nw = std::max(1, static_cast<int>(std::lround(w * f)));
        Tensor xs = (nh == h && nw == w) ? x : resize(x, nh, nw, ResizeMode::Bilinear);
        Tensor logits = model.forward_value(xs);
        Tensor map;
        if (average_logits) {
            map = (nh == h && nw == w) ? logits : resize(logits, h, w, ResizeMode::Bilinear);
        } else {
            Tensor probs = ad::softmax_channels(ad::constant(std::move(logits)))->value;
            map = (nh == h && nw == w) ? probs : resize(probs, h, w, ResizeMode::Bilinear);
        }
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += map.data[i];
    }
    const double inv = 1.0 / static_cast<double>(scales.size());
    for (double& v : acc.data) v *= inv;
    if (average_logits) {
        acc = ad::softmax_channels(ad::constant(std::move(acc)))->value;
    } else {
        // Renormalize per pixel (bilinear edge effects can drift the sum).
        const long plane = static_cast<long>(h) * w;
        for (long p = 0; p < plane; ++p) {
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += acc.data[static_cast<std::size_t>(c) * plane + p];
            if (s > 0)
                for (int c = 0; c < k; ++c) acc.data[static_cast<std::size_t>(c) * plane + p] /= s;
        }
    }
    PseudoLabel pl;
    const long plane = static_cast<long>(h) * w;
    pl.hard.resize(static_cast<std::size_t>(plane));
    for (long p = 0; p < plane; ++p) {
        int best = 0;
        double bv = acc.data[static_cast<std::size_t>(p)];
        for (int c = 1; c < k; ++c) {
            const double v = acc.data[static_cast<std::size_t>(c) * plane + p];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        pl.hard[static_cast<std::size_t>(p)] = best;
    }
    pl.probs = std::move(acc);
    return pl;
}

ad::Var seg_loss(const Tensor& teacher_probs, const ad::Var& student_probs, double eps) {
    if (!teacher_probs.same_shape(student_probs->value))
        throw DimensionError("seg_loss: shape mismatch " + shape_str(teacher_probs.shape) +
                             " vs " + shape_str(student_probs->value.shape));
    const long pixels = static_cast<long>(teacher_probs.dim(1)) * teacher_probs.dim(2);
    auto lp = ad::log_eps(student_probs, eps);
    auto weighted = ad::mul(ad::constant(teacher_probs), lp);
    return ad::scale(ad::sum(weighted), -1.0 / static_cast<double>(pixels));
}

void ema_update(SegNet& teacher, const SegNet& student, double beta) {
    auto tp = teacher.parameters();
    auto sp = const_cast<SegNet&>(student).parameters();
    if (tp.size() != sp.size()) throw UsageError("ema_update: parameter topology mismatch");
    for (std::size_t i = 0; i < tp.size(); ++i) {
        Tensor& t = tp[i]->value();
        const Tensor& s = sp[i]->value();
        if (!t.same_shape(s)) throw UsageError("ema_update: shape mismatch at " + tp[i]->name);
        for (std::size_t j = 0; j < t.data.size(); ++j)
            t.data[j] = beta * t.data[j] + (1.0 - beta) * s.data[j];
    }
}

TeacherStudentEngine::TeacherStudentEngine(SegNet student, EngineConfig cfg, std::uint64_t seed,
                                           bool eval_only)
    : cfg_(std::move(cfg)),
      student_(std::move(student)),
      teacher_(student_.clone()),
      optimizer_(cfg_.adam),
      mask_rng_(Rng(seed).stream("mask")),
      eval_only_(eval_only) {
    if (!eval_only_ && !student_.has_adapters())
        throw ConfigError("engine: adaptation requires injected adapters (no trainable parameters)");
    for (Parameter* p : student_.trainable_parameters()) optimizer_.add(p);
    // The teacher is EMA-only; it must never be touched by the optimizer.
    teacher_.freeze_all();
}

PseudoLabel TeacherStudentEngine::teacher_predict(const Tensor& x) const {
    return multiscale_predict(teacher_, x, cfg_.scales, cfg_.average_logits);
}

StepReport TeacherStudentEngine::adapt_step(const Tensor& x) {
    return adapt_step(x, teacher_predict(x));
}

StepReport TeacherStudentEngine::adapt_step(const Tensor& x, const PseudoLabel& pseudo) {
    if (eval_only_) throw UsageError("adapt_step: engine constructed as eval-only");
    // Student input: masked clean image (teacher already saw the clean one).
    Tensor x_s = x;
    if (cfg_.use_masking) {
        Tensor grid = sample_mask(cfg_.mask.grid_size, mask_rng_);
        BinaryMask mask = binarize(grid, cfg_.mask.ratio, x.dim(1), x.dim(2));
        x_s = apply_mask(x, mask, cfg_.mask.fill, step_);
    }

    auto logits = student_.forward(ad::constant(x_s));
    auto probs = ad::softmax_channels(logits);

    Tensor target = pseudo.probs;
    if (cfg_.hard_pseudo_labels) {
        target = Tensor(pseudo.probs.shape);
        const long plane = static_cast<long>(target.dim(1)) * target.dim(2);
        for (long p = 0; p < plane; ++p)
            target.data[static_cast<std::size_t>(pseudo.hard[static_cast<std::size_t>(p)]) * plane + p] = 1.0;
    }
    auto l_seg = seg_loss(target, probs, cfg_.log_eps);

    ad::Var total = l_seg;
    double orth_value = 0.0;
    if (cfg_.use_orth) {
        auto l_orth = total_orth_loss(student_.adapters(), cfg_.orth_reduction);
        orth_value = l_orth->value.data[0];
        total = ad::add(l_seg, ad::scale(l_orth, cfg_.lambda));
    }

    StepReport rep;
    rep.step = step_;
    rep.seg_loss = l_seg->value.data[0];
    rep.orth_loss = orth_value;
    rep.total_loss = total->value.data[0];
    if (!std::isfinite(rep.total_loss))
        throw std::runtime_error("adapt_step: non-finite loss at step " + std::to_string(step_));

    optimizer_.zero_grad();
    ad::backward(total);
    optimizer_.step();
    ema_update(teacher_, student_, cfg_.ema_beta);
    ++step_;
    return rep;
}

SampleProvider synth_provider(int h, int w, int k) {
    return [h, w, k](const StreamEntry& e) { return realize_entry(e, h, w, k); };
}

SampleProvider file_provider(int k) {
    return [k](const StreamEntry& e) {
        if (e.image_path.empty() || e.label_path.empty())
            throw ConfigError("stream entry has no file paths (round " + std::to_string(e.round) +
                              ", domain " + e.domain + ")");
        return load_sample(e.image_path, e.label_path, k);
    };
}

RunReport run_stream(TeacherStudentEngine& engine, const DomainStream& stream,
                     const SampleProvider& provider, bool adapt) {
    if (stream.entries.empty()) throw ConfigError("run_stream: empty stream");
    const int k = engine.teacher().config().num_classes;
    RunReport report;
    auto cell_index = [&](int round, const std::string& domain) -> RunCell& {
        for (auto& c : report.cells)
            if (c.round == round && c.domain == domain) return c;
        report.cells.push_back({round, domain, ConfusionMatrix(k)});
        return report.cells.back();
    };
    // Online once-only contract.
    std::unordered_set<std::uint64_t> consumed;
    for (const auto& entry : stream.entries) {
        if (!consumed.insert(entry.corruption.seed).second)
            throw UsageError("run_stream: stream sample visited twice");
        SegSample sample = provider(entry);
        // Evaluate-then-adapt: score the teacher before this sample's update.
        PseudoLabel pl = engine.teacher_predict(sample.image);
        cell_index(entry.round, entry.domain).cm.update(pl.hard, sample.label);
        if (adapt) engine.adapt_step(sample.image, pl);
        ++report.samples_processed;
    }
    return report;
}

std::vector<NamedRun> run_ablation(const SegNet& source, const DomainStream& stream,
                                   const SampleProvider& provider, const EngineConfig& base,
                                   int rank, double sigma, const PlacementSpec& placement,
                                   std::uint64_t seed) {
    struct Row {
        const char* name;
        AblationToggles t;
    };
    const std::vector<Row> ladder = {
        {"source", {false, false, false, MaskFill::Zero}},
        {"lora", {true, false, false, MaskFill::Zero}},
        {"ops", {true, true, false, MaskFill::Zero}},
        {"lora+ims0", {true, false, true, MaskFill::Zero}},
        {"ops+ims0", {true, true, true, MaskFill::Zero}},
        {"ops+ims255", {true, true, true, MaskFill::Max}},
        {"ops+ims_alt", {true, true, true, MaskFill::Alternate}},
    };
    std::vector<NamedRun> out;
    for (const auto& row : ladder) {
        if (row.t.ims && !row.t.adapters)
            throw ConfigError("ablation: masking without adapters has no trainable parameters");
        EngineConfig cfg = base;
        cfg.use_orth = row.t.orth;
        cfg.use_masking = row.t.ims;
        cfg.mask.fill = row.t.fill;
        SegNet model = source.clone();
        if (row.t.adapters) {
            model.inject_adapters(placement, rank, sigma, Rng(seed).stream("init"));
            TeacherStudentEngine engine(std::move(model), cfg, seed);
            out.push_back({row.name, run_stream(engine, stream, provider, true)});
        } else {
            model.freeze_all();
            TeacherStudentEngine engine(std::move(model), cfg, seed, /*eval_only=*/true);
            out.push_back({row.name, run_stream(engine, stream, provider, false)});
        }
    }
    return out;
}

SegNet pretrain_segnet(const SegNetConfig& cfg, const std::vector<SegSample>& train, int epochs,
                       double lr, std::uint64_t seed) {
    if (train.empty()) throw UsageError("pretrain: empty training set");
    SegNet net = SegNet::create(cfg, Rng(seed).stream("init"));
    AdamConfig ac;
    ac.lr = lr;
    Adam opt(ac);
    for (Parameter* p : net.parameters()) opt.add(p);
    const int k = cfg.num_classes;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& sample : train) {
            auto probs = ad::softmax_channels(net.forward(ad::constant(sample.image)));
            Tensor target(probs->value.shape);
            const long plane = static_cast<long>(target.dim(1)) * target.dim(2);
            for (long p = 0; p < plane; ++p) {
                const int c = sample.label[static_cast<std::size_t>(p)];
                if (c < 0 || c >= k) throw UsageError("pretrain: label id out of range");
                target.data[static_cast<std::size_t>(c) * plane + p] = 1.0;
            }
            auto loss = seg_loss(target, probs, 1e-12);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
        }
    }
    return net;
}

double evaluate_miou(const SegNet& model, const std::vector<SegSample>& samples,
                     double* macc_out) {
    if (samples.empty()) throw UsageError("evaluate: empty sample set");
    ConfusionMatrix cm(model.config().num_classes);
    for (const auto& s : samples) cm.update(model.predict(s.image), s.label);
    if (macc_out) *macc_out = cm.macc();
    return cm.miou();
}

}  // namespace oopk
