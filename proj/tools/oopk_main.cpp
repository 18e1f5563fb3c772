// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface for the pipeline: data generation, source
// pretraining, continual adaptation, evaluation, adapter merging, sweeps,
// and the toy angle/magnitude experiment. Every command echoes its fully
// resolved config into the output directory and is reproducible per seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oopk/config.hpp"
#include "oopk/engine.hpp"
#include "oopk/segnet.hpp"
#include "oopk/synth.hpp"
#include "oopk/toy.hpp"

namespace fs = std::filesystem;
using namespace oopk;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string preset;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (key = value with [sections])");
    cmd->add_option("--out", args.out_dir, "Output directory (overrides [run] out_dir)");
    cmd->add_option("--seed", args.seed, "Master seed (overrides [run] seed)")
        ->each([&args](const std::string&) { args.seed_set = true; });
    cmd->add_option("--preset", args.preset, "Learning-rate preset: main-text | supp-tta");
}

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : RunConfig::load(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (!args.preset.empty()) cfg.preset = args.preset;
    cfg.validate();
    cfg.apply_preset();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path.string(), std::ios::binary);
    if (!out) throw UsageError("cannot write " + path.string());
    out << text;
}

fs::path prepare_out(const RunConfig& cfg) {
    fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / "config.cfg", cfg.echo());
    return out;
}

std::string sample_name(const std::string& stem, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05d", stem.c_str(), index);
    return buf;
}

std::vector<SegSample> load_set(const fs::path& dir, const std::string& stem, int count, int k) {
    std::vector<SegSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::string base = (dir / sample_name(stem, i)).string();
        if (!fs::exists(base + ".ppm"))
            throw ConfigError("missing dataset file " + base + ".ppm (run gen-data first)");
        out.push_back(load_sample(base + ".ppm", base + ".pgm", k));
    }
    return out;
}

// Recover a baseline run's mean mIoU (as a fraction) from a previously
// written aggregate.csv (metric,value rows, percent units).
double load_baseline_mean(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read baseline " + path);
    std::string line;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        if (line.substr(0, comma) == "mean_miou") return std::stod(line.substr(comma + 1)) / 100.0;
    }
    throw ConfigError("baseline " + path + " has no mean_miou row");
}

DomainStream load_manifest(const RunConfig& cfg) {
    const fs::path manifest = fs::path(cfg.data_dir) / "stream.csv";
    if (!fs::exists(manifest))
        throw ConfigError("missing stream manifest " + manifest.string() + " (run gen-data first)");
    return load_stream(manifest.string());
}

SegNet load_model(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("missing checkpoint " + path);
    return SegNet::from_checkpoint(load_checkpoint(path));
}

int cmd_gen_data(const RunConfig& cfg) {
    prepare_out(cfg);
    const fs::path data(cfg.data_dir);
    fs::create_directories(data);
    Rng master(cfg.seed);

    auto write_set = [&](const std::string& stem, int count) {
        for (int i = 0; i < count; ++i) {
            Rng sr = master.stream(stem, static_cast<std::uint64_t>(i));
            SegSample s = gen_scene(sr.next_u64(), cfg.height, cfg.width, cfg.num_classes);
            const std::string base = (data / sample_name(stem, i)).string();
            save_sample(s, base + ".ppm", base + ".pgm");
        }
    };
    write_set("source", cfg.source_samples);
    write_set("heldout", cfg.heldout_samples);

    DomainStream stream = build_stream(cfg.domain_specs(), cfg.samples_per_domain, cfg.rounds,
                                       cfg.seed);
    for (std::size_t i = 0; i < stream.entries.size(); ++i) {
        auto& e = stream.entries[i];
        SegSample s = realize_entry(e, cfg.height, cfg.width, cfg.num_classes);
        const std::string base = (data / sample_name("stream", static_cast<int>(i))).string();
        e.image_path = base + ".ppm";
        e.label_path = base + ".pgm";
        save_sample(s, e.image_path, e.label_path);
    }
    save_stream((data / "stream.csv").string(), stream);
    std::cout << "wrote " << cfg.source_samples << " source + " << cfg.heldout_samples
              << " heldout samples and a " << stream.entries.size() << "-entry stream to "
              << data.string() << "\n";
    return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg);
    const fs::path data(cfg.data_dir);
    auto train = load_set(data, "source", cfg.source_samples, cfg.num_classes);
    auto heldout = load_set(data, "heldout", cfg.heldout_samples, cfg.num_classes);

    SegNet net = pretrain_segnet(cfg.segnet_config(), train, cfg.pretrain_epochs, cfg.pretrain_lr,
                                 cfg.seed);
    double macc = 0.0;
    const double miou = evaluate_miou(net, heldout, &macc);
    save_checkpoint((out / "source.ckpt").string(), net.to_checkpoint());

    std::ostringstream report;
    report << "metric,value\nheldout_miou," << csv_num(miou * 100.0) << "\nheldout_macc,"
           << csv_num(macc * 100.0) << "\n";
    write_text(out / "pretrain.csv", report.str());
    std::cout << "source checkpoint: " << (out / "source.ckpt").string()
              << "  heldout mIoU " << csv_num(miou * 100.0) << "%\n";
    return 0;
}

int cmd_adapt(const RunConfig& cfg, const std::string& ckpt_path,
              const std::string& baseline_path) {
    const fs::path out = prepare_out(cfg);
    SegNet source = load_model(ckpt_path);
    DomainStream stream = load_manifest(cfg);
    auto provider = file_provider(cfg.num_classes);

    SegNet student = source.clone();
    if (cfg.use_adapters)
        student.inject_adapters(PlacementSpec::parse(cfg.placement), cfg.rank, cfg.sigma,
                                Rng(cfg.seed).stream("init"));
    else
        student.freeze_all();

    TeacherStudentEngine engine(std::move(student), cfg.engine_config(), cfg.seed,
                                /*eval_only=*/!cfg.use_adapters);
    RunReport run = run_stream(engine, stream, provider, cfg.use_adapters);

    write_text(out / "cells.csv", report_cells_csv(run));
    write_text(out / "aggregate.csv",
               baseline_path.empty()
                   ? report_aggregate_csv(run, nullptr)
                   : report_aggregate_csv(run, load_baseline_mean(baseline_path)));
    save_checkpoint((out / "adapted.ckpt").string(), engine.student().to_checkpoint());
    std::cout << "mean mIoU " << csv_num(run.mean_miou() * 100.0) << "% over "
              << run.samples_processed << " samples; reports in " << out.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path) {
    const fs::path out = prepare_out(cfg);
    SegNet model = load_model(ckpt_path);
    model.freeze_all();
    DomainStream stream = load_manifest(cfg);
    TeacherStudentEngine engine(std::move(model), cfg.engine_config(), cfg.seed,
                                /*eval_only=*/true);
    RunReport run = run_stream(engine, stream, file_provider(cfg.num_classes), false);
    write_text(out / "cells.csv", report_cells_csv(run));
    write_text(out / "aggregate.csv", report_aggregate_csv(run, nullptr));
    std::cout << "frozen eval mean mIoU " << csv_num(run.mean_miou() * 100.0) << "% over "
              << run.samples_processed << " samples\n";
    return 0;
}

int cmd_merge(const RunConfig& cfg, const std::string& ckpt_path) {
    const fs::path out = prepare_out(cfg);
    SegNet model = load_model(ckpt_path);
    if (model.adapters().empty())
        throw UsageError("merge: checkpoint " + ckpt_path + " carries no adapters");

    SegNet merged = model.clone();
    merged.merge_adapters();

    Rng rng(cfg.seed);
    double max_dev = 0.0;
    for (int t = 0; t < 100; ++t) {
        Tensor x({3, cfg.height, cfg.width});
        for (double& v : x.data) v = rng.uniform();
        Tensor a = model.forward_value(x);
        Tensor b = merged.forward_value(x);
        for (std::size_t i = 0; i < a.data.size(); ++i)
            max_dev = std::max(max_dev, std::abs(a.data[i] - b.data[i]));
    }
    save_checkpoint((out / "merged.ckpt").string(), merged.to_checkpoint());

    std::ostringstream report;
    report << "metric,value\nmax_forward_deviation," << max_dev << "\nmerged_parameter_count,"
           << merged.parameter_count() << "\n";
    write_text(out / "merge.csv", report.str());
    if (max_dev >= 1e-9) throw UsageError("merge equivalence violated: max deviation too large");
    std::cout << "merged checkpoint: " << (out / "merged.ckpt").string() << "  max deviation "
              << max_dev << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::string& ckpt_path) {
    const fs::path out = prepare_out(cfg);
    SegNet source = load_model(ckpt_path);
    DomainStream stream = load_manifest(cfg);
    auto provider = file_provider(cfg.num_classes);

    auto run_with = [&](const RunConfig& rc, const DomainStream& st) {
        SegNet student = source.clone();
        student.inject_adapters(PlacementSpec::parse(rc.placement), rc.rank, rc.sigma,
                                Rng(rc.seed).stream("init"));
        TeacherStudentEngine engine(std::move(student), rc.engine_config(), rc.seed);
        return run_stream(engine, st, provider, true);
    };

    std::ostringstream csv;
    csv << "setting,mean_miou,mean_macc\n";
    auto emit = [&](const std::string& name, const RunReport& r) {
        csv << name << "," << csv_num(r.mean_miou() * 100.0) << ","
            << csv_num(r.mean_macc() * 100.0) << "\n";
    };

    if (axis == "rank") {
        for (int r : {1, 2, 3, 4, 5}) {
            RunConfig rc = cfg;
            rc.rank = r;
            emit("rank=" + std::to_string(r), run_with(rc, stream));
        }
    } else if (axis == "grid") {
        for (int s : {4, 8, 16, 32}) {
            RunConfig rc = cfg;
            rc.grid_size = s;
            emit("grid=" + std::to_string(s), run_with(rc, stream));
        }
    } else if (axis == "lambda") {
        for (double l : {0.1, 0.5, 1.0, 2.0}) {
            RunConfig rc = cfg;
            rc.lambda = l;
            std::ostringstream name;
            name << "lambda=" << l;
            emit(name.str(), run_with(rc, stream));
        }
    } else if (axis == "order") {
        auto domains = cfg.domain_specs();
        for (std::size_t shift = 0; shift < domains.size(); ++shift) {
            std::vector<DomainSpec> rotated;
            for (std::size_t i = 0; i < domains.size(); ++i)
                rotated.push_back(domains[(i + shift) % domains.size()]);
            DomainStream st = build_stream(rotated, cfg.samples_per_domain, cfg.rounds, cfg.seed);
            // Reuse the generated files: the rotation is a permutation of the
            // same entry multiset, so map entries back to their paths.
            DomainStream base = stream;
            for (auto& e : st.entries)
                for (const auto& b : base.entries)
                    if (b.round == e.round && b.domain == e.domain &&
                        b.corruption.seed == e.corruption.seed) {
                        e.image_path = b.image_path;
                        e.label_path = b.label_path;
                    }
            std::string name = "order=";
            for (const auto& d : rotated) name += d.name.substr(0, 1);
            RunReport r = run_with(cfg, st);
            emit(name + " samples=" + std::to_string(r.samples_processed), r);
        }
    } else if (axis == "ablation") {
        auto runs = run_ablation(source, stream, provider, cfg.engine_config(), cfg.rank,
                                 cfg.sigma, PlacementSpec::parse(cfg.placement), cfg.seed);
        for (const auto& r : runs) emit(r.name, r.report);
    } else {
        throw UsageError("unknown sweep axis: " + axis);
    }
    write_text(out / "sweep.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

Tensor clip01(Tensor t) {
    for (double& v : t.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return t;
}

int cmd_toy(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg);
    Rng master(cfg.seed);

    ToyConfig tc = cfg.toy_config();
    std::vector<Tensor> train, heldout;
    for (int i = 0; i < cfg.toy_images; ++i) {
        Rng sr = master.stream("toy-train", static_cast<std::uint64_t>(i));
        train.push_back(gen_scene(sr.next_u64(), cfg.toy_height, cfg.toy_width, cfg.num_classes)
                            .image);
    }
    for (int i = 0; i < cfg.toy_heldout; ++i) {
        Rng sr = master.stream("toy-heldout", static_cast<std::uint64_t>(i));
        heldout.push_back(gen_scene(sr.next_u64(), cfg.toy_height, cfg.toy_width, cfg.num_classes)
                              .image);
    }

    ToyTrainResult res = train_autoencoder(train, tc, cfg.seed);
    ModeComparison cmp = compare_modes(res.model, heldout);

    std::ostringstream csv;
    csv << "metric,value\nmse_inner," << csv_num(cmp.mse_inner) << "\nmse_magnitude,"
        << csv_num(cmp.mse_magnitude) << "\nmse_angle," << csv_num(cmp.mse_angle) << "\n";
    write_text(out / "mse.csv", csv.str());

    for (std::size_t i = 0; i < heldout.size(); ++i) {
        const std::string base = (out / sample_name("toy", static_cast<int>(i))).string();
        save_ppm(base + "_input.ppm", heldout[i]);
        save_ppm(base + "_magnitude.ppm",
                 clip01(res.model.reconstruct(heldout[i], ActivationMode::Magnitude)));
        save_ppm(base + "_angle.ppm",
                 clip01(res.model.reconstruct(heldout[i], ActivationMode::Angle)));
    }
    std::cout << csv.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual test-time adaptation pipeline (low-rank adapters + image masking)"};
    app.require_subcommand(1);

    CommonArgs gen_args, pre_args, adapt_args, eval_args, merge_args, sweep_args, toy_args;
    std::string adapt_ckpt = "out/source.ckpt", adapt_baseline;
    std::string eval_ckpt = "out/source.ckpt";
    std::string merge_ckpt, sweep_ckpt = "out/source.ckpt", sweep_axis;

    add_common(app.add_subcommand("gen-data", "Generate the source set and the target stream"),
               gen_args);
    add_common(app.add_subcommand("pretrain", "Train the source segmentation model"), pre_args);

    auto* adapt = app.add_subcommand("adapt", "Run continual adaptation over the stream");
    add_common(adapt, adapt_args);
    adapt->add_option("--ckpt", adapt_ckpt, "Source checkpoint");
    adapt->add_option("--baseline", adapt_baseline,
                      "aggregate.csv of a source eval run (enables the gain row)");

    auto* eval = app.add_subcommand("eval", "Evaluate a frozen checkpoint over the stream");
    add_common(eval, eval_args);
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint to evaluate");

    auto* merge = app.add_subcommand("merge", "Fold adapters into the base weights");
    add_common(merge, merge_args);
    merge->add_option("--ckpt", merge_ckpt, "Adapted checkpoint")->required();

    auto* sweep = app.add_subcommand("sweep", "Hyperparameter / ablation sweeps");
    add_common(sweep, sweep_args);
    sweep->add_option("--axis", sweep_axis, "rank | grid | lambda | order | ablation")->required();
    sweep->add_option("--ckpt", sweep_ckpt, "Source checkpoint");

    add_common(app.add_subcommand("toy", "Angle vs magnitude reconstruction experiment"),
               toy_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(resolve_config(gen_args));
        if (app.got_subcommand("pretrain")) return cmd_pretrain(resolve_config(pre_args));
        if (app.got_subcommand("adapt"))
            return cmd_adapt(resolve_config(adapt_args), adapt_ckpt, adapt_baseline);
        if (app.got_subcommand("eval")) return cmd_eval(resolve_config(eval_args), eval_ckpt);
        if (app.got_subcommand("merge")) return cmd_merge(resolve_config(merge_args), merge_ckpt);
        if (app.got_subcommand("sweep"))
            return cmd_sweep(resolve_config(sweep_args), sweep_axis, sweep_ckpt);
        if (app.got_subcommand("toy")) return cmd_toy(resolve_config(toy_args));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
