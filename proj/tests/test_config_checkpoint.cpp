// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oopk/config.hpp"
#include "oopk/segnet.hpp"
#include "test_util.hpp"

using namespace oopk;
namespace tu = testutil;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    fs::path p = fs::temp_directory_path() / "oopk_cfg_test";
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("config defaults carry the documented hyperparameters") {
    RunConfig cfg;
    CHECK(cfg.grid_size == 32);
    CHECK(cfg.mask_ratio == doctest::Approx(0.75));
    CHECK(cfg.lambda == doctest::Approx(1.0));
    CHECK(cfg.adapt_lr == doctest::Approx(1e-4));
    CHECK(cfg.beta1 == doctest::Approx(0.9));
    CHECK(cfg.beta2 == doctest::Approx(0.999));
    CHECK(cfg.ema_beta == doctest::Approx(0.999));
    CHECK(cfg.scales == "0.5,1.0,1.5,2.0");
    CHECK(cfg.fill == "zero");
    CHECK(cfg.rounds == 3);
    cfg.validate();
}

TEST_CASE("parse and echo round trip byte for byte") {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.rank = 3;
    cfg.lambda = 0.5;
    cfg.domains = "fog:fog:0.80,night:dark:0.60";
    const std::string echo1 = cfg.echo();
    RunConfig back = RunConfig::parse(echo1);
    CHECK(back.seed == 7);
    CHECK(back.rank == 3);
    CHECK(back.lambda == doctest::Approx(0.5));
    CHECK(back.domains == cfg.domains);
    CHECK(back.echo() == echo1);
}

TEST_CASE("parse accepts comments and blank lines") {
    const std::string text =
        "# top comment\n"
        "[run]\n"
        "seed = 42\n"
        "\n"
        "[adapt]\n"
        "rank = 2\n"
        "lambda = 2.0\n";
    RunConfig cfg = RunConfig::parse(text);
    CHECK(cfg.seed == 42);
    CHECK(cfg.rank == 2);
    CHECK(cfg.lambda == doctest::Approx(2.0));
    // Untouched fields keep defaults.
    CHECK(cfg.grid_size == 32);
}

TEST_CASE("unknown keys and sections are rejected with line numbers") {
    CHECK_THROWS_WITH_AS(RunConfig::parse("[run]\nbogus = 1\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::parse("[nope]\nseed = 1\n"),
                         doctest::Contains("line 1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("seed = 1\n"), ConfigError);  // key before any section
    CHECK_THROWS_AS(RunConfig::parse("[run]\nnot-a-pair\n"), ConfigError);
}

TEST_CASE("validate rejects out-of-range values") {
    RunConfig bad;
    bad.mask_ratio = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    RunConfig bad2;
    bad2.fill = "purple";
    CHECK_THROWS_AS(bad2.validate(), ConfigError);

    RunConfig bad3;
    bad3.rounds = 0;
    CHECK_THROWS_AS(bad3.validate(), ConfigError);

    RunConfig bad4;
    bad4.preset = "unknown";
    CHECK_THROWS_AS(bad4.validate(), ConfigError);
}

TEST_CASE("lr presets") {
    RunConfig cfg;
    cfg.apply_preset();
    CHECK(cfg.adapt_lr == doctest::Approx(1e-4));

    RunConfig supp;
    supp.preset = "supp-tta";
    supp.apply_preset();
    CHECK(supp.adapt_lr == doctest::Approx(6e-4));
}

TEST_CASE("derived views") {
    RunConfig cfg;
    auto domains = cfg.domain_specs();
    REQUIRE(domains.size() == 4u);
    CHECK(domains[0].name == "fog");
    CHECK(domains[0].kind == CorruptionKind::Fog);
    CHECK(domains[0].severity == doctest::Approx(0.70));
    CHECK(domains[3].kind == CorruptionKind::Blur);

    auto scales = cfg.scale_list();
    CHECK(scales == std::vector<double>{0.5, 1.0, 1.5, 2.0});

    CHECK(cfg.fill_value() == MaskFill::Zero);
    cfg.fill = "max";
    CHECK(cfg.fill_value() == MaskFill::Max);
    cfg.fill = "alternate";
    CHECK(cfg.fill_value() == MaskFill::Alternate);

    EngineConfig ec = cfg.engine_config();
    CHECK(ec.lambda == doctest::Approx(1.0));
    CHECK(ec.mask.grid_size == 32);
    CHECK(ec.mask.ratio == doctest::Approx(0.75));
    CHECK(ec.adam.lr == doctest::Approx(1e-4));
    CHECK(ec.scales.size() == 4u);

    SegNetConfig sc = cfg.segnet_config();
    CHECK(sc.hidden_channels == 12);
    CHECK(sc.num_classes == 5);

    ToyConfig tc = cfg.toy_config();
    CHECK(tc.widths == std::vector<int>{16, 32, 64});
    CHECK(tc.epochs == 200);
}

TEST_CASE("config file load") {
    fs::path p = temp_dir() / "run.cfg";
    RunConfig cfg;
    cfg.seed = 99;
    {
        std::ofstream out(p.string());
        out << cfg.echo();
    }
    RunConfig loaded = RunConfig::load(p.string());
    CHECK(loaded.seed == 99);
    CHECK_THROWS_AS(RunConfig::load((temp_dir() / "missing.cfg").string()), ConfigError);
}

TEST_CASE("checkpoint round trip") {
    Checkpoint ckpt;
    ckpt.meta["arch"] = "test";
    ckpt.meta["note"] = "with spaces and, commas";
    Rng rng(5);
    ckpt.tensors["a"] = tu::random_tensor({2, 3}, rng);
    ckpt.tensors["b.weight"] = tu::random_tensor({4}, rng);
    ckpt.tensors["empty"] = Tensor({0});

    fs::path p = temp_dir() / "test.ckpt";
    save_checkpoint(p.string(), ckpt);
    Checkpoint back = load_checkpoint(p.string());
    CHECK(back.meta == ckpt.meta);
    REQUIRE(back.tensors.size() == 3u);
    CHECK(back.tensors.at("a").shape == ckpt.tensors.at("a").shape);
    CHECK(back.tensors.at("a").data == ckpt.tensors.at("a").data);
    CHECK(back.tensors.at("b.weight").data == ckpt.tensors.at("b.weight").data);
    CHECK(back.has("a"));
    CHECK_FALSE(back.has("missing"));
    CHECK(back.meta_at("arch") == "test");
    CHECK_THROWS_AS(back.meta_at("missing"), UsageError);

    // Re-saving produces identical bytes.
    fs::path p2 = temp_dir() / "test2.ckpt";
    save_checkpoint(p2.string(), back);
    std::ifstream f1(p.string(), std::ios::binary), f2(p2.string(), std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("corrupted checkpoints are rejected") {
    fs::path p = temp_dir() / "bad.ckpt";
    {
        std::ofstream out(p.string(), std::ios::binary);
        out << "NOTMAGIC" << std::string(16, '\0');
    }
    CHECK_THROWS(load_checkpoint(p.string()));

    fs::path trunc = temp_dir() / "trunc.ckpt";
    {
        Checkpoint ckpt;
        ckpt.tensors["t"] = Tensor({4}, {1, 2, 3, 4});
        save_checkpoint(trunc.string(), ckpt);
        std::error_code ec;
        fs::resize_file(trunc, fs::file_size(trunc) - 8, ec);
    }
    CHECK_THROWS(load_checkpoint(trunc.string()));

    CHECK_THROWS(load_checkpoint((temp_dir() / "missing.ckpt").string()));
}

TEST_CASE("segnet checkpoint round trip preserves the forward map") {
    SegNetConfig sc;
    sc.hidden_channels = 6;
    SegNet net = SegNet::create(sc, Rng(17));
    net.inject_adapters(PlacementSpec::parse("*"), 2, 0.02, Rng(18));
    Rng rng(19);
    for (auto* a : net.adapters())
        for (double& v : const_cast<LowRankAdapter*>(a)->B.value().data) v = rng.uniform(-0.1, 0.1);

    fs::path p = temp_dir() / "net.ckpt";
    save_checkpoint(p.string(), net.to_checkpoint());
    SegNet back = SegNet::from_checkpoint(load_checkpoint(p.string()));

    CHECK(back.config().hidden_channels == 6);
    CHECK(back.adapters().size() == net.adapters().size());
    for (int t = 0; t < 10; ++t) {
        Tensor x = tu::random_tensor({3, 8, 10}, rng, 0, 1);
        CHECK(tu::max_abs_diff(back.forward_value(x), net.forward_value(x)) == 0.0);
    }

    // Merged model round-trips without adapters.
    net.merge_adapters();
    save_checkpoint(p.string(), net.to_checkpoint());
    SegNet merged = SegNet::from_checkpoint(load_checkpoint(p.string()));
    CHECK(merged.adapters().empty());
    for (int t = 0; t < 5; ++t) {
        Tensor x = tu::random_tensor({3, 8, 10}, rng, 0, 1);
        CHECK(tu::max_abs_diff(merged.forward_value(x), net.forward_value(x)) == 0.0);
    }
}
