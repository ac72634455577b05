#include <doctest.h>

#include <fstream>
#include <sstream>

#include "facecycle/checkpoint.hpp"
#include "facecycle/cli.hpp"
#include "facecycle/config.hpp"
#include "facecycle/error.hpp"
#include "support.hpp"

using namespace facecycle;
using facecycle::testing::TempDir;
using nlohmann::json;

namespace {

OptimizeConfig tiny_optimize() {
    OptimizeConfig c;
    c.max_rounds = 1;
    auto& t = c.synth_config;
    t.total_epochs = 2;
    t.constant_lr_epochs = 1;
    t.seed = 4;
    t.loss_weights.lambda_ip = 10.0;
    t.generator.base_filters = 4;
    t.generator.num_residual_blocks = 1;
    t.discriminator.base_filters = 4;
    t.preprocess.target_size = 32;
    c.recognizer.embedding_dim = 8;
    c.recognizer.base_filters = 4;
    c.recognizer.hidden_dim = 16;
    c.recognizer.input_size = 32;
    c.finetune_first = facecycle::testing::toy_fine_tune_config(3);
    c.finetune_next = facecycle::testing::toy_fine_tune_config(3);
    return c;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "facecycle");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    const int code = run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("one round follows the algorithm's trace") {
    TempDir dir("opt1");
    const auto m = make_fixture(dir / "fx", {3, 2, 32, 6});
    std::vector<std::string> stages;
    OptimizeOptions opts;
    opts.should_continue = [&](const std::string& s) {
        if (s.find("/epoch_") == std::string::npos) stages.push_back(s);
        return true;
    };
    const auto result = mutual_optimize(m, tiny_optimize(), dir / "out", opts);
    CHECK(result.completed);
    CHECK(result.stop_reason == "max_rounds");
    CHECK(stages == std::vector<std::string>{"base/synth", "base/synthesize", "base/recognizers",
                                             "round_000/finetune", "round_000/synth", "round_000/synthesize",
                                             "round_000/evaluate"});
    REQUIRE(result.rounds.size() == 1);
    const auto& r = result.rounds[0];
    CHECK(verify_round(r, dir / "out").empty());
    CHECK(r.synth_consumed_phi_photo == r.phi_photo_hash);
    CHECK(r.synth_consumed_phi_sketch == r.phi_sketch_hash);
    CHECK(r.quality_sketch.count == 2);
    for (const char* f : {"synth.ckpt", "phi_photo.ckpt", "phi_sketch.ckpt", "quality.json", "recognition.json",
                          "fake/manifest.jsonl"})
        CHECK(fs::exists(dir / "out" / "round_000" / f));
    // The base synthesizer trains without identity perception.
    const auto base = read_checkpoint_header(dir / "out" / "base" / "synth.ckpt");
    CHECK(base.at("meta").at("config").at("loss_weights").at("lambda_ip").get<double>() == 0.0);

    // Rerunning reuses every completed stage.
    stages.clear();
    const auto again = mutual_optimize(m, tiny_optimize(), dir / "out", opts);
    CHECK(again.rounds[0].to_json() == r.to_json());

    // A dangling reference is reported.
    fs::remove(dir / "out" / "round_000" / "phi_sketch.ckpt");
    CHECK_FALSE(verify_round(r, dir / "out").empty());
}

TEST_CASE("small gains stop the loop early") {
    TempDir dir("opt_stable");
    const auto m = make_fixture(dir / "fx", {3, 2, 32, 6});
    auto cfg = tiny_optimize();
    cfg.max_rounds = 3;
    cfg.stability_epsilon = 1e9;
    const auto result = mutual_optimize(m, cfg, dir / "out");
    CHECK(result.stop_reason == "stable");
    CHECK(result.rounds.size() == 2);
    CHECK(result.rounds[1].synth_consumed_phi_photo != result.rounds[0].synth_consumed_phi_photo);
}

TEST_CASE("stage failures name the stage") {
    TempDir dir("opt_fail");
    const auto m = make_fixture(dir / "fx", {3, 1, 32, 6});
    auto cfg = tiny_optimize();
    std::ofstream(dir / "junk.ckpt") << "junk";
    cfg.base_photo_recognizer = dir / "junk.ckpt";
    cfg.base_sketch_recognizer = dir / "junk.ckpt";
    try {
        mutual_optimize(m, cfg, dir / "out");
        FAIL("expected Error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("base/recognizers") != std::string::npos);
    }
    CHECK(fs::exists(dir / "out" / "base" / "synth.ckpt"));
}

TEST_CASE("round directories are zero padded") {
    CHECK(format_round_dir(0) == "round_000");
    CHECK(format_round_dir(12) == "round_012");
}

TEST_CASE("config documents round-trip and reject bad keys") {
    ToolkitConfig tk;
    tk.optimize = tiny_optimize();
    tk.optimize.warm_start = true;
    tk.optimize.fusion = Fusion::z_score_mean;
    const auto j = tk.to_json();
    CHECK(toolkit_config_from_json(j).to_json() == j);

    auto bad = j;
    bad["train"]["loss_weights"]["lambda_typo"] = 1.0;
    try {
        toolkit_config_from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "train.loss_weights.lambda_typo");
    }
    bad = j;
    bad["train"]["base_lr"] = -1.0;
    try {
        toolkit_config_from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "train.base_lr");
    }
    bad = j;
    bad["optimize"]["max_rounds"] = "two";
    try {
        toolkit_config_from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "optimize.max_rounds");
    }
    bad = j;
    bad["optimize"]["max_rounds"] = 0;
    CHECK_THROWS_AS(toolkit_config_from_json(bad), ConfigError);
}

TEST_CASE("partial documents keep defaults") {
    const auto tk = toolkit_config_from_json(json::parse(R"({"train": {"total_epochs": 10, "constant_lr_epochs": 5}})"));
    CHECK(tk.optimize.synth_config.total_epochs == 10);
    CHECK(tk.optimize.synth_config.base_lr == 2e-4);
    CHECK(tk.optimize.finetune_first.lr_policy.base_lr == 0.3);
    CHECK(tk.optimize.finetune_next.lr_policy.base_lr == 0.01);
    CHECK(tk.optimize.max_rounds == 2);
    CHECK(tk.optimize.stability_epsilon == 0.005);
}

TEST_CASE("cli: unknown subcommand prints usage and fails") {
    const auto r = run({"frobnicate"});
    CHECK(r.code != 0);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(run({"train", "--bogus-flag"}).code != 0);
}

TEST_CASE("cli: identical directories score one") {
    TempDir dir("cli_q");
    make_fixture(dir / "fx", {2, 1, 32, 3});
    const auto sk = (dir / "fx" / "sketches").string();
    const auto r = run({"evaluate-quality", "--fake-dir", sk, "--real-dir", sk});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j.at("aggregates").at("mean_ssim").get<double>() == doctest::Approx(1.0));
    CHECK(j.at("aggregates").at("mean_fsim").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("cli: invalid config names the key") {
    TempDir dir("cli_cfg");
    std::ofstream(dir / "c.json") << R"({"train": {"adam_beta1": 2.0}})";
    make_fixture(dir / "fx", {2, 1, 32, 3});
    const auto r = run({"--config", (dir / "c.json").string(), "train", "--manifest",
                        (dir / "fx" / "manifest.jsonl").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("train.adam_beta1") != std::string::npos);
    std::ofstream(dir / "broken.json") << "{not json";
    const auto sk = (dir / "fx" / "sketches").string();
    const auto broken = run({"--config", (dir / "broken.json").string(), "evaluate-quality", "--fake-dir", sk,
                             "--real-dir", sk});
    CHECK(broken.code == 2);
    CHECK(broken.err.find("config") != std::string::npos);
}

TEST_CASE("cli: optimize with one round writes the round tree") {
    TempDir dir("cli_opt");
    ToolkitConfig tk;
    tk.optimize = tiny_optimize();
    std::ofstream(dir / "c.json") << tk.to_json().dump();
    REQUIRE(run({"--out", (dir / "fx").string(), "make-fixture", "--train-identities", "3", "--test-identities", "2",
                 "--size", "32"})
                .code == 0);
    const auto r = run({"--config", (dir / "c.json").string(), "--out", (dir / "out").string(), "--log-level", "warn",
                        "optimize", "--manifest", (dir / "fx" / "manifest.jsonl").string(), "--max-rounds", "1"});
    REQUIRE(r.code == 0);
    for (const char* f : {"synth.ckpt", "phi_photo.ckpt", "phi_sketch.ckpt", "quality.json", "recognition.json"})
        CHECK(fs::exists(dir / "out" / "round_000" / f));
    CHECK(fs::is_directory(dir / "out" / "round_000" / "fake"));
    const auto out = json::parse(r.out);
    CHECK(out.at("rounds").size() == 1);

    const auto inspect = run({"inspect-checkpoint", (dir / "out" / "round_000" / "synth.ckpt").string()});
    REQUIRE(inspect.code == 0);
    CHECK(json::parse(inspect.out).at("kind") == "synthesizer");

    // Protocol flags pick the documented galleries.
    const auto fake = (dir / "out" / "round_000" / "fake" / "manifest.jsonl").string();
    const auto rec = run({"--config", (dir / "c.json").string(), "evaluate-recognition", "--manifest", fake,
                          "--protocol", "fused", "--phi-photo",
                          (dir / "out" / "round_000" / "phi_photo.ckpt").string(), "--phi-sketch",
                          (dir / "out" / "round_000" / "phi_sketch.ckpt").string(), "--split", "test"});
    REQUIRE(rec.code == 0);
    const auto rj = json::parse(rec.out);
    CHECK(rj.at("probes") == 2);
    CHECK(rj.contains("sketch_matching"));
    CHECK(rj.contains("photo_matching"));
}

}  // TEST_SUITE
