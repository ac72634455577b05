#include <doctest.h>

#include <fstream>
#include <iterator>

#include <torch/torch.h>

#include "facecycle/checkpoint.hpp"
#include "facecycle/error.hpp"
#include "facecycle/hashing.hpp"
#include "support.hpp"

using namespace facecycle;
using facecycle::testing::TempDir;

namespace {

TrainConfig tiny_config(int epochs = 2, std::uint64_t seed = 3) {
    TrainConfig c;
    c.total_epochs = epochs;
    c.constant_lr_epochs = epochs / 2;
    c.seed = seed;
    c.loss_weights.lambda_ip = 0.0;
    c.generator.base_filters = 8;
    c.generator.num_residual_blocks = 1;
    c.discriminator.base_filters = 8;
    c.preprocess.target_size = 32;
    c.buffer_capacity = 4;
    return c;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<nlohmann::json> read_log(const fs::path& p) {
    std::vector<nlohmann::json> rows;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
    return rows;
}

struct Fixture {
    TempDir dir{"trainer"};
    Manifest manifest = make_fixture(dir / "fx", {4, 2, 32, 9});
};

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule") {
    TrainConfig c;
    CHECK(lr_at_epoch(0, c) == 2e-4);
    CHECK(lr_at_epoch(99, c) == 2e-4);
    CHECK(lr_at_epoch(100, c) == 2e-4);
    CHECK(lr_at_epoch(150, c) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_at_epoch(199, c) == doctest::Approx(2e-6).epsilon(1e-12));
    CHECK_THROWS_AS(lr_at_epoch(200, c), Error);
    CHECK_THROWS_AS(lr_at_epoch(-1, c), Error);
    c.constant_lr_epochs = 201;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("buffer fill phase returns each input") {
    ImageBuffer buffer(50, 1);
    for (int i = 0; i < 50; ++i) {
        const auto fresh = torch::full({1, 2, 2}, static_cast<float>(i));
        CHECK(torch::equal(buffer.query(fresh), fresh));
    }
    CHECK(buffer.size() == 50);
}

TEST_CASE("zero-capacity buffer always returns fresh") {
    ImageBuffer buffer(0, 1);
    for (int i = 0; i < 20; ++i) {
        const auto fresh = torch::full({1, 2, 2}, static_cast<float>(i));
        CHECK(torch::equal(buffer.query(fresh), fresh));
    }
    CHECK(buffer.size() == 0);
}

TEST_CASE("swap rate after fill stays within the binomial bound") {
    ImageBuffer buffer(50, 2);
    for (int i = 0; i < 50; ++i) buffer.query(torch::full({1}, -1.0f - i));
    int swapped = 0;
    constexpr int kQueries = 10000;
    for (int i = 0; i < kQueries; ++i) {
        const auto fresh = torch::full({1}, static_cast<float>(i));
        if (!torch::equal(buffer.query(fresh), fresh)) ++swapped;
        CHECK(buffer.size() <= 50);
    }
    const double fraction = static_cast<double>(swapped) / kQueries;
    CHECK(fraction >= 0.47);
    CHECK(fraction <= 0.53);
}

TEST_CASE("swapped images are replaced by the fresh one") {
    ImageBuffer buffer(1, 5);
    buffer.query(torch::full({1}, 1.0f));
    for (int i = 2; i < 40; ++i) {
        const auto before = buffer.stored().front().clone();
        const auto fresh = torch::full({1}, static_cast<float>(i));
        const auto got = buffer.query(fresh);
        if (torch::equal(got, fresh)) {
            CHECK(torch::equal(buffer.stored().front(), before));
        } else {
            CHECK(torch::equal(got, before));
            CHECK(torch::equal(buffer.stored().front(), fresh));
        }
    }
}

TEST_CASE("steps stay finite and the reported total recombines its parts") {
    Fixture fx;
    auto cfg = tiny_config(30);
    TrainState state(cfg);
    PairDataset data(fx.manifest, Split::train, cfg.preprocess);
    BatchIterator batches(data.size(), 1, true, cfg.seed);
    const auto& w = cfg.loss_weights;
    int steps = 0;
    for (std::int64_t e = 0; steps < 100; ++e)
        for (const auto& idx : batches.epoch(e)) {
            const auto l = train_step_baseline(state, data.collate(idx, true, state.augment_rng));
            for (double v : {l.gan_x, l.gan_y, l.cyc, l.im, l.total, l.d_x, l.d_y}) CHECK(std::isfinite(v));
            const double recombined = l.gan_x + l.gan_y + w.lambda_cyc * l.cyc + w.lambda_ip * l.ip + w.lambda_im * l.im;
            CHECK(l.total == doctest::Approx(recombined).epsilon(1e-5));
            ++steps;
        }
    CHECK(state.step == steps);
}

TEST_CASE("sub-updates touch only their own networks") {
    Fixture fx;
    auto cfg = tiny_config();
    cfg.loss_weights.lambda_ip = 1.0;
    TrainState state(cfg);
    RecognizerConfig rc;
    rc.input_size = 32;
    auto phi_p = build_recognizer(rc, 1), phi_s = build_recognizer(rc, 2);
    const auto phi_hashes = parameter_hash(*phi_p) + parameter_hash(*phi_s);
    PairDataset data(fx.manifest, Split::train, cfg.preprocess);
    std::mt19937_64 rng(0);
    std::string g = state.generator_hash(), dx = parameter_hash(*state.d_x), dy = parameter_hash(*state.d_y);
    std::vector<std::string> stages;
    for (int i = 0; i < 3; ++i)
        train_step(state, data.collate({static_cast<std::size_t>(i)}, true, rng), &phi_p, &phi_s,
                   [&](std::string_view stage) {
                       stages.emplace_back(stage);
                       const auto g2 = state.generator_hash();
                       const auto dx2 = parameter_hash(*state.d_x), dy2 = parameter_hash(*state.d_y);
                       if (stage == "generators") {
                           CHECK(g2 != g);
                           CHECK(dx2 == dx);
                           CHECK(dy2 == dy);
                       } else if (stage == "d_y") {
                           CHECK(g2 == g);
                           CHECK(dx2 == dx);
                           CHECK(dy2 != dy);
                       } else {
                           CHECK(g2 == g);
                           CHECK(dx2 != dx);
                           CHECK(dy2 == dy);
                       }
                       g = g2;
                       dx = dx2;
                       dy = dy2;
                   });
    CHECK(stages == std::vector<std::string>{"generators", "d_y", "d_x", "generators", "d_y", "d_x", "generators",
                                             "d_y", "d_x"});
    CHECK(parameter_hash(*phi_p) + parameter_hash(*phi_s) == phi_hashes);
}

TEST_CASE("identity perception without recognizers is refused") {
    Fixture fx;
    auto cfg = tiny_config();
    cfg.loss_weights.lambda_ip = 1.0;
    TrainState state(cfg);
    PairDataset data(fx.manifest, Split::train, cfg.preprocess);
    std::mt19937_64 rng(0);
    CHECK_THROWS_AS(train_step(state, data.collate({0}, false, rng), nullptr, nullptr), Error);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
    Fixture fx;
    auto cfg = tiny_config();
    TrainOptions opts;
    opts.log_path = fx.dir / "log.jsonl";
    auto state = train(fx.manifest, cfg, nullptr, nullptr, opts);
    save_checkpoint(state, fx.dir / "a.ckpt");
    auto loaded = load_checkpoint(fx.dir / "a.ckpt");
    save_checkpoint(loaded, fx.dir / "b.ckpt");
    CHECK(file_bytes(fx.dir / "a.ckpt") == file_bytes(fx.dir / "b.ckpt"));
    CHECK(loaded.generator_hash() == state.generator_hash());
    CHECK(loaded.step == state.step);
    CHECK(loaded.buffer_x.size() == state.buffer_x.size());
    CHECK(read_log(fx.dir / "log.jsonl").size() == static_cast<std::size_t>(state.step));
}

TEST_CASE("resumed training matches the uninterrupted run") {
    Fixture fx;
    auto cfg = tiny_config(3, 21);
    TrainOptions full;
    full.log_path = fx.dir / "full.jsonl";
    const auto reference = train(fx.manifest, cfg, nullptr, nullptr, full);

    TrainOptions part;
    part.log_path = fx.dir / "part.jsonl";
    part.checkpoint_path = fx.dir / "resume.ckpt";
    part.continue_after_epoch = [](std::int64_t epoch) { return epoch < 1; };
    const auto cut = train(fx.manifest, cfg, nullptr, nullptr, part);
    CHECK(cut.epoch == 1);
    part.continue_after_epoch = {};
    const auto resumed = train(fx.manifest, cfg, nullptr, nullptr, part);
    CHECK(resumed.generator_hash() == reference.generator_hash());
    CHECK(resumed.discriminator_hash() == reference.discriminator_hash());
    CHECK(read_log(fx.dir / "part.jsonl") == read_log(fx.dir / "full.jsonl"));
}

TEST_CASE("truncated and mismatched checkpoints raise structured errors") {
    Fixture fx;
    TrainState state(tiny_config());
    save_checkpoint(state, fx.dir / "s.ckpt");
    const auto bytes = file_bytes(fx.dir / "s.ckpt");
    std::ofstream(fx.dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(fx.dir / "short.ckpt"), CheckpointError);
    auto versioned = bytes;
    versioned[8] = static_cast<char>(kCheckpointVersion + 1);
    std::ofstream(fx.dir / "v.ckpt", std::ios::binary) << versioned;
    try {
        load_checkpoint(fx.dir / "v.ckpt");
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    std::ofstream(fx.dir / "f.ckpt", std::ios::binary) << flipped;
    CHECK_THROWS_AS(load_checkpoint(fx.dir / "f.ckpt"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(fx.dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("synthesis writes both fakes per pair and is deterministic") {
    Fixture fx;
    TrainState state(tiny_config());
    const auto a = synthesize_dataset(state, fx.manifest, Direction::both, fx.dir / "a");
    const auto b = synthesize_dataset(state, fx.manifest, Direction::both, fx.dir / "b");
    REQUIRE(a.size() == fx.manifest.size());
    std::size_t pngs = 0;
    for (const auto& e : fs::directory_iterator(fx.dir / "a"))
        if (e.path().extension() == ".png") ++pngs;
    CHECK(pngs == 2 * fx.manifest.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.entries[i].id == fx.manifest.entries[i].id);
        CHECK(a.entries[i].split == fx.manifest.entries[i].split);
        REQUIRE(a.entries[i].fake_photo);
        REQUIRE(a.entries[i].fake_sketch);
        CHECK(file_bytes(*a.entries[i].fake_sketch) == file_bytes(*b.entries[i].fake_sketch));
        CHECK(file_bytes(*a.entries[i].fake_photo) == file_bytes(*b.entries[i].fake_photo));
    }
    const auto reloaded = load_manifest(fx.dir / "a" / "manifest.jsonl");
    CHECK(reloaded.size() == a.size());
    const auto one_way = synthesize_dataset(state, fx.manifest, Direction::p2s, fx.dir / "c");
    CHECK(one_way.entries[0].fake_sketch.has_value());
    CHECK_FALSE(one_way.entries[0].fake_photo.has_value());
}

TEST_CASE("seeds for separate streams differ") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 7) == derive_seed(5, 7));
}

}  // TEST_SUITE
