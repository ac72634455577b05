#include <doctest.h>

#include <torch/torch.h>

#include "facecycle/error.hpp"
#include "facecycle/nets.hpp"

using namespace facecycle;

namespace {

GeneratorConfig small_generator() {
    GeneratorConfig c;
    c.base_filters = 8;
    c.num_residual_blocks = 2;
    return c;
}

}  // namespace

TEST_SUITE("nets") {

TEST_CASE("generator preserves spatial shape") {
    auto g = build_generator(small_generator(), 1);
    torch::NoGradGuard ng;
    CHECK(g->forward(torch::zeros({1, 3, 256, 256})).sizes() == torch::IntArrayRef({1, 3, 256, 256}));
    CHECK(g->forward(torch::zeros({2, 3, 64, 64})).sizes() == torch::IntArrayRef({2, 3, 64, 64}));
    // Sides that are not multiples of four are padded and cropped back.
    CHECK(g->forward(torch::zeros({1, 3, 66, 70})).sizes() == torch::IntArrayRef({1, 3, 66, 70}));
}

TEST_CASE("generator outputs stay in [-1, 1] and finite") {
    auto g = build_generator(small_generator(), 2);
    torch::NoGradGuard ng;
    torch::manual_seed(3);
    for (int i = 0; i < 10; ++i) {
        const auto out = g->forward(torch::rand({100, 3, 16, 16}) * 2 - 1);
        CHECK(torch::isfinite(out).all().item<bool>());
        CHECK(out.abs().max().item<float>() <= 1.0f);
    }
}

TEST_CASE("default residual block count follows image size") {
    CHECK(GeneratorConfig::for_image_size(256).num_residual_blocks == 9);
    CHECK(GeneratorConfig::for_image_size(128).num_residual_blocks == 6);
    CHECK(GeneratorConfig::for_image_size(64).num_residual_blocks == 6);
    GeneratorConfig bad;
    bad.num_residual_blocks = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("discriminator layer stack and score map sizes") {
    DiscriminatorConfig cfg;
    const auto layers = discriminator_layers(cfg);
    REQUIRE(layers.size() == 5);
    for (int i = 0; i < 3; ++i) CHECK(layers[static_cast<std::size_t>(i)].stride == 2);
    CHECK(layers[3].stride == 1);
    CHECK(layers[4].stride == 1);
    for (const auto& l : layers) {
        CHECK(l.kernel == 4);
        CHECK(l.padding == 1);
    }
    // Independent oracle: floor((n + 2p - k) / s) + 1 per layer.
    auto oracle = [](std::int64_t n) {
        for (int s : {2, 2, 2, 1, 1}) n = (n + 2 - 4) / s + 1;
        return n;
    };
    for (std::int64_t n : {64, 70, 128, 256})
        CHECK(patch_map_size(cfg, n) == oracle(n));
    CHECK(patch_map_size(cfg, 256) == 30);
    CHECK(patch_map_size(cfg, 64) == 6);
}

TEST_CASE("receptive field of the default critic is 70") {
    const auto layers = discriminator_layers(DiscriminatorConfig{});
    // Backwards recurrence r <- (r - 1) * s + k.
    std::int64_t r = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) r = (r - 1) * it->stride + it->kernel;
    const auto rf = receptive_field(layers);
    CHECK(rf.size == r);
    CHECK(rf.size == 70);
    CHECK(rf.jump == 8);
}

TEST_CASE("critic channel widths and normalization placement") {
    DiscriminatorConfig cfg;
    auto d = build_discriminator(cfg, 4);
    std::vector<std::int64_t> out_channels;
    int norms = 0;
    for (const auto& m : d->modules(false)) {
        if (auto* conv = m->as<torch::nn::Conv2dImpl>()) out_channels.push_back(conv->options.out_channels());
        if (m->as<torch::nn::InstanceNorm2dImpl>()) ++norms;
    }
    CHECK(out_channels == std::vector<std::int64_t>{64, 128, 256, 512, 1});
    CHECK(norms == 3);
}

TEST_CASE("recognizer embedding and logits shapes") {
    RecognizerConfig cfg;
    cfg.embedding_dim = 32;
    cfg.num_identities = 5;
    auto r = build_recognizer(cfg, 5);
    r->eval();
    torch::NoGradGuard ng;
    const auto x = torch::rand({2, 3, 64, 64}) * 2 - 1;
    CHECK(r->embed(x).sizes() == torch::IntArrayRef({2, 32}));
    CHECK(r->classify(x).sizes() == torch::IntArrayRef({2, 5}));
    // Other resolutions are resized to the native input.
    CHECK(r->embed(torch::zeros({1, 3, 48, 48})).sizes() == torch::IntArrayRef({1, 32}));
    CHECK(torch::equal(r->embed(x), r->embed(x)));
    const auto norms = r->embed(x).norm(2, 1);
    CHECK(torch::allclose(norms, torch::ones_like(norms), 1e-5, 1e-6));
}

TEST_CASE("recognizer without normalization exposes raw activations") {
    RecognizerConfig cfg;
    cfg.normalize_embedding = false;
    auto r = build_recognizer(cfg, 6);
    torch::NoGradGuard ng;
    const auto e = r->embed(torch::rand({3, 3, 64, 64}));
    CHECK(e.size(1) == cfg.embedding_dim);
    CHECK_FALSE(torch::allclose(e.norm(2, 1), torch::ones({3})));
}

TEST_CASE("initialization is deterministic in the seed") {
    auto a = build_generator(small_generator(), 9);
    auto b = build_generator(small_generator(), 9);
    auto c = build_generator(small_generator(), 10);
    CHECK(parameter_hash(*a) == parameter_hash(*b));
    CHECK(parameter_hash(*a) != parameter_hash(*c));
    CHECK(count_parameters(*a) == count_parameters(*c));
    // Independent of the global generator.
    torch::manual_seed(1);
    const auto h1 = parameter_hash(*build_discriminator(DiscriminatorConfig{}, 3));
    torch::manual_seed(99);
    torch::rand({17});
    CHECK(parameter_hash(*build_discriminator(DiscriminatorConfig{}, 3)) == h1);
}

TEST_CASE("gaussian initialization has std 0.02") {
    DiscriminatorConfig cfg;
    auto d = build_discriminator(cfg, 12);
    for (const auto& m : d->modules(false))
        if (auto* conv = m->as<torch::nn::Conv2dImpl>(); conv && conv->weight.numel() > 100000) {
            const double sd = conv->weight.std().item<double>();
            CHECK(sd == doctest::Approx(0.02).epsilon(0.02));
            CHECK(conv->bias.abs().max().item<double>() == 0.0);
        }
}

TEST_CASE("every parameter receives a finite gradient") {
    auto g = build_generator(small_generator(), 13);
    auto d = build_discriminator(DiscriminatorConfig{3, 8, 3, Norm::instance}, 14);
    auto r = build_recognizer(RecognizerConfig{}, 15);
    const auto x = torch::rand({2, 3, 64, 64}) * 2 - 1;
    (g->forward(x).sum() + d->forward(x).sum() + r->embed(x).sum() + r->classify(x).sum()).backward();
    for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{g.get(), d.get(), r.get()})
        for (const auto& p : m->parameters()) {
            REQUIRE(p.grad().defined());
            CHECK(torch::isfinite(p.grad()).all().item<bool>());
        }
}

TEST_CASE("enum names round-trip") {
    CHECK(parse_norm(to_string(Norm::none)) == Norm::none);
    CHECK(parse_backbone(to_string(Backbone::vgg16)) == Backbone::vgg16);
    CHECK_THROWS_AS(parse_norm("batch"), Error);
}

}  // TEST_SUITE
