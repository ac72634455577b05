#include <doctest.h>

#include <fstream>

#include <torch/torch.h>

#include "facecycle/error.hpp"
#include "support.hpp"

using namespace facecycle;
using facecycle::testing::TempDir;

namespace {

torch::TensorOptions f64() { return torch::TensorOptions().dtype(torch::kFloat64); }

EmbeddingGallery gallery_from(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& rows,
                              Domain domain = Domain::photo) {
    EmbeddingGallery g;
    for (std::size_t i = 0; i < ids.size(); ++i) g.entries.push_back({ids[i], domain, rows[i]});
    return g;
}

ScoreMatrix matrix(std::vector<double> values, std::size_t n) {
    ScoreMatrix s;
    for (std::size_t i = 0; i < n; ++i) {
        s.probe_ids.push_back("p" + std::to_string(i));
        s.gallery_ids.push_back("p" + std::to_string(i));
    }
    s.values = std::move(values);
    return s;
}

RecognizerConfig small_recognizer() {
    RecognizerConfig c;
    c.embedding_dim = 16;
    c.base_filters = 4;
    c.hidden_dim = 32;
    c.input_size = 32;
    return c;
}

// Fixture manifest whose "fakes" are the real images themselves.
Manifest self_generated(const Manifest& m) {
    Manifest g = m;
    for (auto& e : g.entries) {
        e.fake_photo = e.photo;
        e.fake_sketch = e.sketch;
    }
    return g;
}

}  // namespace

TEST_SUITE("recognizer") {

TEST_CASE("step policy arithmetic") {
    StepLrPolicy p{0.3, 100, 0.96};
    CHECK(p.at(0) == 0.3);
    CHECK(p.at(99) == 0.3);
    CHECK(p.at(100) == doctest::Approx(0.96 * 0.3).epsilon(1e-15));
    CHECK(p.at(250) == doctest::Approx(0.96 * 0.96 * 0.3).epsilon(1e-15));
    const auto first = FineTuneConfig::first_stage();
    CHECK(first.lr_policy.base_lr == 0.3);
    CHECK(first.lr_policy.stepsize == 100);
    CHECK(first.momentum == 0.9);
    CHECK(first.weight_decay == 2e-4);
    CHECK(first.triplet.hard_k == 4);
    CHECK(first.triplet.margin_alpha == 0.1);
    const auto next = FineTuneConfig::subsequent_stage();
    CHECK(next.lr_policy.base_lr == 0.01);
    CHECK(next.lr_policy.stepsize == 200);
    CHECK(next.stage == FineTuneStage::subsequent);
    auto bad = first;
    bad.lr_policy.gamma = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fine-tuning with satisfied margins leaves parameters unchanged") {
    auto phi = build_recognizer(small_recognizer(), 3);
    torch::manual_seed(4);
    const auto a = torch::rand({1, 3, 32, 32}) * 2 - 1, b = torch::rand({1, 3, 32, 32}) * 2 - 1;
    LabeledImages data;
    data.ids = {"x", "x", "y", "y"};
    data.domains = {Domain::photo, Domain::fake_photo, Domain::photo, Domain::fake_photo};
    data.images = torch::cat({a, a, b, b});
    auto cfg = FineTuneConfig::first_stage();
    cfg.weight_decay = 0.0;
    cfg.triplet.margin_alpha = 1e-9;
    const auto before = parameter_hash(*phi);
    const auto history = fine_tune(phi, data, cfg, 3, 1);
    for (double l : history.batch_losses) CHECK(l == 0.0);
    CHECK(parameter_hash(*phi) == before);
    CHECK(dataset_triplet_loss(phi, data, cfg.triplet) == 0.0);
}

TEST_CASE("fine-tuning needs two identities and keeps the embedding size") {
    auto phi = build_recognizer(small_recognizer(), 5);
    LabeledImages one;
    one.ids = {"x", "x"};
    one.domains = {Domain::photo, Domain::fake_photo};
    one.images = torch::zeros({2, 3, 32, 32});
    CHECK_THROWS_AS(fine_tune(phi, one, FineTuneConfig::first_stage(), 1, 0), Error);

    LabeledImages two = one;
    two.ids = {"x", "x", "y", "y"};
    two.domains = {Domain::photo, Domain::fake_photo, Domain::photo, Domain::fake_photo};
    two.images = torch::rand({4, 3, 32, 32});
    auto cfg = FineTuneConfig::first_stage();
    cfg.lr_policy.base_lr = 0.01;
    const auto history = fine_tune(phi, two, cfg, 2, 0);
    CHECK(history.learning_rates == std::vector<double>{0.01, 0.01});
    torch::NoGradGuard ng;
    CHECK(phi->embed(two.images).size(1) == 16);
}

TEST_CASE("mining picks same-identity positives and skips lone identities") {
    std::mt19937_64 rng(1);
    const auto emb = torch::randn({5, 3}, f64());
    const auto mined = mine_triplets(emb, {0, 0, 1, 2, 2}, TripletConfig{}, rng);
    CHECK(mined.anchors == std::vector<std::int64_t>{0, 1, 3, 4});
    CHECK(mined.positives == std::vector<std::int64_t>{1, 0, 4, 3});
    double expected = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
        std::vector<std::int64_t> negs;
        const std::vector<std::int64_t> labels{0, 0, 1, 2, 2};
        for (std::int64_t j = 0; j < 5; ++j)
            if (labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(mined.anchors[t])]) negs.push_back(j);
        expected += triplet_loss(emb[mined.anchors[t]], emb[mined.positives[t]],
                                 emb.index_select(0, torch::tensor(negs)), TripletConfig{})
                        .item<double>();
    }
    CHECK(mined.loss.item<double>() == doctest::Approx(expected / 4.0).epsilon(1e-14));
}

TEST_CASE("gallery extraction is per image and deterministic") {
    TempDir dir("gallery");
    const auto m = make_fixture(dir / "fx", {3, 1, 32, 2});
    auto phi = build_recognizer(small_recognizer(), 6);
    PreprocessConfig pre;
    pre.target_size = 32;
    const auto a = embed_manifest(phi, m, Split::train, Domain::sketch, pre);
    const auto b = embed_manifest(phi, m, Split::train, Domain::sketch, pre);
    REQUIRE(a.size() == 3);
    CHECK(a.dim() == 16);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.entries[i].id == m.entries[i].id);
        CHECK(a.entries[i].domain == Domain::sketch);
        CHECK(a.entries[i].embedding == b.entries[i].embedding);
    }
    CHECK(embed_manifest(phi, Manifest{}, Split::train, Domain::photo, pre).size() == 0);
    CHECK_THROWS_AS(embed_manifest(phi, m, Split::train, Domain::fake_photo, pre), Error);

    save_gallery(a, dir / "g.bin");
    const auto loaded = load_gallery(dir / "g.bin");
    REQUIRE(loaded.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(loaded.entries[i].id == a.entries[i].id);
        CHECK(loaded.entries[i].domain == a.entries[i].domain);
        CHECK(loaded.entries[i].embedding == a.entries[i].embedding);
    }
    std::ofstream(dir / "bad.bin", std::ios::binary) << "garbage!";
    CHECK_THROWS_AS(load_gallery(dir / "bad.bin"), Error);
}

TEST_CASE("cosine scores of identical and orthogonal embeddings") {
    const auto g = gallery_from({"a", "b"}, {{1, 0, 0}, {0, 2, 0}});
    const auto p = gallery_from({"a"}, {{3, 0, 0}});
    const auto s = score_matrix(p, g, Similarity::cosine);
    CHECK(s.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.at(0, 1) == 0.0);
    CHECK_THROWS_AS(score_matrix(gallery_from({"a"}, {{1, 0}}), g, Similarity::cosine), ShapeError);
}

TEST_CASE("score matrices match a double loop") {
    std::mt19937_64 rng(11);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<std::vector<float>> pr(5, std::vector<float>(4)), gr(5, std::vector<float>(4));
    for (auto* rows : {&pr, &gr})
        for (auto& r : *rows)
            for (auto& v : r) v = n(rng);
    const auto probes = gallery_from({"0", "1", "2", "3", "4"}, pr);
    const auto gallery = gallery_from({"0", "1", "2", "3", "4"}, gr);
    const auto cos = score_matrix(probes, gallery, Similarity::cosine);
    const auto l2 = score_matrix(probes, gallery, Similarity::neg_l2);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double dot = 0, np = 0, ng = 0, d2 = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                const double a = pr[i][c], b = gr[j][c];
                dot += a * b;
                np += a * a;
                ng += b * b;
                d2 += (a - b) * (a - b);
            }
            CHECK(cos.at(i, j) == doctest::Approx(dot / std::sqrt(np * ng)).epsilon(1e-12));
            CHECK(l2.at(i, j) == doctest::Approx(-std::sqrt(d2)).epsilon(1e-12));
        }
}

TEST_CASE("rank-1 examples") {
    CHECK(rank_k_accuracy(matrix({0.9, 0.1, 0.2, 0.8}, 2), 1) == 1.0);
    CHECK(rank_k_accuracy(matrix({0.1, 0.9, 0.2, 0.8}, 2), 1) == 0.5);
    CHECK(rank_k_accuracy(matrix({0.1, 0.9, 0.2, 0.8}, 2), 2) == 1.0);
    // Ties go to the lower gallery index.
    CHECK(rank_k_accuracy(matrix({0.5, 0.5, 0.5, 0.5}, 2), 1) == 0.5);
}

TEST_CASE("rank-k is monotone, reaches 1 and ignores increasing transforms") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(36);
    for (auto& x : v) x = u(rng);
    const auto s = matrix(v, 6);
    auto t = s;
    for (auto& x : t.values) x = std::exp(3.0 * x) + 7.0;
    double prev = 0.0;
    for (int k = 1; k <= 6; ++k) {
        const double r = rank_k_accuracy(s, k);
        CHECK(r >= prev);
        CHECK(rank_k_accuracy(t, k) == r);
        prev = r;
    }
    CHECK(prev == 1.0);
    auto missing = s;
    missing.probe_ids[0] = "stranger";
    CHECK_THROWS_AS(rank_k_accuracy(missing, 1), Error);
}

TEST_CASE("fusion rules") {
    const auto a = matrix({0.2, 0.9, 0.4, 0.1, 0.6, 0.3, 0.5, 0.5, 0.8}, 3);
    const auto fused = fuse_scores(a, a);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(fused.values[i] == doctest::Approx((a.values[i] - 0.1) / 0.8).epsilon(1e-14));
    const auto constant = matrix(std::vector<double>(9, 4.0), 3);
    const auto zeros = fuse_scores(constant, constant);
    for (double v : zeros.values) CHECK(v == 0.0);
    auto relabeled = a;
    relabeled.gallery_ids[0] = "other";
    CHECK_THROWS_AS(fuse_scores(a, relabeled), ShapeError);
    CHECK(parse_fusion(to_string(Fusion::z_score_mean)) == Fusion::z_score_mean);
}

TEST_CASE("fusing a perfect matcher never lowers rank-1 below the weaker one") {
    // Perfect a: diagonal 1, elsewhere 0. Enumerate b over all 4x4 matrices
    // whose rows are permutations of {0, 1, 2, 3}.
    std::vector<double> diag(16, 0.0);
    for (int i = 0; i < 4; ++i) diag[static_cast<std::size_t>(i * 5)] = 1.0;
    const auto a = matrix(diag, 4);
    std::vector<int> perm{0, 1, 2, 3};
    std::vector<std::vector<int>> perms;
    do perms.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> bv;
        for (int r = 0; r < 4; ++r)
            for (int c : perms[rng() % perms.size()]) bv.push_back(c);
        const auto b = matrix(bv, 4);
        CHECK(rank_k_accuracy(fuse_scores(a, b), 1) >= rank_k_accuracy(b, 1));
    }
}

TEST_CASE("eigenfaces match the two-sample closed form") {
    auto x0 = torch::rand({1, 12}, f64()), x1 = torch::rand({1, 12}, f64());
    EigenfaceModel model(torch::cat({x0, x1}), 1);
    REQUIRE(model.components() == 1);
    const auto diff = (x0 - x1).squeeze(0);
    const double half = diff.norm().item<double>() / 2.0;
    auto direction = diff / diff.norm();
    const auto peak = direction.abs().argmax().item<std::int64_t>();
    if (direction[peak].item<double>() < 0) direction = -direction;
    CHECK(torch::allclose(model.basis().squeeze(1), direction, 1e-10, 1e-12));
    const auto c = model.project(torch::cat({x0, x1}));
    CHECK(std::abs(c[0][0].item<double>()) == doctest::Approx(half).epsilon(1e-10));
    CHECK(c[1][0].item<double>() == doctest::Approx(-c[0][0].item<double>()).epsilon(1e-10));
    // Rank truncation: two samples span one direction.
    CHECK(EigenfaceModel(torch::cat({x0, x1}), 2).components() == 1);
}

TEST_CASE("eigenface reconstruction error does not grow with components") {
    auto train = torch::rand({10, 3, 4, 4}, f64());
    auto probe = torch::rand({2, 3, 4, 4}, f64());
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 9; ++k) {
        EigenfaceModel m(train, k);
        const auto recon = m.reconstruct(m.project(probe));
        const double err = (recon - probe.reshape({2, -1})).pow(2).sum().item<double>();
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}

TEST_CASE("eigenface matching puts an identical probe on top") {
    LabeledImages gallery, probes;
    gallery.ids = {"a", "b", "c"};
    gallery.domains = {Domain::photo, Domain::photo, Domain::photo};
    gallery.images = torch::rand({3, 3, 8, 8});
    probes.ids = {"b"};
    probes.domains = {Domain::fake_photo};
    probes.images = gallery.images.slice(0, 1, 2).clone();
    const auto s = eigenface_match(torch::rand({6, 3, 8, 8}), probes, gallery, 4);
    CHECK(s.at(0, 1) == 0.0);
    CHECK(s.at(0, 0) < 0.0);
    CHECK(rank_k_accuracy(s, 1) == 1.0);
}

TEST_CASE("protocols use the documented domains") {
    TempDir dir("protocol");
    const auto m = self_generated(make_fixture(dir / "fx", {4, 1, 32, 8}));
    auto phi = build_recognizer(small_recognizer(), 9);
    PreprocessConfig pre;
    pre.target_size = 32;
    const auto sk = protocol_sets(Protocol::sketch, phi, m, Split::train, pre);
    for (const auto& e : sk.probes.entries) CHECK(e.domain == Domain::sketch);
    for (const auto& e : sk.gallery.entries) CHECK(e.domain == Domain::fake_sketch);
    const auto ph = protocol_sets(Protocol::photo, phi, m, Split::train, pre);
    for (const auto& e : ph.probes.entries) CHECK(e.domain == Domain::fake_photo);
    for (const auto& e : ph.gallery.entries) CHECK(e.domain == Domain::photo);
    CHECK_THROWS_AS(protocol_sets(Protocol::fused, phi, m, Split::train, pre), Error);
    // Fakes identical to reals give perfect matching.
    auto phi_s = build_recognizer(small_recognizer(), 10);
    const auto rates = evaluate_recognition(phi, phi_s, m, Split::train, pre, Similarity::cosine, Fusion::min_max_mean);
    CHECK(rates.sketch_matching == 1.0);
    CHECK(rates.photo_matching == 1.0);
    CHECK(rates.fused == 1.0);
}

TEST_CASE("recognizer checkpoints round-trip") {
    TempDir dir("phi");
    auto phi = build_recognizer(small_recognizer(), 12);
    save_recognizer(phi, dir / "phi.ckpt", {{"note", "x"}});
    auto loaded = load_recognizer(dir / "phi.ckpt");
    CHECK(parameter_hash(*loaded) == parameter_hash(*phi));
    CHECK(loaded->config().embedding_dim == 16);
    TrainConfig tiny;
    tiny.generator.base_filters = 4;
    tiny.generator.num_residual_blocks = 1;
    tiny.discriminator.base_filters = 4;
    save_checkpoint(TrainState(tiny), dir / "synth.ckpt");
    CHECK_THROWS_AS(load_recognizer(dir / "synth.ckpt"), CheckpointError);
}

TEST_CASE("score CSV carries labels") {
    TempDir dir("csv");
    write_score_csv(matrix({0.5, 0.25, 0.125, 1.0}, 2), dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header.find("p0") != std::string::npos);
    CHECK(header.find("p1") != std::string::npos);
    CHECK(row.rfind("p0", 0) == 0);
}

}  // TEST_SUITE
