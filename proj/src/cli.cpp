#include "facecycle/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "facecycle/checkpoint.hpp"
#include "facecycle/config.hpp"
#include "facecycle/error.hpp"
#include "facecycle/fixture.hpp"
#include "facecycle/hashing.hpp"
#include "facecycle/log.hpp"
#include "facecycle/pipeline.hpp"

namespace facecycle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string log_level = "info";
};

ToolkitConfig load_config(const Globals& g) {
    ToolkitConfig c = g.config_path.empty() ? ToolkitConfig{} : load_toolkit_config(g.config_path);
    if (g.seed) c.optimize.synth_config.seed = *g.seed;
    return c;
}

fs::path out_dir(const Globals& g, const char* fallback) {
    const fs::path dir = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
    fs::create_directories(dir);
    return dir;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

bool has_all_fakes(const Manifest& m, Split split, Domain fake) {
    const auto entries = m.split(split);
    if (entries.empty()) return false;
    for (const auto& e : entries)
        if (!(fake == Domain::fake_photo ? e.fake_photo : e.fake_sketch)) return false;
    return true;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Face photo-sketch synthesis and recognition toolkit", "facecycle"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed (overrides train.seed)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--log-level", g.log_level, "debug|info|warn|error|off");

    // make-fixture
    auto* fixture_cmd = app.add_subcommand("make-fixture", "Write the procedural photo/sketch fixture");
    FixtureConfig fixture;
    fixture_cmd->add_option("--train-identities", fixture.train_identities);
    fixture_cmd->add_option("--test-identities", fixture.test_identities);
    fixture_cmd->add_option("--size", fixture.image_size);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a synthesizer (CycleGAN objective, optional identity perception)");
    std::string manifest_path, phi_photo_path, phi_sketch_path;
    std::optional<int> epochs;
    std::optional<double> lambda_ip;
    train_cmd->add_option("--manifest", manifest_path, "Dataset manifest (JSON lines)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--epochs", epochs, "Override train.total_epochs (keeps the constant-lr fraction)");
    train_cmd->add_option("--lambda-ip", lambda_ip, "Override train.loss_weights.lambda_ip");
    train_cmd->add_option("--phi-photo", phi_photo_path, "Photo recognizer checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--phi-sketch", phi_sketch_path, "Sketch recognizer checkpoint")->check(CLI::ExistingFile);

    // synthesize
    auto* synth_cmd = app.add_subcommand("synthesize", "Generate fake photos/sketches with a trained synthesizer");
    std::string checkpoint_path, direction = "both";
    synth_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--direction", direction, "P2S|S2P|both");

    // finetune-recognizer
    auto* ft_cmd = app.add_subcommand("finetune-recognizer", "Fine-tune a recognizer with the triplet loss");
    std::string domain = "photo", recognizer_path, stage = "first";
    std::optional<int> iterations;
    ft_cmd->add_option("--manifest", manifest_path, "Manifest; generated manifests add the fake images")
        ->required()
        ->check(CLI::ExistingFile);
    ft_cmd->add_option("--domain", domain, "photo|sketch");
    ft_cmd->add_option("--recognizer", recognizer_path, "Starting checkpoint (fresh model otherwise)")
        ->check(CLI::ExistingFile);
    ft_cmd->add_option("--stage", stage, "first|subsequent");
    ft_cmd->add_option("--iterations", iterations);

    // evaluate-quality
    auto* quality_cmd = app.add_subcommand("evaluate-quality", "SSIM/FSIM of generated against real images");
    std::string fake_dir, real_dir, fake_manifest, real_manifest, modality = "sketch", split = "test", csv_path;
    quality_cmd->add_option("--fake-dir", fake_dir)->check(CLI::ExistingDirectory);
    quality_cmd->add_option("--real-dir", real_dir)->check(CLI::ExistingDirectory);
    quality_cmd->add_option("--fake-manifest", fake_manifest)->check(CLI::ExistingFile);
    quality_cmd->add_option("--real-manifest", real_manifest)->check(CLI::ExistingFile);
    quality_cmd->add_option("--modality", modality, "sketch|photo (manifest mode)");
    quality_cmd->add_option("--split", split, "train|test (manifest mode)");
    quality_cmd->add_option("--csv", csv_path, "Also write per-image rows as CSV");

    // evaluate-recognition
    auto* rec_cmd = app.add_subcommand("evaluate-recognition", "Rank-k identification on a generated manifest");
    std::string protocol = "fused", similarity = "cosine", fusion = "min-max", scores_csv;
    int rank = 1;
    rec_cmd->add_option("--manifest", manifest_path, "Generated manifest")->required()->check(CLI::ExistingFile);
    rec_cmd->add_option("--protocol", protocol, "sketch|photo|fused");
    rec_cmd->add_option("--phi-photo", phi_photo_path)->check(CLI::ExistingFile);
    rec_cmd->add_option("--phi-sketch", phi_sketch_path)->check(CLI::ExistingFile);
    rec_cmd->add_option("--split", split);
    rec_cmd->add_option("--similarity", similarity, "cosine|neg-l2");
    rec_cmd->add_option("--fusion", fusion, "min-max|sum|z-score");
    rec_cmd->add_option("--rank", rank);
    rec_cmd->add_option("--scores-csv", scores_csv);

    // optimize
    auto* opt_cmd = app.add_subcommand("optimize", "Mutual cyclic optimisation of synthesizer and recognizers");
    std::optional<int> max_rounds;
    std::string stop_after;
    bool warm_start = false;
    opt_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    opt_cmd->add_option("--max-rounds", max_rounds);
    opt_cmd->add_option("--stop-after", stop_after, "Interrupt after the named stage (e.g. round_000/finetune)");
    opt_cmd->add_flag("--warm-start", warm_start, "Start each round's synthesizer from the previous weights");

    // inspect-checkpoint
    auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's header");
    inspect_cmd->add_option("path", checkpoint_path)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        log::set_level(log::parse_level(g.log_level));
        if (fixture_cmd->parsed()) {
            if (g.seed) fixture.seed = *g.seed;
            const auto dir = out_dir(g, "fixture");
            const auto m = make_fixture(dir, fixture);
            print({{"manifest", (dir / "manifest.jsonl").string()},
                   {"train", m.count(Split::train)},
                   {"test", m.count(Split::test)}});
        } else if (train_cmd->parsed()) {
            auto cfg = load_config(g).optimize.synth_config;
            if (epochs) {
                const double frac = static_cast<double>(cfg.constant_lr_epochs) / cfg.total_epochs;
                cfg.total_epochs = *epochs;
                cfg.constant_lr_epochs = static_cast<int>(std::lround(frac * *epochs));
            }
            if (lambda_ip) cfg.loss_weights.lambda_ip = *lambda_ip;
            if (phi_photo_path.empty() != phi_sketch_path.empty())
                throw ConfigError("phi", "--phi-photo and --phi-sketch must be given together");
            if (phi_photo_path.empty()) cfg.loss_weights.lambda_ip = 0.0;
            validate_under("train", [&] { cfg.validate(); });
            const auto dir = out_dir(g, "train_out");
            std::optional<Recognizer> phi_p, phi_s;
            if (!phi_photo_path.empty()) {
                phi_p = load_recognizer(phi_photo_path);
                phi_s = load_recognizer(phi_sketch_path);
            }
            TrainOptions options;
            options.checkpoint_path = dir / "synth.ckpt";
            options.log_path = dir / "synth_log.jsonl";
            auto state = train(load_manifest(manifest_path), cfg, phi_p ? &*phi_p : nullptr, phi_s ? &*phi_s : nullptr,
                               options);
            print({{"checkpoint", options.checkpoint_path->string()},
                   {"epochs", state.epoch},
                   {"steps", state.step},
                   {"generator_hash", state.generator_hash()}});
        } else if (synth_cmd->parsed()) {
            auto state = load_checkpoint(checkpoint_path);
            const auto dir = out_dir(g, "fake");
            const auto m = synthesize_dataset(state, load_manifest(manifest_path), parse_direction(direction), dir);
            print({{"manifest", (dir / "manifest.jsonl").string()}, {"images", m.size()}});
        } else if (ft_cmd->parsed()) {
            const auto tk = load_config(g).optimize;
            const auto d = parse_modality(domain);
            const bool first = parse_fine_tune_stage(stage) == FineTuneStage::first;
            const auto ft = first ? tk.finetune_first : tk.finetune_next;
            const auto m = load_manifest(manifest_path);
            std::vector<Domain> domains{d == Modality::photo ? Domain::photo : Domain::sketch};
            const auto fake = d == Modality::photo ? Domain::fake_photo : Domain::fake_sketch;
            if (has_all_fakes(m, Split::train, fake)) domains.push_back(fake);
            const auto data = load_labeled_images(m, Split::train, domains, tk.synth_config.preprocess);
            auto phi = recognizer_path.empty() ? build_recognizer(tk.recognizer, derive_seed(tk.synth_config.seed, 100))
                                               : load_recognizer(recognizer_path);
            const int iters = iterations ? *iterations
                              : (d == Modality::sketch && ft.sketch_iterations > 0) ? ft.sketch_iterations
                                                                                    : ft.iterations;
            const double before = dataset_triplet_loss(phi, data, ft.triplet);
            const auto history = fine_tune(phi, data, ft, iters, derive_seed(tk.synth_config.seed, 2000));
            const double after = dataset_triplet_loss(phi, data, ft.triplet);
            const auto dir = out_dir(g, "recognizer_out");
            const auto ckpt = dir / ("phi_" + domain + ".ckpt");
            save_recognizer(phi, ckpt, {{"domain", domain}, {"stage", stage}, {"iterations", iters}});
            print({{"checkpoint", ckpt.string()},
                   {"images", data.size()},
                   {"iterations", iters},
                   {"triplet_loss_before", before},
                   {"triplet_loss_after", after},
                   {"final_batch_loss", history.batch_losses.back()}});
        } else if (quality_cmd->parsed()) {
            const auto qc = load_config(g).optimize.quality;
            MetricReport report;
            if (!fake_dir.empty() || !real_dir.empty()) {
                if (fake_dir.empty() || real_dir.empty())
                    throw ConfigError("fake-dir", "--fake-dir and --real-dir must be given together");
                report = evaluate_quality_dirs(fake_dir, real_dir, qc);
            } else if (!fake_manifest.empty() && !real_manifest.empty()) {
                report = evaluate_quality(load_manifest(fake_manifest), load_manifest(real_manifest),
                                          parse_modality(modality), parse_split(split), qc);
            } else {
                throw ConfigError("fake-dir", "give --fake-dir/--real-dir or --fake-manifest/--real-manifest");
            }
            if (!g.out.empty()) report.write_json(out_dir(g, ".") / "quality.json");
            if (!csv_path.empty()) report.write_csv(csv_path);
            print(report.to_json());
        } else if (rec_cmd->parsed()) {
            const auto tk = load_config(g).optimize;
            const auto proto = parse_protocol(protocol);
            const auto sim = parse_similarity(similarity);
            const auto m = load_manifest(manifest_path);
            const auto sp = parse_split(split);
            const auto& pre = tk.synth_config.preprocess;
            auto need = [](const std::string& p, const char* flag) {
                if (p.empty()) throw ConfigError(flag, std::string("--") + flag + " is required for this protocol");
                return load_recognizer(p);
            };
            std::optional<ScoreMatrix> s_scores, p_scores;
            if (proto != Protocol::photo) {
                auto phi = need(phi_sketch_path, "phi-sketch");
                const auto sets = protocol_sets(Protocol::sketch, phi, m, sp, pre);
                s_scores = score_matrix(sets.probes, sets.gallery, sim);
            }
            if (proto != Protocol::sketch) {
                auto phi = need(phi_photo_path, "phi-photo");
                const auto sets = protocol_sets(Protocol::photo, phi, m, sp, pre);
                p_scores = score_matrix(sets.probes, sets.gallery, sim);
            }
            const ScoreMatrix scores = proto == Protocol::sketch  ? *s_scores
                                       : proto == Protocol::photo ? *p_scores
                                                                  : fuse_scores(*s_scores, *p_scores, parse_fusion(fusion));
            json out = {{"protocol", to_string(proto)},
                        {"rank", rank},
                        {"accuracy", rank_k_accuracy(scores, rank)},
                        {"probes", scores.rows()}};
            if (s_scores) out["sketch_matching"] = rank_k_accuracy(*s_scores, rank);
            if (p_scores) out["photo_matching"] = rank_k_accuracy(*p_scores, rank);
            if (!scores_csv.empty()) write_score_csv(scores, scores_csv);
            print(out);
        } else if (opt_cmd->parsed()) {
            auto tk = load_config(g).optimize;
            if (max_rounds) tk.max_rounds = *max_rounds;
            if (warm_start) tk.warm_start = true;
            const auto dir = out_dir(g, "optimize_out");
            OptimizeOptions options;
            if (!stop_after.empty())
                options.should_continue = [&](const std::string& s) { return s != stop_after; };
            const auto result = mutual_optimize(load_manifest(manifest_path), tk, dir, options);
            json rounds = json::array();
            for (const auto& r : result.rounds) rounds.push_back(r.to_json());
            print({{"completed", result.completed}, {"stop_reason", result.stop_reason}, {"rounds", rounds}});
            return result.completed ? 0 : 3;
        } else if (inspect_cmd->parsed()) {
            auto header = read_checkpoint_header(checkpoint_path);
            std::int64_t count = 0;
            for (const auto& t : header.at("tensors")) {
                std::int64_t n = 1;
                for (const auto& d : t.at("shape")) n *= d.get<std::int64_t>();
                count += n;
            }
            header["num_tensors"] = header.at("tensors").size();
            header["num_elements"] = count;
            header["sha256"] = sha256_file(checkpoint_path);
            header.erase("tensors");
            print(header);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace facecycle
