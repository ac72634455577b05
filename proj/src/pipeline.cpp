#include "facecycle/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "facecycle/checkpoint.hpp"
#include "facecycle/config.hpp"
#include "facecycle/error.hpp"
#include "facecycle/hashing.hpp"
#include "facecycle/log.hpp"

namespace facecycle {

using nlohmann::json;
namespace fs = std::filesystem;

void OptimizeConfig::validate() const {
    if (max_rounds < 1) throw ConfigError("optimize.max_rounds", "must be >= 1");
    if (!(stability_epsilon >= 0.0) || !std::isfinite(stability_epsilon))
        throw ConfigError("optimize.stability_epsilon", "must be finite and >= 0");
    validate_under("train", [&] { synth_config.validate(); });
    validate_under("recognizer", [&] { recognizer.validate(); });
    validate_under("finetune_first", [&] { finetune_first.validate(); });
    validate_under("finetune_next", [&] { finetune_next.validate(); });
    validate_under("quality", [&] { quality.validate(); });
}

std::string format_round_dir(int round_index) {
    std::ostringstream os;
    os << "round_" << std::setw(3) << std::setfill('0') << round_index;
    return os.str();
}

json RoundRecord::to_json() const {
    return {{"round_index", round_index},
            {"synth_checkpoint", synth_checkpoint.generic_string()},
            {"phi_photo_checkpoint", phi_photo_checkpoint.generic_string()},
            {"phi_sketch_checkpoint", phi_sketch_checkpoint.generic_string()},
            {"fake_manifest", fake_manifest.generic_string()},
            {"synth_hash", synth_hash},
            {"phi_photo_hash", phi_photo_hash},
            {"phi_sketch_hash", phi_sketch_hash},
            {"synth_consumed_phi_photo", synth_consumed_phi_photo},
            {"synth_consumed_phi_sketch", synth_consumed_phi_sketch},
            {"quality", {{"sketch", quality_sketch.to_json()}, {"photo", quality_photo.to_json()}}},
            {"recognition", {{"pre", recognition_pre.to_json()}, {"post", recognition_post.to_json()}}},
            {"evaluated", evaluated}};
}

namespace {

RecognitionRates rates_from_json(const json& j) {
    RecognitionRates r;
    r.sketch_matching = j.at("sketch_matching").get<double>();
    r.photo_matching = j.at("photo_matching").get<double>();
    r.fused = j.at("fused").get<double>();
    return r;
}

}  // namespace

RoundRecord RoundRecord::from_json(const json& j) {
    RoundRecord r;
    r.round_index = j.at("round_index").get<int>();
    r.synth_checkpoint = j.at("synth_checkpoint").get<std::string>();
    r.phi_photo_checkpoint = j.at("phi_photo_checkpoint").get<std::string>();
    r.phi_sketch_checkpoint = j.at("phi_sketch_checkpoint").get<std::string>();
    r.fake_manifest = j.at("fake_manifest").get<std::string>();
    r.synth_hash = j.at("synth_hash").get<std::string>();
    r.phi_photo_hash = j.at("phi_photo_hash").get<std::string>();
    r.phi_sketch_hash = j.at("phi_sketch_hash").get<std::string>();
    r.synth_consumed_phi_photo = j.at("synth_consumed_phi_photo").get<std::string>();
    r.synth_consumed_phi_sketch = j.at("synth_consumed_phi_sketch").get<std::string>();
    r.quality_sketch = MetricReport::from_json(j.at("quality").at("sketch"));
    r.quality_photo = MetricReport::from_json(j.at("quality").at("photo"));
    r.recognition_pre = rates_from_json(j.at("recognition").at("pre"));
    r.recognition_post = rates_from_json(j.at("recognition").at("post"));
    r.evaluated = j.at("evaluated").get<bool>();
    return r;
}

std::vector<std::string> verify_round(const RoundRecord& record, const fs::path& out_dir) {
    std::vector<std::string> problems;
    auto check_file = [&](const fs::path& rel, const std::string& expected, const char* what) {
        const auto path = out_dir / rel;
        if (rel.empty() || !fs::is_regular_file(path)) {
            problems.push_back(std::string(what) + " missing: " + path.string());
            return;
        }
        if (!expected.empty() && sha256_file(path) != expected)
            problems.push_back(std::string(what) + " hash mismatch: " + path.string());
    };
    check_file(record.synth_checkpoint, record.synth_hash, "synthesizer checkpoint");
    check_file(record.phi_photo_checkpoint, record.phi_photo_hash, "photo recognizer checkpoint");
    check_file(record.phi_sketch_checkpoint, record.phi_sketch_hash, "sketch recognizer checkpoint");
    check_file(record.fake_manifest, "", "fake manifest");
    if (record.synth_consumed_phi_photo != record.phi_photo_hash)
        problems.push_back("synthesizer was trained under a different photo recognizer");
    if (record.synth_consumed_phi_sketch != record.phi_sketch_hash)
        problems.push_back("synthesizer was trained under a different sketch recognizer");
    if (record.evaluated) {
        for (const char* name : {"quality.json", "recognition.json"})
            if (!fs::is_regular_file(out_dir / record.synth_checkpoint.parent_path() / name))
                problems.push_back(std::string(name) + " missing for round " + std::to_string(record.round_index));
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping

namespace {

struct Interrupted {};

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    return json::parse(in);
}

void write_json_atomic(const fs::path& path, const json& j) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        out << j.dump(2) << '\n';
        if (!out) throw Error("failed writing " + tmp);
    }
    fs::rename(tmp, path);
}

/// Relative file list (sorted) of a directory tree, with hashes.
json hash_tree(const fs::path& root, const fs::path& rel_dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root / rel_dir))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    json out = json::object();
    for (const auto& f : files) out[f.generic_string()] = sha256_file(root / f);
    return out;
}

class StageTracker {
public:
    StageTracker(fs::path out_dir, const OptimizeOptions& options) : out_(std::move(out_dir)), options_(options) {}

    const fs::path& out() const { return out_; }

    /// True when a marker exists for `stage` with the same inputs and intact artifacts.
    bool done(const std::string& stage, const json& inputs) const {
        const auto marker = marker_path(stage);
        if (!fs::exists(marker)) return false;
        json m;
        try {
            m = read_json(marker);
        } catch (const std::exception&) {
            return false;
        }
        if (m.value("inputs", json()) != inputs) return false;
        for (const auto& [rel, hash] : m.at("artifacts").items())
            if (!fs::is_regular_file(out_ / rel) || sha256_file(out_ / rel) != hash.get<std::string>()) return false;
        return true;
    }

    void complete(const std::string& stage, const json& inputs, const std::vector<fs::path>& files,
                  const std::vector<fs::path>& dirs = {}) {
        json artifacts = json::object();
        for (const auto& f : files) artifacts[f.generic_string()] = sha256_file(out_ / f);
        for (const auto& d : dirs) artifacts.update(hash_tree(out_, d));
        write_json_atomic(marker_path(stage), {{"stage", stage}, {"inputs", inputs}, {"artifacts", artifacts}});
        checkpoint(stage);
    }

    /// Interrupts when the caller's hook says so.
    void checkpoint(const std::string& stage) const {
        if (options_.should_continue && !options_.should_continue(stage)) throw Interrupted{};
    }

    std::string file_hash(const fs::path& rel) const { return sha256_file(out_ / rel); }

private:
    fs::path marker_path(const std::string& stage) const {
        std::string name = stage;
        std::replace(name.begin(), name.end(), '/', '.');
        return out_ / ".stages" / (name + ".json");
    }

    fs::path out_;
    const OptimizeOptions& options_;
};

template <typename F>
auto run_stage(const std::string& where, F&& body) {
    try {
        return body();
    } catch (const Interrupted&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("optimize failed at " + where + ": " + e.what());
    }
}

/// Trains (or resumes) a synthesizer at `ckpt_rel`; returns false when interrupted.
void run_synthesis(StageTracker& tracker, const std::string& stage, const TrainConfig& config, const Manifest& manifest,
                   const fs::path& ckpt_rel, Recognizer* phi_photo, Recognizer* phi_sketch, const json& provenance,
                   const std::optional<fs::path>& warm_from) {
    const auto ckpt = tracker.out() / ckpt_rel;
    std::optional<TrainState> state;
    if (fs::exists(ckpt)) {
        state.emplace(load_checkpoint(ckpt));
        if (to_json(state->config) != to_json(config) || state->provenance != provenance) {
            log::warn(ckpt.string(), " does not match this stage; retraining");
            state.reset();
        }
    }
    if (!state) {
        state.emplace(config);
        state->provenance = provenance;
        if (warm_from) {
            const auto prev = load_checkpoint(*warm_from);
            torch::NoGradGuard no_grad;
            auto copy = [](torch::nn::Module& dst, const torch::nn::Module& src) {
                auto d = dst.parameters();
                auto s = src.parameters();
                for (std::size_t i = 0; i < d.size(); ++i) d[i].copy_(s[i]);
            };
            copy(*state->g_x, *prev.g_x);
            copy(*state->g_y, *prev.g_y);
            copy(*state->d_x, *prev.d_x);
            copy(*state->d_y, *prev.d_y);
        }
    }
    PairDataset data(manifest, Split::train, config.preprocess);
    TrainOptions options;
    options.checkpoint_path = ckpt;
    options.log_path = ckpt.parent_path() / (ckpt.stem().string() + "_log.jsonl");
    options.continue_after_epoch = [&](std::int64_t epoch) {
        try {
            tracker.checkpoint(stage + "/epoch_" + std::to_string(epoch));
        } catch (const Interrupted&) {
            return false;
        }
        return true;
    };
    if (state->epoch >= config.total_epochs) save_checkpoint(*state, ckpt);
    else if (!train_epochs(*state, data, phi_photo, phi_sketch, options)) throw Interrupted{};
}

Recognizer initial_recognizer(const OptimizeConfig& config, const std::optional<fs::path>& path, std::uint64_t seed) {
    if (path) return load_recognizer(*path);
    return build_recognizer(config.recognizer, seed);
}

double relative_gain(double before, double after) { return before > 0.0 ? (after - before) / before : after - before; }

}  // namespace

// ---------------------------------------------------------------------------

OptimizeResult mutual_optimize(const Manifest& manifest, const OptimizeConfig& config, const fs::path& out_dir,
                               const OptimizeOptions& options) {
    config.validate();
    if (manifest.count(Split::train) == 0) throw Error("optimize: manifest has no train split");
    if (manifest.count(config.eval_split) == 0)
        throw Error("optimize: manifest has no " + std::string(to_string(config.eval_split)) + " split");
    fs::create_directories(out_dir / ".stages");
    StageTracker tracker(out_dir, options);
    const auto seed = config.synth_config.seed;
    const auto& pre = config.synth_config.preprocess;
    OptimizeResult result;

    try {
        // Base synthesizer S_0 without identity perception, and its fakes.
        const fs::path base = "base";
        fs::create_directories(out_dir / base);
        TrainConfig base_cfg = config.synth_config;
        base_cfg.loss_weights.lambda_ip = 0.0;
        const json base_inputs = {{"config", to_json(base_cfg)}};
        run_stage("base/synth", [&] {
            if (tracker.done("base/synth", base_inputs)) return;
            log::info("optimize: training base synthesizer");
            run_synthesis(tracker, "base/synth", base_cfg, manifest, base / "synth.ckpt", nullptr, nullptr, json::object(),
                          std::nullopt);
            tracker.complete("base/synth", base_inputs, {base / "synth.ckpt"});
        });
        const json base_fake_inputs = {{"synth", tracker.file_hash(base / "synth.ckpt")}};
        run_stage("base/synthesize", [&] {
            if (tracker.done("base/synthesize", base_fake_inputs)) return;
            fs::remove_all(out_dir / base / "fake");
            auto state = load_checkpoint(out_dir / base / "synth.ckpt");
            synthesize_dataset(state, manifest, Direction::both, out_dir / base / "fake");
            tracker.complete("base/synthesize", base_fake_inputs, {}, {base / "fake"});
        });
        const json base_phi_inputs = {{"recognizer", to_json(config.recognizer)},
                                      {"photo", config.base_photo_recognizer ? sha256_file(*config.base_photo_recognizer) : ""},
                                      {"sketch", config.base_sketch_recognizer ? sha256_file(*config.base_sketch_recognizer) : ""},
                                      {"seed", seed}};
        run_stage("base/recognizers", [&] {
            if (tracker.done("base/recognizers", base_phi_inputs)) return;
            auto p = initial_recognizer(config, config.base_photo_recognizer, derive_seed(seed, 100));
            auto s = initial_recognizer(config, config.base_sketch_recognizer, derive_seed(seed, 101));
            save_recognizer(p, out_dir / base / "phi_photo.ckpt", {{"round", "base"}});
            save_recognizer(s, out_dir / base / "phi_sketch.ckpt", {{"round", "base"}});
            tracker.complete("base/recognizers", base_phi_inputs, {base / "phi_photo.ckpt", base / "phi_sketch.ckpt"});
        });

        fs::path prev_dir = base;
        for (int r = 0; r < config.max_rounds; ++r) {
            const fs::path rd = format_round_dir(r);
            const std::string tag = rd.string();
            fs::create_directories(out_dir / rd);
            const auto& ft = r == 0 ? config.finetune_first : config.finetune_next;
            const fs::path prev_fake = prev_dir / "fake" / "manifest.jsonl";

            // Step 4: fine-tune both recognizers on real + fake images.
            const json ft_inputs = {{"finetune", to_json(ft)},
                                    {"phi_photo", tracker.file_hash(prev_dir / "phi_photo.ckpt")},
                                    {"phi_sketch", tracker.file_hash(prev_dir / "phi_sketch.ckpt")},
                                    {"fake", hash_tree(out_dir, prev_dir / "fake")},
                                    {"preprocess", to_json(pre)},
                                    {"seed", seed}};
            run_stage(tag + "/finetune", [&] {
                if (tracker.done(tag + "/finetune", ft_inputs)) return;
                log::info("optimize: ", tag, " fine-tuning recognizers");
                const auto fakes = load_manifest(out_dir / prev_fake);
                auto phi_p = load_recognizer(out_dir / prev_dir / "phi_photo.ckpt");
                auto phi_s = load_recognizer(out_dir / prev_dir / "phi_sketch.ckpt");
                const auto photos = load_labeled_images(fakes, Split::train, {Domain::photo, Domain::fake_photo}, pre);
                const auto sketches = load_labeled_images(fakes, Split::train, {Domain::sketch, Domain::fake_sketch}, pre);
                fine_tune(phi_p, photos, ft, ft.iterations, derive_seed(seed, 2000 + 2 * static_cast<std::uint64_t>(r)));
                fine_tune(phi_s, sketches, ft, ft.sketch_iterations > 0 ? ft.sketch_iterations : ft.iterations,
                          derive_seed(seed, 2001 + 2 * static_cast<std::uint64_t>(r)));
                save_recognizer(phi_p, out_dir / rd / "phi_photo.ckpt", {{"round", r}});
                save_recognizer(phi_s, out_dir / rd / "phi_sketch.ckpt", {{"round", r}});
                tracker.complete(tag + "/finetune", ft_inputs, {rd / "phi_photo.ckpt", rd / "phi_sketch.ckpt"});
            });

            // Step 5: identity-aware synthesizer supervised by the new recognizers.
            TrainConfig round_cfg = config.synth_config;
            round_cfg.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(r));
            const json provenance = {{"phi_photo", tracker.file_hash(rd / "phi_photo.ckpt")},
                                     {"phi_sketch", tracker.file_hash(rd / "phi_sketch.ckpt")}};
            const std::optional<fs::path> warm =
                config.warm_start ? std::optional<fs::path>(out_dir / prev_dir / "synth.ckpt") : std::nullopt;
            json synth_inputs = {{"config", to_json(round_cfg)}, {"provenance", provenance}};
            if (warm) synth_inputs["warm_start"] = sha256_file(*warm);
            run_stage(tag + "/synth", [&] {
                if (tracker.done(tag + "/synth", synth_inputs)) return;
                log::info("optimize: ", tag, " training identity-aware synthesizer");
                auto phi_p = load_recognizer(out_dir / rd / "phi_photo.ckpt");
                auto phi_s = load_recognizer(out_dir / rd / "phi_sketch.ckpt");
                run_synthesis(tracker, tag + "/synth", round_cfg, manifest, rd / "synth.ckpt", &phi_p, &phi_s,
                              provenance, warm);
                tracker.complete(tag + "/synth", synth_inputs, {rd / "synth.ckpt"});
            });
            const json fake_inputs = {{"synth", tracker.file_hash(rd / "synth.ckpt")}};
            run_stage(tag + "/synthesize", [&] {
                if (tracker.done(tag + "/synthesize", fake_inputs)) return;
                fs::remove_all(out_dir / rd / "fake");
                auto state = load_checkpoint(out_dir / rd / "synth.ckpt");
                synthesize_dataset(state, manifest, Direction::both, out_dir / rd / "fake");
                tracker.complete(tag + "/synthesize", fake_inputs, {}, {rd / "fake"});
            });

            // Evaluation under the recognizers before and after this round's fine-tune.
            const bool evaluate = config.eval_every_round || r + 1 == config.max_rounds;
            const json eval_inputs = {{"fake", hash_tree(out_dir, rd / "fake")},
                                      {"pre_photo", tracker.file_hash(prev_dir / "phi_photo.ckpt")},
                                      {"pre_sketch", tracker.file_hash(prev_dir / "phi_sketch.ckpt")},
                                      {"post_photo", tracker.file_hash(rd / "phi_photo.ckpt")},
                                      {"post_sketch", tracker.file_hash(rd / "phi_sketch.ckpt")},
                                      {"quality", to_json(config.quality)},
                                      {"similarity", to_string(config.similarity)},
                                      {"fusion", to_string(config.fusion)},
                                      {"split", to_string(config.eval_split)}};
            if (evaluate)
                run_stage(tag + "/evaluate", [&] {
                    if (tracker.done(tag + "/evaluate", eval_inputs)) return;
                    log::info("optimize: ", tag, " evaluating");
                    const auto fakes = load_manifest(out_dir / rd / "fake" / "manifest.jsonl");
                    const auto q_sketch = evaluate_quality(fakes, manifest, Modality::sketch, config.eval_split, config.quality);
                    const auto q_photo = evaluate_quality(fakes, manifest, Modality::photo, config.eval_split, config.quality);
                    write_json_atomic(out_dir / rd / "quality.json",
                                      {{"sketch", q_sketch.to_json()}, {"photo", q_photo.to_json()}});
                    auto pre_p = load_recognizer(out_dir / prev_dir / "phi_photo.ckpt");
                    auto pre_s = load_recognizer(out_dir / prev_dir / "phi_sketch.ckpt");
                    auto post_p = load_recognizer(out_dir / rd / "phi_photo.ckpt");
                    auto post_s = load_recognizer(out_dir / rd / "phi_sketch.ckpt");
                    const auto before = evaluate_recognition(pre_p, pre_s, fakes, config.eval_split, pre,
                                                             config.similarity, config.fusion);
                    const auto after = evaluate_recognition(post_p, post_s, fakes, config.eval_split, pre,
                                                            config.similarity, config.fusion);
                    write_json_atomic(out_dir / rd / "recognition.json",
                                      {{"pre", before.to_json()},
                                       {"post", after.to_json()},
                                       {"pre_recognizers", {{"photo", eval_inputs["pre_photo"]}, {"sketch", eval_inputs["pre_sketch"]}}},
                                       {"post_recognizers", {{"photo", eval_inputs["post_photo"]}, {"sketch", eval_inputs["post_sketch"]}}}});
                    tracker.complete(tag + "/evaluate", eval_inputs, {rd / "quality.json", rd / "recognition.json"});
                });

            RoundRecord record;
            record.round_index = r;
            record.synth_checkpoint = rd / "synth.ckpt";
            record.phi_photo_checkpoint = rd / "phi_photo.ckpt";
            record.phi_sketch_checkpoint = rd / "phi_sketch.ckpt";
            record.fake_manifest = rd / "fake" / "manifest.jsonl";
            record.synth_hash = tracker.file_hash(record.synth_checkpoint);
            record.phi_photo_hash = tracker.file_hash(record.phi_photo_checkpoint);
            record.phi_sketch_hash = tracker.file_hash(record.phi_sketch_checkpoint);
            const auto consumed = read_checkpoint_header(out_dir / record.synth_checkpoint).at("meta").at("provenance");
            record.synth_consumed_phi_photo = consumed.value("phi_photo", "");
            record.synth_consumed_phi_sketch = consumed.value("phi_sketch", "");
            record.evaluated = evaluate;
            if (evaluate) {
                const auto q = read_json(out_dir / rd / "quality.json");
                record.quality_sketch = MetricReport::from_json(q.at("sketch"));
                record.quality_photo = MetricReport::from_json(q.at("photo"));
                const auto rec = read_json(out_dir / rd / "recognition.json");
                record.recognition_pre = rates_from_json(rec.at("pre"));
                record.recognition_post = rates_from_json(rec.at("post"));
            }
            result.rounds.push_back(record);
            json all = json::array();
            for (const auto& rr : result.rounds) all.push_back(rr.to_json());
            write_json_atomic(out_dir / "rounds.json", all);
            log::info("optimize: ", tag, " fused rank-1 ", record.recognition_pre.fused, " -> ",
                      record.recognition_post.fused, ", sketch SSIM ", record.quality_sketch.mean_ssim);
            prev_dir = rd;

            if (r > 0 && evaluate && result.rounds[static_cast<std::size_t>(r - 1)].evaluated &&
                relative_gain(result.rounds[static_cast<std::size_t>(r - 1)].recognition_post.fused,
                              record.recognition_post.fused) < config.stability_epsilon &&
                r + 1 < config.max_rounds) {
                result.stop_reason = "stable";
                result.completed = true;
                return result;
            }
        }
        result.stop_reason = "max_rounds";
        result.completed = true;
    } catch (const Interrupted&) {
        result.stop_reason = "interrupted";
        result.completed = false;
        log::info("optimize: interrupted; re-run on ", out_dir.string(), " to resume");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Toolkit configuration document

json ToolkitConfig::to_json() const {
    const auto& o = optimize;
    json opt = {{"max_rounds", o.max_rounds},
                {"stability_epsilon", o.stability_epsilon},
                {"eval_every_round", o.eval_every_round},
                {"warm_start", o.warm_start},
                {"similarity", facecycle::to_string(o.similarity)},
                {"fusion", facecycle::to_string(o.fusion)},
                {"eval_split", facecycle::to_string(o.eval_split)}};
    if (o.base_photo_recognizer) opt["base_photo_recognizer"] = o.base_photo_recognizer->string();
    if (o.base_sketch_recognizer) opt["base_sketch_recognizer"] = o.base_sketch_recognizer->string();
    return {{"train", facecycle::to_json(o.synth_config)},
            {"recognizer", facecycle::to_json(o.recognizer)},
            {"finetune_first", facecycle::to_json(o.finetune_first)},
            {"finetune_next", facecycle::to_json(o.finetune_next)},
            {"quality", facecycle::to_json(o.quality)},
            {"optimize", opt}};
}

ToolkitConfig toolkit_config_from_json(const json& j) {
    ToolkitConfig c;
    auto& o = c.optimize;
    FieldReader r(j, "", {"train", "recognizer", "finetune_first", "finetune_next", "quality", "optimize"});
    if (r.has("train")) o.synth_config = train_config_from_json(r.raw("train"), o.synth_config, "train");
    if (r.has("recognizer")) o.recognizer = recognizer_config_from_json(r.raw("recognizer"), o.recognizer, "recognizer");
    if (r.has("finetune_first"))
        o.finetune_first = fine_tune_config_from_json(r.raw("finetune_first"), o.finetune_first, "finetune_first");
    if (r.has("finetune_next"))
        o.finetune_next = fine_tune_config_from_json(r.raw("finetune_next"), o.finetune_next, "finetune_next");
    if (r.has("quality")) o.quality = quality_config_from_json(r.raw("quality"), o.quality, "quality");
    if (r.has("optimize")) {
        FieldReader op(r.raw("optimize"), "optimize",
                       {"max_rounds", "stability_epsilon", "eval_every_round", "warm_start", "similarity", "fusion",
                        "eval_split", "base_photo_recognizer", "base_sketch_recognizer"});
        op.read("max_rounds", o.max_rounds);
        op.read("stability_epsilon", o.stability_epsilon);
        op.read("eval_every_round", o.eval_every_round);
        op.read("warm_start", o.warm_start);
        op.read_enum("similarity", o.similarity, parse_similarity);
        op.read_enum("fusion", o.fusion, parse_fusion);
        op.read_enum("eval_split", o.eval_split, parse_split);
        std::string path;
        if (op.has("base_photo_recognizer")) {
            op.read("base_photo_recognizer", path);
            o.base_photo_recognizer = path;
        }
        if (op.has("base_sketch_recognizer")) {
            op.read("base_sketch_recognizer", path);
            o.base_sketch_recognizer = path;
        }
    }
    o.validate();
    return c;
}

ToolkitConfig load_toolkit_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("malformed JSON in ") + path.string() + ": " + e.what());
    }
    return toolkit_config_from_json(j);
}

}  // namespace facecycle
