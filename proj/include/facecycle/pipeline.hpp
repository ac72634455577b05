#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "facecycle/metrics.hpp"
#include "facecycle/recognizer.hpp"
#include "facecycle/trainer.hpp"

namespace facecycle {

struct OptimizeConfig {
    int max_rounds = 2;
    /// Stop once the relative round-over-round gain in fused rank-1 drops below this.
    double stability_epsilon = 0.005;
    /// Synthesis settings for every round; the base synthesizer runs it with lambda_ip = 0.
    TrainConfig synth_config;
    RecognizerConfig recognizer;
    FineTuneConfig finetune_first = FineTuneConfig::first_stage();
    FineTuneConfig finetune_next = FineTuneConfig::subsequent_stage();
    QualityConfig quality;
    bool eval_every_round = true;
    /// Start round i's synthesizer from round i-1's weights instead of a fresh model.
    bool warm_start = false;
    Similarity similarity = Similarity::cosine;
    Fusion fusion = Fusion::min_max_mean;
    Split eval_split = Split::test;
    /// Optional pretrained starting recognizers; random initialisation otherwise.
    std::optional<std::filesystem::path> base_photo_recognizer;
    std::optional<std::filesystem::path> base_sketch_recognizer;

    void validate() const;
};

struct RoundRecord {
    int round_index = 0;
    /// Paths are relative to the output directory.
    std::filesystem::path synth_checkpoint;
    std::filesystem::path phi_photo_checkpoint;
    std::filesystem::path phi_sketch_checkpoint;
    std::filesystem::path fake_manifest;
    std::string synth_hash;
    std::string phi_photo_hash;
    std::string phi_sketch_hash;
    /// Recognizer file hashes recorded inside the synthesizer checkpoint.
    std::string synth_consumed_phi_photo;
    std::string synth_consumed_phi_sketch;
    MetricReport quality_sketch;
    MetricReport quality_photo;
    /// Rank-1 rates on this round's fakes under the recognizers before and after fine-tuning.
    RecognitionRates recognition_pre;
    RecognitionRates recognition_post;
    bool evaluated = false;

    nlohmann::json to_json() const;
    static RoundRecord from_json(const nlohmann::json& j);
};

struct OptimizeOptions {
    /// Called after each completed stage with an id such as "base/synth",
    /// "round_000/finetune" or "round_000/synth/epoch_3". Returning false
    /// interrupts the run; completed work stays on disk for a later resume.
    std::function<bool(const std::string& stage)> should_continue;
};

struct OptimizeResult {
    std::vector<RoundRecord> rounds;
    bool completed = false;
    /// Why the loop ended: "max_rounds", "stable" or "interrupted".
    std::string stop_reason;
};

/// Mutual cyclic optimisation: base synthesizer without identity perception,
/// then per round fine-tune both recognizers on real + fake images and retrain
/// the synthesizer under them. Re-running on the same directory skips stages
/// whose artifacts are intact. Stage failures are rethrown as Error naming the
/// round and stage.
OptimizeResult mutual_optimize(const Manifest& manifest, const OptimizeConfig& config,
                               const std::filesystem::path& out_dir, const OptimizeOptions& options = {});

/// Checks that every artifact referenced by `record` exists below `out_dir` and
/// that the hashes and cross-references agree. Returns a list of problems.
std::vector<std::string> verify_round(const RoundRecord& record, const std::filesystem::path& out_dir);

std::string format_round_dir(int round_index);

/// Whole-toolkit configuration document: sections train, recognizer,
/// finetune_first, finetune_next, quality, optimize.
struct ToolkitConfig {
    OptimizeConfig optimize;

    nlohmann::json to_json() const;
};

ToolkitConfig toolkit_config_from_json(const nlohmann::json& j);
/// Parses a JSON file. Throws ConfigError naming the first offending key.
ToolkitConfig load_toolkit_config(const std::filesystem::path& path);

}  // namespace facecycle
