#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "facecycle/dataset.hpp"
#include "facecycle/losses.hpp"
#include "facecycle/nets.hpp"
#include "facecycle/optim.hpp"

namespace facecycle {

/// Independent sub-seed for stream `stream` of a run seeded with `seed` (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct TrainConfig {
    int total_epochs = 200;
    int constant_lr_epochs = 100;
    double base_lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch_size = 1;
    int buffer_capacity = 50;
    std::uint64_t seed = 0;
    LossWeights loss_weights;
    AdversarialMode adversarial_mode = AdversarialMode::least_squares;
    IdentityMappingMode identity_mapping = IdentityMappingMode::literal;
    GeneratorConfig generator = GeneratorConfig::for_image_size(256);
    DiscriminatorConfig discriminator;
    PreprocessConfig preprocess;

    void validate() const;
};

/// Constant for the first `constant_lr_epochs`, then linear decay towards zero
/// at `total_epochs`. Throws Error outside [0, total_epochs).
double lr_at_epoch(int epoch, const TrainConfig& config);

/// Replay pool of generated images used for critic updates.
class ImageBuffer {
public:
    ImageBuffer(int capacity, std::uint64_t seed);

    /// Single image (C×H×W). Fill phase stores and returns `fresh`; afterwards
    /// returns `fresh` or, with probability 0.5, swaps it for a random stored image.
    torch::Tensor query(const torch::Tensor& fresh);
    /// Applies query() to every image of a B×C×H×W batch.
    torch::Tensor query_batch(const torch::Tensor& fresh);

    int capacity() const { return capacity_; }
    std::size_t size() const { return stored_.size(); }
    const std::vector<torch::Tensor>& stored() const { return stored_; }
    std::vector<torch::Tensor>& stored() { return stored_; }

    std::string rng_state() const;
    void set_rng_state(const std::string& state);

private:
    int capacity_;
    std::vector<torch::Tensor> stored_;
    std::mt19937_64 rng_;
};

/// Everything needed to continue training bit-exactly.
struct TrainState {
    explicit TrainState(const TrainConfig& config);

    TrainConfig config;
    Generator g_x;      // photo -> sketch
    Generator g_y;      // sketch -> photo
    Discriminator d_x;  // judges photos
    Discriminator d_y;  // judges sketches
    Adam opt_g;         // both generators jointly
    Adam opt_d_x;
    Adam opt_d_y;
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    ImageBuffer buffer_x;  // fake photos for D_X
    ImageBuffer buffer_y;  // fake sketches for D_Y
    std::mt19937_64 augment_rng;
    /// Free-form record of inputs (e.g. recognizer checkpoint hashes).
    nlohmann::json provenance = nlohmann::json::object();

    void set_lr(double lr);
    std::string generator_hash() const;
    std::string discriminator_hash() const;
};

struct StepLosses {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    double lr = 0.0;
    double gan_x = 0.0;
    double gan_y = 0.0;
    double cyc = 0.0;
    double ip = 0.0;
    double im = 0.0;
    double total = 0.0;
    double d_x = 0.0;
    double d_y = 0.0;

    nlohmann::json to_json() const;
};

/// Called after each sub-update with "generators", "d_y" or "d_x".
using StepObserver = std::function<void(std::string_view stage)>;

/// One optimisation step of the full objective: joint generator update, then
/// D_Y, then D_X on buffer-drawn fakes. Recognizers are required when
/// lambda_ip > 0 and are never modified.
StepLosses train_step(TrainState& state, const PairBatch& batch, Recognizer* phi_photo,
                      Recognizer* phi_sketch, const StepObserver& observer = {});

/// The same step with the identity-perception branch compiled out (the plain
/// cycle-consistent objective).
StepLosses train_step_baseline(TrainState& state, const PairBatch& batch,
                               const StepObserver& observer = {});

struct TrainOptions {
    /// Saved after every epoch; an existing file is resumed from.
    std::optional<std::filesystem::path> checkpoint_path;
    /// JSON-lines, one record per step.
    std::optional<std::filesystem::path> log_path;
    /// Return false to stop after the current epoch (checkpoint already written).
    std::function<bool(std::int64_t completed_epoch)> continue_after_epoch;
    std::function<void(const StepLosses&)> on_step;
};

/// Runs epochs [state.epoch, total_epochs). Without recognizers the baseline
/// objective is used (lambda_ip must then be 0). Returns true when all epochs ran.
bool train_epochs(TrainState& state, const PairDataset& data, Recognizer* phi_photo,
                  Recognizer* phi_sketch, const TrainOptions& options = {});

TrainState train(const Manifest& manifest, const TrainConfig& config, Recognizer* phi_photo,
                 Recognizer* phi_sketch, const TrainOptions& options = {});

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

enum class Direction { p2s, s2p, both };

std::string_view to_string(Direction direction);
Direction parse_direction(std::string_view name);

/// Writes `<id>_fake_sketch.png` / `<id>_fake_photo.png` for every entry of
/// `manifest` plus `manifest.jsonl` pairing each fake with its real images.
Manifest synthesize_dataset(TrainState& state, const Manifest& manifest, Direction direction,
                            const std::filesystem::path& out_dir);

}  // namespace facecycle
