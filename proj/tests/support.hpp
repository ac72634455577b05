#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "facecycle/fixture.hpp"
#include "facecycle/pipeline.hpp"
#include "facecycle/recognizer.hpp"
#include "facecycle/trainer.hpp"

namespace facecycle::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("facecycle_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

/// Desk-scale synthesis settings: 64 px, narrow networks, default optimiser settings.
inline TrainConfig toy_train_config(int epochs = 4, std::uint64_t seed = 11) {
    TrainConfig c;
    c.total_epochs = epochs;
    c.constant_lr_epochs = epochs / 2;
    c.seed = seed;
    c.loss_weights.lambda_ip = 0.0;
    c.generator.base_filters = 16;
    c.generator.num_residual_blocks = 3;
    c.discriminator.base_filters = 32;
    c.preprocess.target_size = 64;
    return c;
}

inline RecognizerConfig toy_recognizer_config() {
    RecognizerConfig c;
    c.embedding_dim = 64;
    c.base_filters = 16;
    c.hidden_dim = 128;
    c.input_size = 64;
    return c;
}

/// Fine-tuning schedule scaled for randomly initialised desk-scale recognizers.
inline FineTuneConfig toy_fine_tune_config(int iterations) {
    FineTuneConfig c = FineTuneConfig::first_stage();
    c.lr_policy = {0.01, 100, 0.96};
    c.iterations = iterations;
    c.sketch_iterations = iterations;
    return c;
}

inline OptimizeConfig toy_optimize_config(int epochs, int finetune_iterations) {
    OptimizeConfig c;
    c.max_rounds = 2;
    c.synth_config = toy_train_config(epochs, 5);
    c.synth_config.loss_weights.lambda_ip = 10.0;
    c.recognizer = toy_recognizer_config();
    c.finetune_first = toy_fine_tune_config(finetune_iterations);
    c.finetune_next = toy_fine_tune_config(finetune_iterations);
    c.finetune_next.lr_policy = {0.005, 200, 0.96};
    return c;
}

/// Relative error ||a - n|| / max(||a||, ||n||) of autograd against central
/// differences on `count` randomly chosen elements of `input` (double precision).
inline double gradient_check(const std::function<torch::Tensor()>& loss, torch::Tensor input, std::uint64_t seed,
                             int count = 10, double step = 1e-4) {
    if (input.grad().defined()) input.mutable_grad().zero_();
    auto value = loss();
    auto analytic = torch::autograd::grad({value}, {input}, {}, false, false, true)[0];
    if (!analytic.defined()) analytic = torch::zeros_like(input);
    analytic = analytic.reshape(-1);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> pick(0, input.numel() - 1);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto flat = input.detach().view(-1);
    for (int i = 0; i < count; ++i) {
        const auto idx = pick(rng);
        const double orig = flat[idx].item<double>();
        double plus, minus;
        {
            torch::NoGradGuard no_grad;
            flat[idx] = orig + step;
            plus = loss().item<double>();
            flat[idx] = orig - step;
            minus = loss().item<double>();
            flat[idx] = orig;
        }
        const double numeric = (plus - minus) / (2.0 * step);
        const double a = analytic[idx].item<double>();
        diff2 += (a - numeric) * (a - numeric);
        a2 += a * a;
        n2 += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
    return denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
}

}  // namespace facecycle::testing
