#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>

namespace facecycle {

enum class Norm { instance, none };

std::string_view to_string(Norm norm);
Norm parse_norm(std::string_view name);

struct GeneratorConfig {
    int input_channels = 3;
    int base_filters = 64;
    int num_residual_blocks = 9;
    Norm norm = Norm::instance;

    /// 9 residual blocks at 256 px and above, 6 below.
    static GeneratorConfig for_image_size(int image_size);
    void validate() const;
};

struct DiscriminatorConfig {
    int input_channels = 3;
    int base_filters = 64;
    int num_downsampling_layers = 3;
    Norm norm = Norm::instance;

    void validate() const;
};

enum class Backbone { desk_cnn, vgg16 };

std::string_view to_string(Backbone backbone);
Backbone parse_backbone(std::string_view name);

struct RecognizerConfig {
    int embedding_dim = 128;
    Backbone backbone = Backbone::desk_cnn;
    int num_identities = 8;
    /// Native input resolution; other sizes are resized bilinearly in embed().
    int input_size = 64;
    /// Width of the first conv stage (64 reproduces VGG-16 widths).
    int base_filters = 16;
    /// fc6 width.
    int hidden_dim = 256;
    /// Unit-L2 embeddings. Switch off to get raw fc7 activations.
    bool normalize_embedding = true;

    void validate() const;
};

struct ConvLayerSpec {
    int kernel;
    int stride;
    int padding;
};

/// Layer geometry of the PatchGAN critic described by `config`.
std::vector<ConvLayerSpec> discriminator_layers(const DiscriminatorConfig& config);
std::int64_t conv_output_size(std::int64_t input, const ConvLayerSpec& layer);
/// Spatial side of the score map for a square input of side `input`.
std::int64_t patch_map_size(const DiscriminatorConfig& config, std::int64_t input);

struct ReceptiveField {
    std::int64_t size;    // input pixels seen by one output unit
    std::int64_t jump;    // input stride between adjacent output units
    std::int64_t offset;  // input coordinate of output unit 0's window start
};

ReceptiveField receptive_field(std::span<const ConvLayerSpec> layers);

/// Residual translator: 7×7 conv, two stride-2 convs, residual blocks, two
/// stride-½ transposed convs, 7×7 conv and tanh. Inputs whose sides are not a
/// multiple of four are reflection-padded and the output cropped back.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorConfig config = {});
    torch::Tensor forward(torch::Tensor x);
    const GeneratorConfig& config() const { return config_; }

private:
    GeneratorConfig config_;
    torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Generator);

/// 70×70 PatchGAN critic producing a 1×h×w map of raw scores.
class DiscriminatorImpl : public torch::nn::Module {
public:
    explicit DiscriminatorImpl(DiscriminatorConfig config = {});
    torch::Tensor forward(torch::Tensor x);
    const DiscriminatorConfig& config() const { return config_; }

private:
    DiscriminatorConfig config_;
    torch::nn::Sequential model_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Embedding network: conv trunk → fc6 → fc7 (embedding) → fc8 (identity logits).
class RecognizerImpl : public torch::nn::Module {
public:
    explicit RecognizerImpl(RecognizerConfig config = {});

    /// B×3×H×W → B×embedding_dim (the fc7 activations).
    torch::Tensor embed(torch::Tensor x);
    /// B×3×H×W → B×num_identities.
    torch::Tensor classify(torch::Tensor x);
    torch::Tensor forward(torch::Tensor x) { return embed(std::move(x)); }
    const RecognizerConfig& config() const { return config_; }

private:
    torch::Tensor fc7(torch::Tensor x);

    RecognizerConfig config_;
    torch::nn::Sequential trunk_{nullptr};
    torch::nn::Linear fc6_{nullptr};
    torch::nn::Linear fc7_{nullptr};
    torch::nn::Linear fc8_{nullptr};
};
TORCH_MODULE(Recognizer);

enum class InitScheme {
    gaussian,  // N(0, 0.02) weights, zero biases
    he_normal  // N(0, 2/fan_in) weights, zero biases
};

std::int64_t count_parameters(const torch::nn::Module& net);
/// Deterministic in `seed` whatever the state of the global torch generator.
void init_parameters(torch::nn::Module& net, std::uint64_t seed,
                     InitScheme scheme = InitScheme::gaussian);

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed);
Discriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed);
/// Recognizers use He initialisation: the trunk has no normalization layers.
Recognizer build_recognizer(const RecognizerConfig& config, std::uint64_t seed);

std::vector<torch::Tensor> parameter_list(const torch::nn::Module& net);
std::string parameter_hash(const torch::nn::Module& net);
void set_requires_grad(torch::nn::Module& net, bool flag);

}  // namespace facecycle
