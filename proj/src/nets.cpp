#include "facecycle/nets.hpp"

#include <algorithm>
#include <cmath>

#include <torch/torch.h>

#include "facecycle/error.hpp"
#include "facecycle/hashing.hpp"

namespace facecycle {

namespace nn = torch::nn;

std::string_view to_string(Norm norm) { return norm == Norm::instance ? "instance" : "none"; }

Norm parse_norm(std::string_view name) {
    if (name == "instance") return Norm::instance;
    if (name == "none") return Norm::none;
    throw Error("unknown norm '" + std::string(name) + "' (expected instance|none)");
}

std::string_view to_string(Backbone backbone) {
    return backbone == Backbone::desk_cnn ? "desk-scale-cnn" : "vgg16-style";
}

Backbone parse_backbone(std::string_view name) {
    if (name == "desk-scale-cnn") return Backbone::desk_cnn;
    if (name == "vgg16-style") return Backbone::vgg16;
    throw Error("unknown backbone '" + std::string(name) + "' (expected desk-scale-cnn|vgg16-style)");
}

GeneratorConfig GeneratorConfig::for_image_size(int image_size) {
    GeneratorConfig config;
    config.num_residual_blocks = image_size >= 256 ? 9 : 6;
    return config;
}

void GeneratorConfig::validate() const {
    if (input_channels < 1) throw ConfigError("generator.input_channels", "must be positive");
    if (base_filters < 1) throw ConfigError("generator.base_filters", "must be positive");
    if (num_residual_blocks < 1) throw ConfigError("generator.num_residual_blocks", "must be >= 1");
}

void DiscriminatorConfig::validate() const {
    if (input_channels < 1) throw ConfigError("discriminator.input_channels", "must be positive");
    if (base_filters < 1) throw ConfigError("discriminator.base_filters", "must be positive");
    if (num_downsampling_layers < 1)
        throw ConfigError("discriminator.num_downsampling_layers", "must be >= 1");
}

void RecognizerConfig::validate() const {
    if (embedding_dim < 1) throw ConfigError("recognizer.embedding_dim", "must be positive");
    if (num_identities < 1) throw ConfigError("recognizer.num_identities", "must be positive");
    if (input_size < 16) throw ConfigError("recognizer.input_size", "must be >= 16");
    if (base_filters < 1) throw ConfigError("recognizer.base_filters", "must be positive");
    if (hidden_dim < 1) throw ConfigError("recognizer.hidden_dim", "must be positive");
}

// ---------------------------------------------------------------------------
// Receptive-field arithmetic

std::vector<ConvLayerSpec> discriminator_layers(const DiscriminatorConfig& config) {
    std::vector<ConvLayerSpec> layers;
    for (int i = 0; i < config.num_downsampling_layers; ++i) layers.push_back({4, 2, 1});
    layers.push_back({4, 1, 1});
    layers.push_back({4, 1, 1});
    return layers;
}

std::int64_t conv_output_size(std::int64_t input, const ConvLayerSpec& layer) {
    return (input + 2 * layer.padding - layer.kernel) / layer.stride + 1;
}

std::int64_t patch_map_size(const DiscriminatorConfig& config, std::int64_t input) {
    for (const auto& layer : discriminator_layers(config)) {
        input = conv_output_size(input, layer);
        if (input < 1) throw ShapeError("input too small for the discriminator stack");
    }
    return input;
}

ReceptiveField receptive_field(std::span<const ConvLayerSpec> layers) {
    ReceptiveField rf{1, 1, 0};
    for (const auto& layer : layers) {
        rf.offset -= layer.padding * rf.jump;
        rf.size += (layer.kernel - 1) * rf.jump;
        rf.jump *= layer.stride;
    }
    return rf;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

void append_norm(nn::Sequential& seq, Norm norm, int channels) {
    if (norm == Norm::instance)
        seq->push_back(nn::InstanceNorm2d(
            nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false)));
}

class ResidualBlockImpl : public nn::Module {
public:
    ResidualBlockImpl(int channels, Norm norm) {
        nn::Sequential seq;
        seq->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions(1)));
        seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)));
        append_norm(seq, norm, channels);
        seq->push_back(nn::ReLU());
        seq->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions(1)));
        seq->push_back(nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)));
        append_norm(seq, norm, channels);
        body_ = register_module("body", seq);
    }
    torch::Tensor forward(torch::Tensor x) { return x + body_->forward(x); }

private:
    nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
    config_.validate();
    const int f = config_.base_filters;
    nn::Sequential seq;
    seq->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions(3)));
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(config_.input_channels, f, 7)));
    append_norm(seq, config_.norm, f);
    seq->push_back(nn::ReLU());
    for (int mult : {1, 2}) {
        seq->push_back(nn::Conv2d(nn::Conv2dOptions(f * mult, f * mult * 2, 3).stride(2).padding(1)));
        append_norm(seq, config_.norm, f * mult * 2);
        seq->push_back(nn::ReLU());
    }
    for (int i = 0; i < config_.num_residual_blocks; ++i)
        seq->push_back(ResidualBlock(f * 4, config_.norm));
    for (int mult : {4, 2}) {
        seq->push_back(nn::ConvTranspose2d(
            nn::ConvTranspose2dOptions(f * mult, f * mult / 2, 3).stride(2).padding(1).output_padding(1)));
        append_norm(seq, config_.norm, f * mult / 2);
        seq->push_back(nn::ReLU());
    }
    seq->push_back(nn::ReflectionPad2d(nn::ReflectionPad2dOptions(3)));
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(f, config_.input_channels, 7)));
    seq->push_back(nn::Tanh());
    model_ = register_module("model", seq);
}

torch::Tensor GeneratorImpl::forward(torch::Tensor x) {
    if (x.dim() != 4 || x.size(1) != config_.input_channels)
        throw ShapeError("generator expects Bx" + std::to_string(config_.input_channels) + "xHxW input");
    const auto h = x.size(2);
    const auto w = x.size(3);
    const auto pad_h = (4 - h % 4) % 4;
    const auto pad_w = (4 - w % 4) % 4;
    if (pad_h == 0 && pad_w == 0) return model_->forward(x);
    auto padded = torch::nn::functional::pad(
        x, torch::nn::functional::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReplicate));
    return model_->forward(padded).slice(2, 0, h).slice(3, 0, w);
}

// ---------------------------------------------------------------------------
// Discriminator

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
    config_.validate();
    const auto layers = discriminator_layers(config_);
    nn::Sequential seq;
    int in = config_.input_channels;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        const int mult = std::min(1 << i, 8);
        const int out = config_.base_filters * mult;
        const auto& l = layers[i];
        seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, l.kernel).stride(l.stride).padding(l.padding)));
        if (i > 0) append_norm(seq, config_.norm, out);
        seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
        in = out;
    }
    const auto& last = layers.back();
    seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, last.kernel).stride(last.stride).padding(last.padding)));
    model_ = register_module("model", seq);
}

torch::Tensor DiscriminatorImpl::forward(torch::Tensor x) {
    if (x.dim() != 4 || x.size(1) != config_.input_channels)
        throw ShapeError("discriminator expects Bx" + std::to_string(config_.input_channels) + "xHxW input");
    return model_->forward(x);
}

// ---------------------------------------------------------------------------
// Recognizer

RecognizerImpl::RecognizerImpl(RecognizerConfig config) : config_(config) {
    config_.validate();
    nn::Sequential trunk;
    const int f = config_.base_filters;
    int in = 3;
    auto conv = [&](int out) {
        trunk->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
        trunk->push_back(nn::ReLU());
        in = out;
    };
    auto pool = [&] { trunk->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2))); };

    int pooled_side = 0;
    if (config_.backbone == Backbone::desk_cnn) {
        conv(f); pool();
        conv(2 * f); pool();
        conv(4 * f); pool();
        conv(4 * f);
        pooled_side = 4;
    } else {
        // VGG-16 conv configuration with widths scaled by base_filters / 64.
        const int stages[5][2] = {{1, 2}, {2, 2}, {4, 3}, {8, 3}, {8, 3}};
        for (const auto& [mult, reps] : stages) {
            for (int r = 0; r < reps; ++r) conv(f * mult);
            pool();
        }
        pooled_side = 2;
    }
    trunk->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions({pooled_side, pooled_side})));
    trunk_ = register_module("trunk", trunk);
    fc6_ = register_module("fc6", nn::Linear(in * pooled_side * pooled_side, config_.hidden_dim));
    fc7_ = register_module("fc7", nn::Linear(config_.hidden_dim, config_.embedding_dim));
    fc8_ = register_module("fc8", nn::Linear(config_.embedding_dim, config_.num_identities));
}

torch::Tensor RecognizerImpl::fc7(torch::Tensor x) {
    if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("recognizer expects Bx3xHxW input");
    if (x.size(2) != config_.input_size || x.size(3) != config_.input_size)
        x = torch::nn::functional::interpolate(
            x, torch::nn::functional::InterpolateFuncOptions()
                   .size(std::vector<std::int64_t>{config_.input_size, config_.input_size})
                   .mode(torch::kBilinear)
                   .align_corners(false));
    auto h = trunk_->forward(x).flatten(1);
    h = torch::relu(fc6_->forward(h));
    return fc7_->forward(h);
}

torch::Tensor RecognizerImpl::embed(torch::Tensor x) {
    auto e = fc7(std::move(x));
    if (config_.normalize_embedding)
        e = torch::nn::functional::normalize(e, torch::nn::functional::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
    return e;
}

torch::Tensor RecognizerImpl::classify(torch::Tensor x) { return fc8_->forward(torch::relu(fc7(std::move(x)))); }

// ---------------------------------------------------------------------------
// Parameters

std::int64_t count_parameters(const torch::nn::Module& net) {
    std::int64_t total = 0;
    for (const auto& p : net.parameters()) total += p.numel();
    return total;
}

void init_parameters(torch::nn::Module& net, std::uint64_t seed, InitScheme scheme) {
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    for (auto& item : net.named_parameters()) {
        auto& p = item.value();
        const bool is_bias = item.key().size() >= 4 && item.key().compare(item.key().size() - 4, 4, "bias") == 0;
        if (is_bias || p.dim() < 2) {
            p.zero_();
            continue;
        }
        double stddev = 0.02;
        if (scheme == InitScheme::he_normal) {
            // numel / size(0) is in*k*k for conv weights and in for linear weights.
            const auto fan_in = p.numel() / p.size(0);
            stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        }
        auto draws = torch::empty(p.sizes(), torch::TensorOptions().dtype(torch::kFloat64));
        draws.normal_(0.0, stddev, gen);
        p.copy_(draws);
    }
}

Generator build_generator(const GeneratorConfig& config, std::uint64_t seed) {
    Generator g(config);
    init_parameters(*g, seed);
    return g;
}

Discriminator build_discriminator(const DiscriminatorConfig& config, std::uint64_t seed) {
    Discriminator d(config);
    init_parameters(*d, seed);
    return d;
}

Recognizer build_recognizer(const RecognizerConfig& config, std::uint64_t seed) {
    Recognizer r(config);
    init_parameters(*r, seed, InitScheme::he_normal);
    return r;
}

std::vector<torch::Tensor> parameter_list(const torch::nn::Module& net) { return net.parameters(); }

std::string parameter_hash(const torch::nn::Module& net) { return hash_tensors(net.parameters()); }

void set_requires_grad(torch::nn::Module& net, bool flag) {
    for (auto& p : net.parameters()) p.set_requires_grad(flag);
}

}  // namespace facecycle
