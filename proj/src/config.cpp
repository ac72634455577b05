#include "facecycle/config.hpp"

#include <algorithm>
#include <cmath>

#include "facecycle/error.hpp"

namespace facecycle {

using nlohmann::json;

FieldReader::FieldReader(const json& object, std::string prefix, std::initializer_list<const char*> known)
    : object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected an object");
    for (const auto& item : object_.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }))
            throw ConfigError(key(item.key()), "unknown key");
}

void FieldReader::read(const char* name, int& out) const {
    if (!has(name)) return;
    const auto& v = object_.at(name);
    if (!v.is_number_integer()) throw ConfigError(key(name), "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError(key(name), "out of range");
    out = static_cast<int>(x);
}

void FieldReader::read(const char* name, double& out) const {
    if (!has(name)) return;
    const auto& v = object_.at(name);
    if (!v.is_number()) throw ConfigError(key(name), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) throw ConfigError(key(name), "must be finite");
}

void FieldReader::read(const char* name, bool& out) const {
    if (!has(name)) return;
    const auto& v = object_.at(name);
    if (!v.is_boolean()) throw ConfigError(key(name), "expected true or false");
    out = v.get<bool>();
}

void FieldReader::read(const char* name, std::string& out) const {
    if (!has(name)) return;
    const auto& v = object_.at(name);
    if (!v.is_string()) throw ConfigError(key(name), "expected a string");
    out = v.get<std::string>();
}

void FieldReader::read(const char* name, std::uint64_t& out) const {
    if (!has(name)) return;
    const auto& v = object_.at(name);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(key(name), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
}

// ---------------------------------------------------------------------------

json to_json(const GeneratorConfig& c) {
    return {{"input_channels", c.input_channels},
            {"base_filters", c.base_filters},
            {"num_residual_blocks", c.num_residual_blocks},
            {"norm", to_string(c.norm)}};
}

json to_json(const DiscriminatorConfig& c) {
    return {{"input_channels", c.input_channels},
            {"base_filters", c.base_filters},
            {"num_downsampling_layers", c.num_downsampling_layers},
            {"norm", to_string(c.norm)}};
}

json to_json(const PreprocessConfig& c) {
    return {{"target_size", c.target_size}, {"flip_probability", c.flip_probability}};
}

json to_json(const LossWeights& c) {
    return {{"lambda_cyc", c.lambda_cyc}, {"lambda_ip", c.lambda_ip}, {"lambda_im", c.lambda_im}};
}

json to_json(const TripletConfig& c) { return {{"margin_alpha", c.margin_alpha}, {"hard_k", c.hard_k}}; }

json to_json(const TrainConfig& c) {
    return {{"total_epochs", c.total_epochs},
            {"constant_lr_epochs", c.constant_lr_epochs},
            {"base_lr", c.base_lr},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"batch_size", c.batch_size},
            {"buffer_capacity", c.buffer_capacity},
            {"seed", c.seed},
            {"loss_weights", to_json(c.loss_weights)},
            {"adversarial_mode", to_string(c.adversarial_mode)},
            {"identity_mapping", to_string(c.identity_mapping)},
            {"generator", to_json(c.generator)},
            {"discriminator", to_json(c.discriminator)},
            {"preprocess", to_json(c.preprocess)}};
}

json to_json(const RecognizerConfig& c) {
    return {{"embedding_dim", c.embedding_dim},
            {"backbone", to_string(c.backbone)},
            {"num_identities", c.num_identities},
            {"input_size", c.input_size},
            {"base_filters", c.base_filters},
            {"hidden_dim", c.hidden_dim},
            {"normalize_embedding", c.normalize_embedding}};
}

json to_json(const FineTuneConfig& c) {
    return {{"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"lr_policy",
             {{"base_lr", c.lr_policy.base_lr}, {"stepsize", c.lr_policy.stepsize}, {"gamma", c.lr_policy.gamma}}},
            {"iterations", c.iterations},
            {"sketch_iterations", c.sketch_iterations},
            {"triplet", to_json(c.triplet)},
            {"stage", to_string(c.stage)},
            {"identities_per_batch", c.identities_per_batch}};
}

json to_json(const QualityConfig& c) {
    return {{"ssim_window", c.ssim_window},     {"ssim_sigma", c.ssim_sigma},
            {"ssim_k1", c.ssim_k1},             {"ssim_k2", c.ssim_k2},
            {"fsim_scales", c.fsim_scales},     {"fsim_orientations", c.fsim_orientations},
            {"dynamic_range", c.dynamic_range}};
}

// ---------------------------------------------------------------------------

namespace {

GeneratorConfig generator_from_json(const json& j, GeneratorConfig c, const std::string& prefix) {
    FieldReader r(j, prefix, {"input_channels", "base_filters", "num_residual_blocks", "norm"});
    r.read("input_channels", c.input_channels);
    r.read("base_filters", c.base_filters);
    r.read("num_residual_blocks", c.num_residual_blocks);
    r.read_enum("norm", c.norm, parse_norm);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

DiscriminatorConfig discriminator_from_json(const json& j, DiscriminatorConfig c, const std::string& prefix) {
    FieldReader r(j, prefix, {"input_channels", "base_filters", "num_downsampling_layers", "norm"});
    r.read("input_channels", c.input_channels);
    r.read("base_filters", c.base_filters);
    r.read("num_downsampling_layers", c.num_downsampling_layers);
    r.read_enum("norm", c.norm, parse_norm);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

PreprocessConfig preprocess_from_json(const json& j, PreprocessConfig c, const std::string& prefix) {
    FieldReader r(j, prefix, {"target_size", "flip_probability"});
    r.read("target_size", c.target_size);
    r.read("flip_probability", c.flip_probability);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

LossWeights loss_weights_from_json(const json& j, LossWeights c, const std::string& prefix) {
    FieldReader r(j, prefix, {"lambda_cyc", "lambda_ip", "lambda_im"});
    r.read("lambda_cyc", c.lambda_cyc);
    r.read("lambda_ip", c.lambda_ip);
    r.read("lambda_im", c.lambda_im);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

TripletConfig triplet_from_json(const json& j, TripletConfig c, const std::string& prefix) {
    FieldReader r(j, prefix, {"margin_alpha", "hard_k"});
    r.read("margin_alpha", c.margin_alpha);
    r.read("hard_k", c.hard_k);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

}  // namespace

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults, const std::string& prefix) {
    TrainConfig c = defaults;
    FieldReader r(j, prefix,
                  {"total_epochs", "constant_lr_epochs", "base_lr", "adam_beta1", "adam_beta2", "batch_size",
                   "buffer_capacity", "seed", "loss_weights", "adversarial_mode", "identity_mapping", "generator",
                   "discriminator", "preprocess"});
    r.read("total_epochs", c.total_epochs);
    r.read("constant_lr_epochs", c.constant_lr_epochs);
    r.read("base_lr", c.base_lr);
    r.read("adam_beta1", c.adam_beta1);
    r.read("adam_beta2", c.adam_beta2);
    r.read("batch_size", c.batch_size);
    r.read("buffer_capacity", c.buffer_capacity);
    r.read("seed", c.seed);
    r.read_enum("adversarial_mode", c.adversarial_mode, parse_adversarial_mode);
    r.read_enum("identity_mapping", c.identity_mapping, parse_identity_mapping_mode);
    if (r.has("loss_weights"))
        c.loss_weights = loss_weights_from_json(r.raw("loss_weights"), c.loss_weights, r.key("loss_weights"));
    if (r.has("preprocess"))
        c.preprocess = preprocess_from_json(r.raw("preprocess"), c.preprocess, r.key("preprocess"));
    // Without an explicit generator section the depth follows the image size.
    if (r.has("generator"))
        c.generator = generator_from_json(r.raw("generator"), c.generator, r.key("generator"));
    else if (r.has("preprocess"))
        c.generator.num_residual_blocks = GeneratorConfig::for_image_size(c.preprocess.target_size).num_residual_blocks;
    if (r.has("discriminator"))
        c.discriminator = discriminator_from_json(r.raw("discriminator"), c.discriminator, r.key("discriminator"));
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

RecognizerConfig recognizer_config_from_json(const json& j, const RecognizerConfig& defaults,
                                             const std::string& prefix) {
    RecognizerConfig c = defaults;
    FieldReader r(j, prefix,
                  {"embedding_dim", "backbone", "num_identities", "input_size", "base_filters", "hidden_dim",
                   "normalize_embedding"});
    r.read("embedding_dim", c.embedding_dim);
    r.read_enum("backbone", c.backbone, parse_backbone);
    r.read("num_identities", c.num_identities);
    r.read("input_size", c.input_size);
    r.read("base_filters", c.base_filters);
    r.read("hidden_dim", c.hidden_dim);
    r.read("normalize_embedding", c.normalize_embedding);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

FineTuneConfig fine_tune_config_from_json(const json& j, const FineTuneConfig& defaults, const std::string& prefix) {
    FineTuneConfig c = defaults;
    FieldReader r(j, prefix,
                  {"momentum", "weight_decay", "lr_policy", "iterations", "sketch_iterations", "triplet", "stage",
                   "identities_per_batch"});
    r.read("momentum", c.momentum);
    r.read("weight_decay", c.weight_decay);
    if (r.has("lr_policy")) {
        FieldReader lr(r.raw("lr_policy"), r.key("lr_policy"), {"base_lr", "stepsize", "gamma"});
        lr.read("base_lr", c.lr_policy.base_lr);
        lr.read("stepsize", c.lr_policy.stepsize);
        lr.read("gamma", c.lr_policy.gamma);
    }
    r.read("iterations", c.iterations);
    r.read("sketch_iterations", c.sketch_iterations);
    if (r.has("triplet")) c.triplet = triplet_from_json(r.raw("triplet"), c.triplet, r.key("triplet"));
    r.read_enum("stage", c.stage, parse_fine_tune_stage);
    r.read("identities_per_batch", c.identities_per_batch);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

QualityConfig quality_config_from_json(const json& j, const QualityConfig& defaults, const std::string& prefix) {
    QualityConfig c = defaults;
    FieldReader r(j, prefix,
                  {"ssim_window", "ssim_sigma", "ssim_k1", "ssim_k2", "fsim_scales", "fsim_orientations",
                   "dynamic_range"});
    r.read("ssim_window", c.ssim_window);
    r.read("ssim_sigma", c.ssim_sigma);
    r.read("ssim_k1", c.ssim_k1);
    r.read("ssim_k2", c.ssim_k2);
    r.read("fsim_scales", c.fsim_scales);
    r.read("fsim_orientations", c.fsim_orientations);
    r.read("dynamic_range", c.dynamic_range);
    validate_under(prefix, [&] { c.validate(); });
    return c;
}

}  // namespace facecycle
