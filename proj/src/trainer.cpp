#include "facecycle/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <torch/torch.h>

#include "facecycle/checkpoint.hpp"
#include "facecycle/config.hpp"
#include "facecycle/error.hpp"
#include "facecycle/hashing.hpp"
#include "facecycle/log.hpp"

namespace facecycle {

void TrainConfig::validate() const {
    if (total_epochs < 1) throw ConfigError("train.total_epochs", "must be >= 1");
    if (constant_lr_epochs < 0 || constant_lr_epochs > total_epochs)
        throw ConfigError("train.constant_lr_epochs", "must lie in [0, total_epochs]");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("train.base_lr", "must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2", "must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
    if (buffer_capacity < 0) throw ConfigError("train.buffer_capacity", "must be >= 0");
    loss_weights.validate();
    generator.validate();
    discriminator.validate();
    preprocess.validate();
}

double lr_at_epoch(int epoch, const TrainConfig& config) {
    if (epoch < 0 || epoch >= config.total_epochs)
        throw Error("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                    std::to_string(config.total_epochs) + ")");
    if (epoch < config.constant_lr_epochs) return config.base_lr;
    const double decay_span = config.total_epochs - config.constant_lr_epochs;
    return config.base_lr * static_cast<double>(config.total_epochs - epoch) / decay_span;
}

// ---------------------------------------------------------------------------
// Image buffer

ImageBuffer::ImageBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity_ < 0) throw ConfigError("train.buffer_capacity", "must be >= 0");
}

torch::Tensor ImageBuffer::query(const torch::Tensor& fresh) {
    if (capacity_ == 0) return fresh;
    auto detached = fresh.detach();
    if (stored_.size() < static_cast<std::size_t>(capacity_)) {
        stored_.push_back(detached.clone());
        return detached;
    }
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < 0.5) {
        const auto i = std::uniform_int_distribution<std::size_t>(0, stored_.size() - 1)(rng_);
        auto previous = stored_[i];
        stored_[i] = detached.clone();
        return previous;
    }
    return detached;
}

torch::Tensor ImageBuffer::query_batch(const torch::Tensor& fresh) {
    if (capacity_ == 0) return fresh.detach();
    std::vector<torch::Tensor> out;
    out.reserve(static_cast<std::size_t>(fresh.size(0)));
    for (std::int64_t i = 0; i < fresh.size(0); ++i) out.push_back(query(fresh[i]));
    return torch::stack(out);
}

std::string ImageBuffer::rng_state() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
}

void ImageBuffer::set_rng_state(const std::string& state) {
    std::istringstream is(state);
    is >> rng_;
    if (!is) throw CheckpointError("invalid image buffer rng state");
}

// ---------------------------------------------------------------------------
// Train state

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

std::vector<torch::Tensor> joined(const torch::nn::Module& a, const torch::nn::Module& b) {
    auto params = a.parameters();
    for (auto& p : b.parameters()) params.push_back(p);
    return params;
}

AdamOptions adam_options(const TrainConfig& c, double lr) { return {lr, c.adam_beta1, c.adam_beta2, 1e-8}; }

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config((cfg.validate(), cfg)),
      g_x(build_generator(config.generator, derive_seed(config.seed, 0))),
      g_y(build_generator(config.generator, derive_seed(config.seed, 1))),
      d_x(build_discriminator(config.discriminator, derive_seed(config.seed, 2))),
      d_y(build_discriminator(config.discriminator, derive_seed(config.seed, 3))),
      opt_g(joined(*g_x, *g_y), adam_options(config, config.base_lr)),
      opt_d_x(d_x->parameters(), adam_options(config, config.base_lr)),
      opt_d_y(d_y->parameters(), adam_options(config, config.base_lr)),
      buffer_x(config.buffer_capacity, derive_seed(config.seed, 4)),
      buffer_y(config.buffer_capacity, derive_seed(config.seed, 5)),
      augment_rng(derive_seed(config.seed, 6)) {}

void TrainState::set_lr(double lr) {
    opt_g.set_lr(lr);
    opt_d_x.set_lr(lr);
    opt_d_y.set_lr(lr);
}

std::string TrainState::generator_hash() const { return hash_tensors(joined(*g_x, *g_y)); }
std::string TrainState::discriminator_hash() const { return hash_tensors(joined(*d_x, *d_y)); }

nlohmann::json StepLosses::to_json() const {
    return {{"step", step}, {"epoch", epoch}, {"lr", lr},   {"gan_x", gan_x}, {"gan_y", gan_y},
            {"cyc", cyc},   {"ip", ip},       {"im", im},   {"total", total}, {"d_x", d_x},
            {"d_y", d_y}};
}

// ---------------------------------------------------------------------------
// Train step

namespace {

template <bool kIdentityPerception>
StepLosses step_impl(TrainState& s, const PairBatch& batch, Recognizer* phi_photo,
                     Recognizer* phi_sketch, const StepObserver& observer) {
    const auto& cfg = s.config;
    const auto& x = batch.photos;
    const auto& y = batch.sketches;

    set_requires_grad(*s.d_x, false);
    set_requires_grad(*s.d_y, false);

    auto fake_y = s.g_x->forward(x);
    auto fake_x = s.g_y->forward(y);
    auto cyc_x = s.g_y->forward(fake_y);
    auto cyc_y = s.g_x->forward(fake_x);

    GeneratorLossParts parts;
    parts.gan_x = adversarial_loss_generator(s.d_y->forward(fake_y), cfg.adversarial_mode);
    parts.gan_y = adversarial_loss_generator(s.d_x->forward(fake_x), cfg.adversarial_mode);
    parts.cyc = cycle_loss(x, cyc_x, y, cyc_y);
    if (cfg.identity_mapping == IdentityMappingMode::literal)
        parts.im = identity_mapping_loss(s.g_x->forward(x), x, s.g_y->forward(y), y);
    else
        parts.im = identity_mapping_loss(s.g_x->forward(y), y, s.g_y->forward(x), x);

    if constexpr (kIdentityPerception) {
        if (phi_photo && phi_sketch) {
            parts.ip = identity_perception_loss(fake_x, x, fake_y, y, *phi_photo, *phi_sketch);
        } else if (cfg.loss_weights.lambda_ip > 0.0) {
            throw Error("train_step: lambda_ip > 0 requires photo and sketch recognizers");
        } else {
            parts.ip = torch::zeros({}, x.options());
        }
    } else {
        parts.ip = torch::zeros({}, x.options());
    }

    auto total = total_generator_loss(parts, cfg.loss_weights);
    s.opt_g.zero_grad();
    total.backward();
    s.opt_g.step();
    if (observer) observer("generators");

    set_requires_grad(*s.d_x, true);
    set_requires_grad(*s.d_y, true);

    auto pooled_y = s.buffer_y.query_batch(fake_y.detach());
    auto loss_d_y = adversarial_loss_discriminator(s.d_y->forward(y), s.d_y->forward(pooled_y),
                                                   cfg.adversarial_mode);
    require_finite(loss_d_y, "discriminator_y");
    s.opt_d_y.zero_grad();
    loss_d_y.backward();
    s.opt_d_y.step();
    if (observer) observer("d_y");

    auto pooled_x = s.buffer_x.query_batch(fake_x.detach());
    auto loss_d_x = adversarial_loss_discriminator(s.d_x->forward(x), s.d_x->forward(pooled_x),
                                                   cfg.adversarial_mode);
    require_finite(loss_d_x, "discriminator_x");
    s.opt_d_x.zero_grad();
    loss_d_x.backward();
    s.opt_d_x.step();
    if (observer) observer("d_x");

    StepLosses out;
    out.step = s.step;
    out.epoch = s.epoch;
    out.lr = s.opt_g.lr();
    out.gan_x = parts.gan_x.item<double>();
    out.gan_y = parts.gan_y.item<double>();
    out.cyc = parts.cyc.item<double>();
    out.ip = parts.ip.item<double>();
    out.im = parts.im.item<double>();
    out.total = total.item<double>();
    out.d_x = loss_d_x.item<double>();
    out.d_y = loss_d_y.item<double>();
    ++s.step;
    return out;
}

}  // namespace

StepLosses train_step(TrainState& state, const PairBatch& batch, Recognizer* phi_photo,
                      Recognizer* phi_sketch, const StepObserver& observer) {
    return step_impl<true>(state, batch, phi_photo, phi_sketch, observer);
}

StepLosses train_step_baseline(TrainState& state, const PairBatch& batch, const StepObserver& observer) {
    return step_impl<false>(state, batch, nullptr, nullptr, observer);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Keeps only log records up to `step` so a resumed run appends seamlessly.
void truncate_log(const std::filesystem::path& path, std::int64_t step) {
    if (!std::filesystem::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> kept;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            if (nlohmann::json::parse(line).at("step").get<std::int64_t>() < step) kept.push_back(line);
        } catch (const nlohmann::json::exception&) {
            break;
        }
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : kept) out << l << '\n';
}

}  // namespace

bool train_epochs(TrainState& state, const PairDataset& data, Recognizer* phi_photo,
                  Recognizer* phi_sketch, const TrainOptions& options) {
    const bool with_ip = phi_photo && phi_sketch;
    if (!with_ip && state.config.loss_weights.lambda_ip > 0.0)
        throw ConfigError("train.loss_weights.lambda_ip", "is > 0 but no recognizers were supplied");
    if (data.size() == 0) throw Error("train: training split is empty");

    std::ofstream log_out;
    if (options.log_path) {
        truncate_log(*options.log_path, state.step);
        log_out.open(*options.log_path, std::ios::app);
        if (!log_out) throw Error("cannot open training log " + options.log_path->string());
    }
    BatchIterator batches(data.size(), static_cast<std::size_t>(state.config.batch_size), true,
                          state.config.seed);
    while (state.epoch < state.config.total_epochs) {
        state.set_lr(lr_at_epoch(static_cast<int>(state.epoch), state.config));
        for (const auto& indices : batches.epoch(state.epoch)) {
            auto batch = data.collate(indices, true, state.augment_rng);
            const auto losses = with_ip ? train_step(state, batch, phi_photo, phi_sketch)
                                        : train_step_baseline(state, batch);
            if (log_out) log_out << losses.to_json().dump() << '\n';
            if (options.on_step) options.on_step(losses);
        }
        ++state.epoch;
        log_out.flush();
        if (options.checkpoint_path) save_checkpoint(state, *options.checkpoint_path);
        log::debug("epoch ", state.epoch, "/", state.config.total_epochs, " done (step ", state.step, ")");
        if (state.epoch < state.config.total_epochs && options.continue_after_epoch &&
            !options.continue_after_epoch(state.epoch))
            return false;
    }
    return true;
}

TrainState train(const Manifest& manifest, const TrainConfig& config, Recognizer* phi_photo,
                 Recognizer* phi_sketch, const TrainOptions& options) {
    PairDataset data(manifest, Split::train, config.preprocess);
    if (options.checkpoint_path && std::filesystem::exists(*options.checkpoint_path)) {
        auto state = load_checkpoint(*options.checkpoint_path);
        if (to_json(state.config) != to_json(config))
            throw CheckpointError("resume checkpoint " + options.checkpoint_path->string() +
                                  " was written with a different training config");
        log::info("resuming synthesis training at epoch ", state.epoch);
        train_epochs(state, data, phi_photo, phi_sketch, options);
        return state;
    }
    TrainState state(config);
    train_epochs(state, data, phi_photo, phi_sketch, options);
    return state;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void add_module(CheckpointData& data, const std::string& prefix, const torch::nn::Module& net) {
    for (const auto& item : net.named_parameters()) data.add(prefix + "." + item.key(), item.value());
}

void load_module(const CheckpointData& data, const std::string& prefix, torch::nn::Module& net) {
    torch::NoGradGuard no_grad;
    for (auto& item : net.named_parameters()) {
        const auto& src = data.tensor(prefix + "." + item.key());
        if (src.sizes() != item.value().sizes())
            throw CheckpointError("shape mismatch for " + prefix + "." + item.key());
        item.value().copy_(src);
    }
}

void add_adam(CheckpointData& data, const std::string& prefix, const Adam& opt) {
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        data.add(prefix + ".m." + std::to_string(i), opt.first_moments()[i]);
        data.add(prefix + ".v." + std::to_string(i), opt.second_moments()[i]);
    }
}

void load_adam(const CheckpointData& data, const std::string& prefix, Adam& opt) {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
        opt.first_moments()[i].copy_(data.tensor(prefix + ".m." + std::to_string(i)));
        opt.second_moments()[i].copy_(data.tensor(prefix + ".v." + std::to_string(i)));
    }
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    CheckpointData data;
    data.kind = "synthesizer";
    data.meta = {{"config", to_json(state.config)},
                 {"epoch", state.epoch},
                 {"step", state.step},
                 {"lr", state.opt_g.lr()},
                 {"optimizer_steps", {state.opt_g.steps(), state.opt_d_x.steps(), state.opt_d_y.steps()}},
                 {"rng", {{"augment", rng_text(state.augment_rng)},
                          {"buffer_x", state.buffer_x.rng_state()},
                          {"buffer_y", state.buffer_y.rng_state()}}},
                 {"buffer_sizes", {state.buffer_x.size(), state.buffer_y.size()}},
                 {"provenance", state.provenance}};
    add_module(data, "g_x", *state.g_x);
    add_module(data, "g_y", *state.g_y);
    add_module(data, "d_x", *state.d_x);
    add_module(data, "d_y", *state.d_y);
    add_adam(data, "opt_g", state.opt_g);
    add_adam(data, "opt_d_x", state.opt_d_x);
    add_adam(data, "opt_d_y", state.opt_d_y);
    for (std::size_t i = 0; i < state.buffer_x.size(); ++i)
        data.add("buffer_x." + std::to_string(i), state.buffer_x.stored()[i]);
    for (std::size_t i = 0; i < state.buffer_y.size(); ++i)
        data.add("buffer_y." + std::to_string(i), state.buffer_y.stored()[i]);
    write_checkpoint(path, data);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    const auto data = read_checkpoint(path);
    if (data.kind != "synthesizer")
        throw CheckpointError(path.string() + " holds a '" + data.kind + "' checkpoint, not a synthesizer");
    try {
        const auto& meta = data.meta;
        TrainState state(train_config_from_json(meta.at("config")));
        load_module(data, "g_x", *state.g_x);
        load_module(data, "g_y", *state.g_y);
        load_module(data, "d_x", *state.d_x);
        load_module(data, "d_y", *state.d_y);
        load_adam(data, "opt_g", state.opt_g);
        load_adam(data, "opt_d_x", state.opt_d_x);
        load_adam(data, "opt_d_y", state.opt_d_y);
        const auto steps = meta.at("optimizer_steps");
        state.opt_g.set_steps(steps.at(0).get<std::int64_t>());
        state.opt_d_x.set_steps(steps.at(1).get<std::int64_t>());
        state.opt_d_y.set_steps(steps.at(2).get<std::int64_t>());
        state.set_lr(meta.at("lr").get<double>());
        state.epoch = meta.at("epoch").get<std::int64_t>();
        state.step = meta.at("step").get<std::int64_t>();
        {
            std::istringstream is(meta.at("rng").at("augment").get<std::string>());
            is >> state.augment_rng;
            if (!is) throw CheckpointError("invalid augmentation rng state");
        }
        state.buffer_x.set_rng_state(meta.at("rng").at("buffer_x").get<std::string>());
        state.buffer_y.set_rng_state(meta.at("rng").at("buffer_y").get<std::string>());
        const auto sizes = meta.at("buffer_sizes");
        for (std::size_t i = 0; i < sizes.at(0).get<std::size_t>(); ++i)
            state.buffer_x.stored().push_back(data.tensor("buffer_x." + std::to_string(i)).clone());
        for (std::size_t i = 0; i < sizes.at(1).get<std::size_t>(); ++i)
            state.buffer_y.stored().push_back(data.tensor("buffer_y." + std::to_string(i)).clone());
        state.provenance = meta.value("provenance", nlohmann::json::object());
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("synthesizer checkpoint metadata malformed (" + path.string() + "): " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Synthesis

std::string_view to_string(Direction direction) {
    switch (direction) {
        case Direction::p2s: return "P2S";
        case Direction::s2p: return "S2P";
        case Direction::both: return "both";
    }
    return "";
}

Direction parse_direction(std::string_view name) {
    if (name == "P2S" || name == "p2s") return Direction::p2s;
    if (name == "S2P" || name == "s2p") return Direction::s2p;
    if (name == "both") return Direction::both;
    throw Error("unknown direction '" + std::string(name) + "' (expected P2S|S2P|both)");
}

Manifest synthesize_dataset(TrainState& state, const Manifest& manifest, Direction direction,
                            const std::filesystem::path& out_dir) {
    try {
        std::filesystem::create_directories(out_dir);
    } catch (const std::filesystem::filesystem_error& e) {
        throw Error("cannot create output directory " + out_dir.string() + ": " + e.what());
    }
    torch::NoGradGuard no_grad;
    Manifest out;
    std::mt19937_64 unused_rng(0);
    for (const auto& entry : manifest.entries) {
        ManifestEntry generated = entry;
        generated.fake_photo.reset();
        generated.fake_sketch.reset();
        if (direction != Direction::s2p) {
            auto photo = preprocess(read_image(entry.photo), state.config.preprocess, false, unused_rng);
            auto fake = state.g_x->forward(photo.unsqueeze(0)).squeeze(0);
            generated.fake_sketch = out_dir / (entry.id + "_fake_sketch.png");
            write_png(to_raw_image(fake), *generated.fake_sketch);
        }
        if (direction != Direction::p2s) {
            auto sketch = preprocess(read_image(entry.sketch), state.config.preprocess, false, unused_rng);
            auto fake = state.g_y->forward(sketch.unsqueeze(0)).squeeze(0);
            generated.fake_photo = out_dir / (entry.id + "_fake_photo.png");
            write_png(to_raw_image(fake), *generated.fake_photo);
        }
        out.entries.push_back(std::move(generated));
    }
    save_manifest(out, out_dir / "manifest.jsonl");
    return out;
}

}  // namespace facecycle
