#include "facecycle/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <torch/torch.h>

#include "facecycle/error.hpp"

namespace facecycle {

namespace F = torch::nn::functional;

std::string_view to_string(AdversarialMode mode) {
    return mode == AdversarialMode::least_squares ? "least-squares" : "log";
}

AdversarialMode parse_adversarial_mode(std::string_view name) {
    if (name == "least-squares" || name == "lsgan") return AdversarialMode::least_squares;
    if (name == "log") return AdversarialMode::log;
    throw Error("unknown adversarial mode '" + std::string(name) + "' (expected least-squares|log)");
}

std::string_view to_string(IdentityMappingMode mode) {
    return mode == IdentityMappingMode::literal ? "literal" : "target-domain";
}

IdentityMappingMode parse_identity_mapping_mode(std::string_view name) {
    if (name == "literal") return IdentityMappingMode::literal;
    if (name == "target-domain") return IdentityMappingMode::target_domain;
    throw Error("unknown identity mapping mode '" + std::string(name) + "' (expected literal|target-domain)");
}

void LossWeights::validate() const {
    auto check = [](double v, const char* key) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError(key, "must be finite and >= 0");
    };
    check(lambda_cyc, "loss_weights.lambda_cyc");
    check(lambda_ip, "loss_weights.lambda_ip");
    check(lambda_im, "loss_weights.lambda_im");
}

void TripletConfig::validate() const {
    if (!(margin_alpha > 0.0) || !std::isfinite(margin_alpha))
        throw ConfigError("triplet.margin_alpha", "must be finite and > 0");
    if (hard_k < 1) throw ConfigError("triplet.hard_k", "must be >= 1");
}

void require_finite(const torch::Tensor& t, std::string_view term) {
    if (!torch::isfinite(t.detach()).all().item<bool>()) throw NonFiniteError(std::string(term));
}

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes())
        throw ShapeError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                         c10::str(b.sizes()));
}

}  // namespace

torch::Tensor adversarial_loss_discriminator(const torch::Tensor& scores_real,
                                             const torch::Tensor& scores_fake,
                                             AdversarialMode mode) {
    require_finite(scores_real, "adversarial.real_scores");
    require_finite(scores_fake, "adversarial.fake_scores");
    if (mode == AdversarialMode::log) {
        // -log sigmoid(s) = softplus(-s); -log(1 - sigmoid(s)) = softplus(s).
        return F::softplus(-scores_real).mean() + F::softplus(scores_fake).mean();
    }
    return 0.5 * ((scores_real - 1.0).pow(2).mean() + scores_fake.pow(2).mean());
}

torch::Tensor adversarial_loss_generator(const torch::Tensor& scores_fake, AdversarialMode mode) {
    require_finite(scores_fake, "adversarial.fake_scores");
    if (mode == AdversarialMode::log) return F::softplus(-scores_fake).mean();
    return (scores_fake - 1.0).pow(2).mean();
}

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& cyc_x, const torch::Tensor& y,
                         const torch::Tensor& cyc_y) {
    require_same_shape(x, cyc_x, "cycle_loss(x)");
    require_same_shape(y, cyc_y, "cycle_loss(y)");
    return (cyc_x - x).abs().mean() + (cyc_y - y).abs().mean();
}

torch::Tensor embedding_distance_loss(const torch::Tensor& fake_photo_emb,
                                      const torch::Tensor& real_photo_emb,
                                      const torch::Tensor& fake_sketch_emb,
                                      const torch::Tensor& real_sketch_emb) {
    require_same_shape(fake_photo_emb, real_photo_emb, "identity_perception(photo)");
    require_same_shape(fake_sketch_emb, real_sketch_emb, "identity_perception(sketch)");
    auto side = [](const torch::Tensor& a, const torch::Tensor& b) {
        auto d = (a - b).pow(2);
        return d.dim() == 1 ? d.sum() : d.flatten(1).sum(1).mean();
    };
    return side(fake_photo_emb, real_photo_emb) + side(fake_sketch_emb, real_sketch_emb);
}

namespace {

// Disables parameter gradients for the guard's lifetime.
class FrozenParameters {
public:
    explicit FrozenParameters(torch::nn::Module& net) : params_(net.parameters()) {
        for (auto& p : params_) {
            previous_.push_back(p.requires_grad());
            p.set_requires_grad(false);
        }
    }
    ~FrozenParameters() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
    }
    FrozenParameters(const FrozenParameters&) = delete;
    FrozenParameters& operator=(const FrozenParameters&) = delete;

private:
    std::vector<torch::Tensor> params_;
    std::vector<bool> previous_;
};

}  // namespace

torch::Tensor identity_perception_loss(const torch::Tensor& fake_photo, const torch::Tensor& real_photo,
                                       const torch::Tensor& fake_sketch, const torch::Tensor& real_sketch,
                                       Recognizer& phi_photo, Recognizer& phi_sketch) {
    FrozenParameters freeze_p(*phi_photo);
    FrozenParameters freeze_s(*phi_sketch);
    torch::Tensor real_p, real_s;
    {
        torch::NoGradGuard no_grad;
        real_p = phi_photo->embed(real_photo);
        real_s = phi_sketch->embed(real_sketch);
    }
    auto fake_p = phi_photo->embed(fake_photo);
    auto fake_s = phi_sketch->embed(fake_sketch);
    if (fake_p.size(-1) != real_p.size(-1) || fake_s.size(-1) != real_s.size(-1))
        throw ShapeError("identity_perception: embedding dimension mismatch");
    return embedding_distance_loss(fake_p, real_p, fake_s, real_s);
}

torch::Tensor identity_mapping_loss(const torch::Tensor& gx_of_x, const torch::Tensor& x,
                                    const torch::Tensor& gy_of_y, const torch::Tensor& y) {
    require_same_shape(gx_of_x, x, "identity_mapping_loss(x)");
    require_same_shape(gy_of_y, y, "identity_mapping_loss(y)");
    return (gx_of_x - x).abs().mean() + (gy_of_y - y).abs().mean();
}

torch::Tensor total_generator_loss(const GeneratorLossParts& parts, const LossWeights& weights) {
    weights.validate();
    require_finite(parts.gan_x, "gan_x");
    require_finite(parts.gan_y, "gan_y");
    require_finite(parts.cyc, "cycle");
    require_finite(parts.ip, "identity_perception");
    require_finite(parts.im, "identity_mapping");
    return parts.gan_x + parts.gan_y + weights.lambda_cyc * parts.cyc + weights.lambda_ip * parts.ip +
           weights.lambda_im * parts.im;
}

torch::Tensor triplet_hinges(const torch::Tensor& anchor, const torch::Tensor& positive,
                             const torch::Tensor& negatives, double margin) {
    if (anchor.dim() != 1 || positive.sizes() != anchor.sizes())
        throw ShapeError("triplet: anchor and positive must be equal-length vectors");
    if (negatives.dim() != 2 || negatives.size(1) != anchor.size(0))
        throw ShapeError("triplet: negatives must be N x D with D matching the anchor");
    if (negatives.size(0) == 0) throw Error("triplet: at least one negative is required");
    const auto d_ap = (anchor - positive).pow(2).sum();
    const auto d_an = (negatives - anchor.unsqueeze(0)).pow(2).sum(1);
    return torch::relu(d_ap - d_an + margin);
}

std::vector<std::int64_t> top_k_indices(const torch::Tensor& values, int k) {
    auto v = values.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const auto n = v.numel();
    const auto* data = v.data_ptr<double>();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return data[a] > data[b]; });
    idx.resize(static_cast<std::size_t>(std::min<std::int64_t>(k, n)));
    return idx;
}

torch::Tensor triplet_loss(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negatives, const TripletConfig& config) {
    config.validate();
    auto hinges = triplet_hinges(anchor, positive, negatives, config.margin_alpha);
    const auto keep = top_k_indices(hinges, config.hard_k);
    auto index = torch::tensor(keep, torch::TensorOptions().dtype(torch::kInt64));
    return hinges.index_select(0, index).sum();
}

}  // namespace facecycle
