#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "facecycle/nets.hpp"

namespace facecycle {

/// least_squares: raw critic outputs regressed to 1 (real) / 0 (fake).
/// log: critic outputs are logits, D = sigmoid(score); the cross-entropy form.
enum class AdversarialMode { least_squares, log };

std::string_view to_string(AdversarialMode mode);
AdversarialMode parse_adversarial_mode(std::string_view name);

/// literal: G_X(x) vs x and G_Y(y) vs y.
/// target_domain: G_X(y) vs y and G_Y(x) vs x.
enum class IdentityMappingMode { literal, target_domain };

std::string_view to_string(IdentityMappingMode mode);
IdentityMappingMode parse_identity_mapping_mode(std::string_view name);

struct LossWeights {
    double lambda_cyc = 10.0;
    double lambda_ip = 3.0e7;
    double lambda_im = 5.0;

    void validate() const;
};

struct TripletConfig {
    double margin_alpha = 0.1;
    int hard_k = 4;

    void validate() const;
};

/// Throws NonFiniteError naming `term` if any element is NaN or infinite.
void require_finite(const torch::Tensor& t, std::string_view term);

/// Loss minimised by the critic; means over batch and patch positions.
torch::Tensor adversarial_loss_discriminator(const torch::Tensor& scores_real,
                                             const torch::Tensor& scores_fake,
                                             AdversarialMode mode);
/// Non-saturating generator loss.
torch::Tensor adversarial_loss_generator(const torch::Tensor& scores_fake, AdversarialMode mode);

/// mean|cyc_x - x| + mean|cyc_y - y|.
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& cyc_x, const torch::Tensor& y,
                         const torch::Tensor& cyc_y);

/// Batch mean of squared L2 distances between embedding rows, summed over the
/// photo and sketch sides.
torch::Tensor embedding_distance_loss(const torch::Tensor& fake_photo_emb,
                                      const torch::Tensor& real_photo_emb,
                                      const torch::Tensor& fake_sketch_emb,
                                      const torch::Tensor& real_sketch_emb);

/// Identity perception through the frozen recognizers. Gradients reach the
/// fake images only; recognizer parameters never receive gradient.
torch::Tensor identity_perception_loss(const torch::Tensor& fake_photo, const torch::Tensor& real_photo,
                                       const torch::Tensor& fake_sketch, const torch::Tensor& real_sketch,
                                       Recognizer& phi_photo, Recognizer& phi_sketch);

/// mean|gx_of_x - x| + mean|gy_of_y - y|.
torch::Tensor identity_mapping_loss(const torch::Tensor& gx_of_x, const torch::Tensor& x,
                                    const torch::Tensor& gy_of_y, const torch::Tensor& y);

struct GeneratorLossParts {
    torch::Tensor gan_x;  // G_X against D_Y
    torch::Tensor gan_y;  // G_Y against D_X
    torch::Tensor cyc;
    torch::Tensor ip;
    torch::Tensor im;
};

torch::Tensor total_generator_loss(const GeneratorLossParts& parts, const LossWeights& weights);

/// Per-negative hinge [|a-p|^2 - |a-n|^2 + alpha]_+ for a single anchor.
torch::Tensor triplet_hinges(const torch::Tensor& anchor, const torch::Tensor& positive,
                             const torch::Tensor& negatives, double margin);

/// Indices of the k largest values, ties broken by lower index.
std::vector<std::int64_t> top_k_indices(const torch::Tensor& values, int k);

/// Sum of the hard_k largest hinges (all of them if fewer negatives).
/// `negatives` is N×D, anchor/positive are D.
torch::Tensor triplet_loss(const torch::Tensor& anchor, const torch::Tensor& positive,
                           const torch::Tensor& negatives, const TripletConfig& config);

}  // namespace facecycle
