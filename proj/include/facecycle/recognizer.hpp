#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/types.h>

#include "facecycle/dataset.hpp"
#include "facecycle/losses.hpp"
#include "facecycle/nets.hpp"

namespace facecycle {

/// Caffe "step" policy: base_lr * gamma^floor(iter / stepsize).
struct StepLrPolicy {
    double base_lr = 0.3;
    int stepsize = 100;
    double gamma = 0.96;

    double at(std::int64_t iteration) const;
};

enum class FineTuneStage { first, subsequent };

std::string_view to_string(FineTuneStage stage);
FineTuneStage parse_fine_tune_stage(std::string_view name);

struct FineTuneConfig {
    double momentum = 0.9;
    double weight_decay = 2e-4;
    StepLrPolicy lr_policy;
    int iterations = 600;
    /// Iterations for the sketch recognizer; 0 reuses `iterations`.
    int sketch_iterations = 1600;
    TripletConfig triplet;
    FineTuneStage stage = FineTuneStage::first;
    /// Identities sampled per batch; each contributes its real and fake image.
    int identities_per_batch = 8;

    /// base_lr 0.3, stepsize 100, 600 photo / 1600 sketch iterations.
    static FineTuneConfig first_stage();
    /// base_lr 0.01, stepsize 200, 2000 iterations for both recognizers.
    static FineTuneConfig subsequent_stage();
    void validate() const;
};

enum class Domain { photo, sketch, fake_photo, fake_sketch };

std::string_view to_string(Domain domain);
Domain parse_domain(std::string_view name);
bool is_photo_domain(Domain domain);

/// Images with identity labels, e.g. the real+fake photos of the training split.
struct LabeledImages {
    std::vector<std::string> ids;
    std::vector<Domain> domains;
    torch::Tensor images;  // N×3×S×S

    std::size_t size() const { return ids.size(); }
    /// Dense 0-based identity index per image.
    std::vector<std::int64_t> labels() const;
};

/// Loads the images of `domains` for every entry of `split`.
LabeledImages load_labeled_images(const Manifest& manifest, Split split, const std::vector<Domain>& domains,
                                  const PreprocessConfig& preprocess);

struct MinedTriplets {
    torch::Tensor loss;  // mean over anchors of the per-anchor hard-K triplet loss
    std::vector<std::int64_t> anchors;
    std::vector<std::int64_t> positives;
};

/// Every image with a same-identity partner serves once as anchor; its positive
/// is drawn uniformly among those partners, all other identities are candidate
/// negatives and the hard-K selection of triplet_loss applies.
MinedTriplets mine_triplets(const torch::Tensor& embeddings, const std::vector<std::int64_t>& labels,
                            const TripletConfig& config, std::mt19937_64& rng);

struct FineTuneHistory {
    std::vector<double> batch_losses;
    std::vector<double> learning_rates;
};

using FineTuneCallback = std::function<void(std::int64_t completed_iterations, Recognizer&)>;

/// Momentum SGD on the mined triplet loss. Throws Error with fewer than two identities.
FineTuneHistory fine_tune(Recognizer& recognizer, const LabeledImages& data, const FineTuneConfig& config,
                          int iterations, std::uint64_t seed, const FineTuneCallback& callback = {});

/// Mean mined loss over the whole set, with each anchor's positive fixed to its
/// first same-identity partner.
double dataset_triplet_loss(Recognizer& recognizer, const LabeledImages& data, const TripletConfig& config);

struct GalleryEntry {
    std::string id;
    Domain domain = Domain::photo;
    std::vector<float> embedding;
};

struct EmbeddingGallery {
    std::vector<GalleryEntry> entries;

    std::size_t size() const { return entries.size(); }
    std::size_t dim() const { return entries.empty() ? 0 : entries.front().embedding.size(); }
    /// N×D float64.
    torch::Tensor matrix() const;
    std::vector<std::string> ids() const;
};

EmbeddingGallery embed_images(Recognizer& recognizer, const LabeledImages& images);
/// One entry per `split` image of `domain`; fake domains need a generated manifest.
EmbeddingGallery embed_manifest(Recognizer& recognizer, const Manifest& manifest, Split split, Domain domain,
                                const PreprocessConfig& preprocess);

/// Binary: magic "FCYGAL\0\0", u32 version, u32 dim, u64 count, then per entry
/// u8 domain, u32 id length, id bytes, dim × f32 (little-endian).
void save_gallery(const EmbeddingGallery& gallery, const std::filesystem::path& path);
EmbeddingGallery load_gallery(const std::filesystem::path& path);

enum class Similarity { cosine, neg_l2 };

std::string_view to_string(Similarity similarity);
Similarity parse_similarity(std::string_view name);

struct ScoreMatrix {
    std::vector<std::string> probe_ids;
    std::vector<std::string> gallery_ids;
    std::vector<double> values;  // row-major probes × gallery

    std::size_t rows() const { return probe_ids.size(); }
    std::size_t cols() const { return gallery_ids.size(); }
    double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
};

ScoreMatrix score_matrix(const EmbeddingGallery& probes, const EmbeddingGallery& gallery, Similarity similarity);

/// Fraction of probes whose true identity ranks within the top k; ties go to
/// the lower gallery index.
double rank_k_accuracy(const ScoreMatrix& scores, int k);

enum class Fusion { min_max_mean, sum, z_score_mean };

std::string_view to_string(Fusion fusion);
Fusion parse_fusion(std::string_view name);

/// Default: each matrix min-max normalised to [0,1] (constant matrices become
/// zeros), then averaged elementwise.
ScoreMatrix fuse_scores(const ScoreMatrix& a, const ScoreMatrix& b, Fusion rule = Fusion::min_max_mean);

void write_score_csv(const ScoreMatrix& scores, const std::filesystem::path& path);

/// Mean-centred PCA basis over flattened images.
class EigenfaceModel {
public:
    /// `train` is N×... ; keeps min(num_components, numerical rank) components.
    EigenfaceModel(const torch::Tensor& train, int num_components);

    int components() const { return static_cast<int>(basis_.size(1)); }
    /// N×components coefficients.
    torch::Tensor project(const torch::Tensor& images) const;
    torch::Tensor reconstruct(const torch::Tensor& coefficients) const;
    const torch::Tensor& mean() const { return mean_; }
    /// D×components, orthonormal columns; each column's largest-magnitude entry is positive.
    const torch::Tensor& basis() const { return basis_; }

private:
    torch::Tensor mean_;
    torch::Tensor basis_;
};

/// Negative Euclidean distances in the eigenface coefficient space.
ScoreMatrix eigenface_match(const torch::Tensor& train_images, const LabeledImages& probes,
                            const LabeledImages& gallery, int num_components);

enum class Protocol { sketch, photo, fused };

std::string_view to_string(Protocol protocol);
Protocol parse_protocol(std::string_view name);

struct ProtocolSets {
    EmbeddingGallery probes;
    EmbeddingGallery gallery;
};

/// sketch: real-sketch probes against the fake-sketch gallery (sketch recognizer).
/// photo: fake-photo probes against the real-photo gallery (photo recognizer).
ProtocolSets protocol_sets(Protocol protocol, Recognizer& recognizer, const Manifest& generated, Split split,
                           const PreprocessConfig& preprocess);

struct RecognitionRates {
    double sketch_matching = 0.0;
    double photo_matching = 0.0;
    double fused = 0.0;

    nlohmann::json to_json() const;
};

RecognitionRates evaluate_recognition(Recognizer& phi_photo, Recognizer& phi_sketch, const Manifest& generated,
                                      Split split, const PreprocessConfig& preprocess, Similarity similarity,
                                      Fusion fusion, int k = 1);

void save_recognizer(const Recognizer& recognizer, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
Recognizer load_recognizer(const std::filesystem::path& path);

}  // namespace facecycle
