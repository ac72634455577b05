#include "facecycle/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <numeric>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "facecycle/checkpoint.hpp"
#include "facecycle/config.hpp"
#include "facecycle/error.hpp"
#include "facecycle/optim.hpp"

namespace facecycle {

double StepLrPolicy::at(std::int64_t iteration) const {
    return base_lr * std::pow(gamma, static_cast<double>(iteration / stepsize));
}

std::string_view to_string(FineTuneStage stage) { return stage == FineTuneStage::first ? "first" : "subsequent"; }

FineTuneStage parse_fine_tune_stage(std::string_view name) {
    if (name == "first") return FineTuneStage::first;
    if (name == "subsequent") return FineTuneStage::subsequent;
    throw Error("unknown fine-tune stage '" + std::string(name) + "' (expected first|subsequent)");
}

FineTuneConfig FineTuneConfig::first_stage() {
    FineTuneConfig c;
    c.lr_policy = {0.3, 100, 0.96};
    c.iterations = 600;
    c.sketch_iterations = 1600;
    c.stage = FineTuneStage::first;
    return c;
}

FineTuneConfig FineTuneConfig::subsequent_stage() {
    FineTuneConfig c;
    c.lr_policy = {0.01, 200, 0.96};
    c.iterations = 2000;
    c.sketch_iterations = 2000;
    c.stage = FineTuneStage::subsequent;
    return c;
}

void FineTuneConfig::validate() const {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("finetune.momentum", "must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("finetune.weight_decay", "must be >= 0");
    if (!(lr_policy.base_lr > 0.0)) throw ConfigError("finetune.lr_policy.base_lr", "must be > 0");
    if (lr_policy.stepsize < 1) throw ConfigError("finetune.lr_policy.stepsize", "must be >= 1");
    if (!(lr_policy.gamma > 0.0 && lr_policy.gamma <= 1.0))
        throw ConfigError("finetune.lr_policy.gamma", "must lie in (0, 1]");
    if (iterations < 1) throw ConfigError("finetune.iterations", "must be > 0");
    if (sketch_iterations < 0) throw ConfigError("finetune.sketch_iterations", "must be >= 0");
    if (identities_per_batch < 2) throw ConfigError("finetune.identities_per_batch", "must be >= 2");
    triplet.validate();
}

std::string_view to_string(Domain domain) {
    switch (domain) {
        case Domain::photo: return "photo";
        case Domain::sketch: return "sketch";
        case Domain::fake_photo: return "fake-photo";
        case Domain::fake_sketch: return "fake-sketch";
    }
    return "";
}

Domain parse_domain(std::string_view name) {
    if (name == "photo") return Domain::photo;
    if (name == "sketch") return Domain::sketch;
    if (name == "fake-photo") return Domain::fake_photo;
    if (name == "fake-sketch") return Domain::fake_sketch;
    throw Error("unknown domain '" + std::string(name) + "'");
}

bool is_photo_domain(Domain domain) { return domain == Domain::photo || domain == Domain::fake_photo; }

// ---------------------------------------------------------------------------
// Labeled images

std::vector<std::int64_t> LabeledImages::labels() const {
    std::map<std::string, std::int64_t> index;
    std::vector<std::int64_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto [it, inserted] = index.emplace(id, static_cast<std::int64_t>(index.size()));
        out.push_back(it->second);
    }
    return out;
}

namespace {

const fs::path& domain_path(const ManifestEntry& e, Domain domain) {
    switch (domain) {
        case Domain::photo: return e.photo;
        case Domain::sketch: return e.sketch;
        case Domain::fake_photo:
            if (!e.fake_photo) throw Error("entry '" + e.id + "' has no fake_photo (not a generated manifest?)");
            return *e.fake_photo;
        case Domain::fake_sketch:
            if (!e.fake_sketch) throw Error("entry '" + e.id + "' has no fake_sketch (not a generated manifest?)");
            return *e.fake_sketch;
    }
    throw Error("bad domain");
}

}  // namespace

LabeledImages load_labeled_images(const Manifest& manifest, Split split, const std::vector<Domain>& domains,
                                  const PreprocessConfig& preprocess) {
    LabeledImages out;
    std::vector<torch::Tensor> images;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        for (auto d : domains) {
            images.push_back(facecycle::preprocess(read_image(domain_path(e, d)), preprocess, false));
            out.ids.push_back(e.id);
            out.domains.push_back(d);
        }
    }
    const auto s = preprocess.target_size;
    out.images = images.empty() ? torch::empty({0, 3, s, s}) : torch::stack(images);
    return out;
}

// ---------------------------------------------------------------------------
// Triplet mining and fine-tuning

MinedTriplets mine_triplets(const torch::Tensor& embeddings, const std::vector<std::int64_t>& labels,
                            const TripletConfig& config, std::mt19937_64& rng) {
    const auto n = static_cast<std::int64_t>(labels.size());
    if (embeddings.dim() != 2 || embeddings.size(0) != n)
        throw ShapeError("mine_triplets: embeddings must be N x D with one label per row");
    MinedTriplets out;
    std::vector<torch::Tensor> losses;
    for (std::int64_t a = 0; a < n; ++a) {
        std::vector<std::int64_t> same, other;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == a) continue;
            (labels[j] == labels[a] ? same : other).push_back(j);
        }
        if (same.empty() || other.empty()) continue;
        const auto p = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)];
        auto neg_index = torch::tensor(other, torch::TensorOptions().dtype(torch::kInt64));
        losses.push_back(triplet_loss(embeddings[a], embeddings[p], embeddings.index_select(0, neg_index), config));
        out.anchors.push_back(a);
        out.positives.push_back(p);
    }
    out.loss = losses.empty() ? embeddings.sum() * 0.0 : torch::stack(losses).mean();
    return out;
}

FineTuneHistory fine_tune(Recognizer& recognizer, const LabeledImages& data, const FineTuneConfig& config,
                          int iterations, std::uint64_t seed, const FineTuneCallback& callback) {
    config.validate();
    if (iterations < 1) throw ConfigError("finetune.iterations", "must be > 0");
    const auto labels = data.labels();
    const auto num_ids = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (num_ids < 2) throw Error("fine_tune: need at least two identities to form negatives");

    std::vector<std::vector<std::int64_t>> by_id(static_cast<std::size_t>(num_ids));
    for (std::size_t i = 0; i < labels.size(); ++i) by_id[static_cast<std::size_t>(labels[i])].push_back(static_cast<std::int64_t>(i));

    std::mt19937_64 rng(seed);
    set_requires_grad(*recognizer, true);
    MomentumSgd sgd(recognizer->parameters(), config.momentum, config.weight_decay);
    FineTuneHistory history;
    const auto per_batch = std::min<std::int64_t>(config.identities_per_batch, num_ids);
    std::vector<std::int64_t> id_order(static_cast<std::size_t>(num_ids));

    for (std::int64_t it = 0; it < iterations; ++it) {
        std::iota(id_order.begin(), id_order.end(), 0);
        std::shuffle(id_order.begin(), id_order.end(), rng);
        std::vector<std::int64_t> rows, batch_labels;
        for (std::int64_t k = 0; k < per_batch; ++k)
            for (auto r : by_id[static_cast<std::size_t>(id_order[static_cast<std::size_t>(k)])]) {
                rows.push_back(r);
                batch_labels.push_back(labels[static_cast<std::size_t>(r)]);
            }
        auto batch = data.images.index_select(0, torch::tensor(rows, torch::TensorOptions().dtype(torch::kInt64)));
        auto mined = mine_triplets(recognizer->embed(batch), batch_labels, config.triplet, rng);
        const double lr = config.lr_policy.at(it);
        sgd.zero_grad();
        mined.loss.backward();
        sgd.step(lr);
        history.batch_losses.push_back(mined.loss.item<double>());
        history.learning_rates.push_back(lr);
        if (callback) callback(it + 1, recognizer);
    }
    sgd.zero_grad();
    return history;
}

double dataset_triplet_loss(Recognizer& recognizer, const LabeledImages& data, const TripletConfig& config) {
    torch::NoGradGuard no_grad;
    const auto labels = data.labels();
    auto emb = recognizer->embed(data.images).to(torch::kFloat64);
    double total = 0.0;
    std::size_t anchors = 0;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        std::int64_t positive = -1;
        std::vector<std::int64_t> negatives;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (j == a) continue;
            if (labels[j] == labels[a]) {
                if (positive < 0) positive = static_cast<std::int64_t>(j);
            } else {
                negatives.push_back(static_cast<std::int64_t>(j));
            }
        }
        if (positive < 0 || negatives.empty()) continue;
        auto negs = emb.index_select(0, torch::tensor(negatives, torch::TensorOptions().dtype(torch::kInt64)));
        total += triplet_loss(emb[static_cast<std::int64_t>(a)], emb[positive], negs, config).item<double>();
        ++anchors;
    }
    return anchors ? total / static_cast<double>(anchors) : 0.0;
}

// ---------------------------------------------------------------------------
// Galleries

torch::Tensor EmbeddingGallery::matrix() const {
    const auto d = static_cast<std::int64_t>(dim());
    auto out = torch::empty({static_cast<std::int64_t>(size()), d}, torch::kFloat64);
    auto acc = out.accessor<double, 2>();
    for (std::size_t i = 0; i < size(); ++i) {
        if (entries[i].embedding.size() != dim()) throw ShapeError("gallery embeddings differ in dimension");
        for (std::int64_t j = 0; j < d; ++j) acc[static_cast<std::int64_t>(i)][j] = entries[i].embedding[static_cast<std::size_t>(j)];
    }
    return out;
}

std::vector<std::string> EmbeddingGallery::ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.id);
    return out;
}

EmbeddingGallery embed_images(Recognizer& recognizer, const LabeledImages& images) {
    torch::NoGradGuard no_grad;
    EmbeddingGallery gallery;
    constexpr std::int64_t kChunk = 16;
    const auto n = static_cast<std::int64_t>(images.size());
    for (std::int64_t start = 0; start < n; start += kChunk) {
        auto emb = recognizer->embed(images.images.slice(0, start, std::min(n, start + kChunk)))
                       .to(torch::kFloat32)
                       .contiguous();
        for (std::int64_t i = 0; i < emb.size(0); ++i) {
            const auto row = emb[i];
            GalleryEntry entry;
            entry.id = images.ids[static_cast<std::size_t>(start + i)];
            entry.domain = images.domains[static_cast<std::size_t>(start + i)];
            entry.embedding.assign(row.data_ptr<float>(), row.data_ptr<float>() + row.numel());
            gallery.entries.push_back(std::move(entry));
        }
    }
    return gallery;
}

EmbeddingGallery embed_manifest(Recognizer& recognizer, const Manifest& manifest, Split split, Domain domain,
                                const PreprocessConfig& preprocess) {
    return embed_images(recognizer, load_labeled_images(manifest, split, {domain}, preprocess));
}

namespace {

constexpr char kGalleryMagic[8] = {'F', 'C', 'Y', 'G', 'A', 'L', '\0', '\0'};
constexpr std::uint32_t kGalleryVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw Error("gallery file truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_gallery(const EmbeddingGallery& gallery, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write gallery " + path.string());
    out.write(kGalleryMagic, sizeof kGalleryMagic);
    put<std::uint32_t>(out, kGalleryVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(gallery.dim()));
    put<std::uint64_t>(out, gallery.size());
    for (const auto& e : gallery.entries) {
        if (e.embedding.size() != gallery.dim()) throw ShapeError("gallery embeddings differ in dimension");
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.domain));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.id.size()));
        out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
        out.write(reinterpret_cast<const char*>(e.embedding.data()),
                  static_cast<std::streamsize>(e.embedding.size() * sizeof(float)));
    }
    if (!out) throw Error("failed writing gallery " + path.string());
}

EmbeddingGallery load_gallery(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open gallery " + path.string());
    const std::string bytes{std::istreambuf_iterator<char>(in), {}};
    if (bytes.size() < sizeof kGalleryMagic || std::memcmp(bytes.data(), kGalleryMagic, sizeof kGalleryMagic) != 0)
        throw Error("not a gallery file: " + path.string());
    std::size_t pos = sizeof kGalleryMagic;
    if (take<std::uint32_t>(bytes, pos) != kGalleryVersion) throw Error("gallery version mismatch: " + path.string());
    const auto dim = take<std::uint32_t>(bytes, pos);
    const auto count = take<std::uint64_t>(bytes, pos);
    EmbeddingGallery gallery;
    for (std::uint64_t i = 0; i < count; ++i) {
        GalleryEntry e;
        const auto domain = take<std::uint8_t>(bytes, pos);
        if (domain > static_cast<std::uint8_t>(Domain::fake_sketch)) throw Error("gallery entry has bad domain tag");
        e.domain = static_cast<Domain>(domain);
        const auto len = take<std::uint32_t>(bytes, pos);
        if (pos + len > bytes.size()) throw Error("gallery file truncated");
        e.id = bytes.substr(pos, len);
        pos += len;
        e.embedding.resize(dim);
        if (pos + dim * sizeof(float) > bytes.size()) throw Error("gallery file truncated");
        std::memcpy(e.embedding.data(), bytes.data() + pos, dim * sizeof(float));
        pos += dim * sizeof(float);
        gallery.entries.push_back(std::move(e));
    }
    return gallery;
}

// ---------------------------------------------------------------------------
// Matching

std::string_view to_string(Similarity similarity) { return similarity == Similarity::cosine ? "cosine" : "neg-l2"; }

Similarity parse_similarity(std::string_view name) {
    if (name == "cosine") return Similarity::cosine;
    if (name == "neg-l2") return Similarity::neg_l2;
    throw Error("unknown similarity '" + std::string(name) + "' (expected cosine|neg-l2)");
}

ScoreMatrix score_matrix(const EmbeddingGallery& probes, const EmbeddingGallery& gallery, Similarity similarity) {
    if (probes.size() && gallery.size() && probes.dim() != gallery.dim())
        throw ShapeError("score_matrix: probe dim " + std::to_string(probes.dim()) + " != gallery dim " +
                         std::to_string(gallery.dim()));
    ScoreMatrix out;
    out.probe_ids = probes.ids();
    out.gallery_ids = gallery.ids();
    out.values.assign(out.rows() * out.cols(), 0.0);
    if (out.values.empty()) return out;
    auto p = probes.matrix();
    auto g = gallery.matrix();
    torch::Tensor s;
    if (similarity == Similarity::cosine) {
        auto pn = p.norm(2, 1, true);
        auto gn = g.norm(2, 1, true);
        auto denom = pn.mm(gn.t());
        s = torch::where(denom > 0, p.mm(g.t()) / denom.clamp_min(1e-300), torch::zeros_like(denom));
    } else {
        s = -torch::cdist(p, g);
    }
    s = s.contiguous();
    std::copy_n(s.data_ptr<double>(), s.numel(), out.values.begin());
    for (double v : out.values)
        if (!std::isfinite(v)) throw Error("score_matrix: non-finite score");
    return out;
}

double rank_k_accuracy(const ScoreMatrix& scores, int k) {
    if (k < 1) throw Error("rank_k_accuracy: k must be >= 1");
    if (scores.rows() == 0) throw Error("rank_k_accuracy: no probes");
    std::size_t hits = 0;
    std::vector<std::size_t> order(scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto& truth = scores.probe_ids[i];
        if (std::find(scores.gallery_ids.begin(), scores.gallery_ids.end(), truth) == scores.gallery_ids.end())
            throw Error("rank_k_accuracy: probe id '" + truth + "' absent from gallery");
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return scores.at(i, a) > scores.at(i, b); });
        const auto limit = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
        for (std::size_t r = 0; r < limit; ++r)
            if (scores.gallery_ids[order[r]] == truth) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows());
}

std::string_view to_string(Fusion fusion) {
    switch (fusion) {
        case Fusion::min_max_mean: return "min-max";
        case Fusion::sum: return "sum";
        case Fusion::z_score_mean: return "z-score";
    }
    return "";
}

Fusion parse_fusion(std::string_view name) {
    if (name == "min-max") return Fusion::min_max_mean;
    if (name == "sum") return Fusion::sum;
    if (name == "z-score") return Fusion::z_score_mean;
    throw Error("unknown fusion rule '" + std::string(name) + "' (expected min-max|sum|z-score)");
}

namespace {

std::vector<double> min_max(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.0);
    if (v.empty() || !(*hi > *lo)) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
    return out;
}

std::vector<double> z_score(const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    if (v.empty()) return out;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    if (!(sd > 0.0)) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return out;
}

}  // namespace

ScoreMatrix fuse_scores(const ScoreMatrix& a, const ScoreMatrix& b, Fusion rule) {
    if (a.probe_ids != b.probe_ids || a.gallery_ids != b.gallery_ids || a.values.size() != b.values.size())
        throw ShapeError("fuse_scores: matrices differ in shape or label order");
    ScoreMatrix out{a.probe_ids, a.gallery_ids, std::vector<double>(a.values.size())};
    switch (rule) {
        case Fusion::min_max_mean: {
            const auto na = min_max(a.values), nb = min_max(b.values);
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = 0.5 * (na[i] + nb[i]);
            break;
        }
        case Fusion::sum:
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.values[i] + b.values[i];
            break;
        case Fusion::z_score_mean: {
            const auto na = z_score(a.values), nb = z_score(b.values);
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = 0.5 * (na[i] + nb[i]);
            break;
        }
    }
    return out;
}

void write_score_csv(const ScoreMatrix& scores, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "probe";
    for (const auto& g : scores.gallery_ids) out << ',' << g;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        out << scores.probe_ids[i];
        for (std::size_t j = 0; j < scores.cols(); ++j) out << ',' << scores.at(i, j);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Eigenfaces

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowMatrix to_eigen(const torch::Tensor& images) {
    auto flat = images.detach().to(torch::kCPU, torch::kFloat64).reshape({images.size(0), -1}).contiguous();
    return Eigen::Map<const RowMatrix>(flat.data_ptr<double>(), flat.size(0), flat.size(1));
}

torch::Tensor to_tensor(const RowMatrix& m) {
    auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat64);
    Eigen::Map<RowMatrix>(t.data_ptr<double>(), m.rows(), m.cols()) = m;
    return t;
}

}  // namespace

EigenfaceModel::EigenfaceModel(const torch::Tensor& train, int num_components) {
    if (train.dim() < 2 || train.size(0) < 1) throw ShapeError("eigenfaces: need at least one training image");
    if (num_components < 1 || num_components > train.size(0))
        throw Error("eigenfaces: num_components must lie in [1, training count]");
    const RowMatrix x = to_eigen(train);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const RowMatrix centered = x.rowwise() - mu;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double tol = (sv.size() ? sv(0) : 0.0) * 1e-10 * static_cast<double>(std::max(x.rows(), x.cols()));
    int keep = 0;
    while (keep < num_components && keep < sv.size() && sv(keep) > tol) ++keep;
    RowMatrix basis = svd.matrixV().leftCols(keep);
    for (int c = 0; c < keep; ++c) {
        Eigen::Index arg = 0;
        basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, c) < 0) basis.col(c) *= -1.0;
    }
    mean_ = to_tensor(mu);
    basis_ = to_tensor(basis);
}

torch::Tensor EigenfaceModel::project(const torch::Tensor& images) const {
    auto flat = images.detach().to(torch::kCPU, torch::kFloat64).reshape({images.size(0), -1});
    if (flat.size(1) != mean_.size(1)) throw ShapeError("eigenfaces: image size differs from training images");
    return (flat - mean_).mm(basis_);
}

torch::Tensor EigenfaceModel::reconstruct(const torch::Tensor& coefficients) const {
    return coefficients.mm(basis_.t()) + mean_;
}

ScoreMatrix eigenface_match(const torch::Tensor& train_images, const LabeledImages& probes,
                            const LabeledImages& gallery, int num_components) {
    EigenfaceModel model(train_images, num_components);
    auto p = model.project(probes.images);
    auto g = model.project(gallery.images);
    ScoreMatrix out;
    out.probe_ids = probes.ids;
    out.gallery_ids = gallery.ids;
    auto s = (-torch::cdist(p, g)).contiguous();
    out.values.assign(s.data_ptr<double>(), s.data_ptr<double>() + s.numel());
    return out;
}

// ---------------------------------------------------------------------------
// Protocols

std::string_view to_string(Protocol protocol) {
    switch (protocol) {
        case Protocol::sketch: return "sketch";
        case Protocol::photo: return "photo";
        case Protocol::fused: return "fused";
    }
    return "";
}

Protocol parse_protocol(std::string_view name) {
    if (name == "sketch") return Protocol::sketch;
    if (name == "photo") return Protocol::photo;
    if (name == "fused") return Protocol::fused;
    throw Error("unknown protocol '" + std::string(name) + "' (expected sketch|photo|fused)");
}

ProtocolSets protocol_sets(Protocol protocol, Recognizer& recognizer, const Manifest& generated, Split split,
                           const PreprocessConfig& preprocess) {
    switch (protocol) {
        case Protocol::sketch:
            return {embed_manifest(recognizer, generated, split, Domain::sketch, preprocess),
                    embed_manifest(recognizer, generated, split, Domain::fake_sketch, preprocess)};
        case Protocol::photo:
            return {embed_manifest(recognizer, generated, split, Domain::fake_photo, preprocess),
                    embed_manifest(recognizer, generated, split, Domain::photo, preprocess)};
        case Protocol::fused: break;
    }
    throw Error("protocol_sets: fused is a combination, not a single protocol");
}

nlohmann::json RecognitionRates::to_json() const {
    return {{"sketch_matching", sketch_matching}, {"photo_matching", photo_matching}, {"fused", fused}};
}

RecognitionRates evaluate_recognition(Recognizer& phi_photo, Recognizer& phi_sketch, const Manifest& generated,
                                      Split split, const PreprocessConfig& preprocess, Similarity similarity,
                                      Fusion fusion, int k) {
    const auto sketch = protocol_sets(Protocol::sketch, phi_sketch, generated, split, preprocess);
    const auto photo = protocol_sets(Protocol::photo, phi_photo, generated, split, preprocess);
    const auto s_scores = score_matrix(sketch.probes, sketch.gallery, similarity);
    const auto p_scores = score_matrix(photo.probes, photo.gallery, similarity);
    RecognitionRates rates;
    rates.sketch_matching = rank_k_accuracy(s_scores, k);
    rates.photo_matching = rank_k_accuracy(p_scores, k);
    rates.fused = rank_k_accuracy(fuse_scores(s_scores, p_scores, fusion), k);
    return rates;
}

// ---------------------------------------------------------------------------
// Recognizer checkpoints

void save_recognizer(const Recognizer& recognizer, const std::filesystem::path& path, const nlohmann::json& meta) {
    CheckpointData data;
    data.kind = "recognizer";
    data.meta = {{"config", to_json(recognizer->config())}, {"info", meta}};
    for (const auto& item : recognizer->named_parameters()) data.add(item.key(), item.value());
    write_checkpoint(path, data);
}

Recognizer load_recognizer(const std::filesystem::path& path) {
    const auto data = read_checkpoint(path);
    if (data.kind != "recognizer")
        throw CheckpointError(path.string() + " holds a '" + data.kind + "' checkpoint, not a recognizer");
    Recognizer recognizer(recognizer_config_from_json(data.meta.at("config")));
    torch::NoGradGuard no_grad;
    for (auto& item : recognizer->named_parameters()) {
        const auto& src = data.tensor(item.key());
        if (src.sizes() != item.value().sizes()) throw CheckpointError("shape mismatch for " + item.key());
        item.value().copy_(src);
    }
    return recognizer;
}

}  // namespace facecycle
