#include "facecycle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "facecycle/error.hpp"

namespace facecycle {

using nlohmann::json;

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw Error("unknown split '" + std::string(name) + "' (expected train|test)");
}

std::vector<ManifestEntry> Manifest::split(Split which) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == which) out.push_back(e);
    return out;
}

std::size_t Manifest::count(Split which) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == which; }));
}

namespace {

const std::set<std::string> kManifestKeys = {"id", "photo", "sketch", "split", "fake_photo",
                                             "fake_sketch"};

std::string required_string(const json& record, const char* key, const std::string& source,
                            std::size_t line) {
    auto it = record.find(key);
    if (it == record.end()) throw ManifestError(source, line, std::string("missing field '") + key + "'");
    if (!it->is_string() || it->get<std::string>().empty())
        throw ManifestError(source, line, std::string("field '") + key + "' must be a non-empty string");
    return it->get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& path, const std::string& source, std::size_t line) {
    if (!fs::is_regular_file(path))
        throw ManifestError(source, line, "image file not found: " + path.string());
}

}  // namespace

Manifest parse_manifest(std::string_view text, const fs::path& base_dir, const std::string& source) {
    Manifest manifest;
    std::map<std::pair<Split, std::string>, std::size_t> seen;
    std::map<std::string, Split> id_split;

    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (std::all_of(raw.begin(), raw.end(), [](unsigned char c) { return std::isspace(c); }))
            continue;
        json record;
        try {
            record = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ManifestError(source, line, std::string("parse error: ") + e.what());
        }
        if (!record.is_object()) throw ManifestError(source, line, "record must be a JSON object");
        for (const auto& [key, _] : record.items())
            if (!kManifestKeys.count(key)) throw ManifestError(source, line, "unknown field '" + key + "'");

        ManifestEntry entry;
        entry.id = required_string(record, "id", source, line);
        entry.photo = resolve(base_dir, required_string(record, "photo", source, line));
        entry.sketch = resolve(base_dir, required_string(record, "sketch", source, line));
        try {
            entry.split = parse_split(required_string(record, "split", source, line));
        } catch (const ManifestError&) {
            throw;
        } catch (const Error& e) {
            throw ManifestError(source, line, e.what());
        }
        if (record.contains("fake_photo"))
            entry.fake_photo = resolve(base_dir, required_string(record, "fake_photo", source, line));
        if (record.contains("fake_sketch"))
            entry.fake_sketch = resolve(base_dir, required_string(record, "fake_sketch", source, line));

        require_file(entry.photo, source, line);
        require_file(entry.sketch, source, line);
        if (entry.fake_photo) require_file(*entry.fake_photo, source, line);
        if (entry.fake_sketch) require_file(*entry.fake_sketch, source, line);

        auto key = std::make_pair(entry.split, entry.id);
        if (auto it = seen.find(key); it != seen.end())
            throw ManifestError(source, line,
                                "duplicate id '" + entry.id + "' in split " +
                                    std::string(to_string(entry.split)) + " (first seen on line " +
                                    std::to_string(it->second) + ")");
        seen.emplace(key, line);
        if (auto it = id_split.find(entry.id); it != id_split.end() && it->second != entry.split)
            throw ManifestError(source, line, "id '" + entry.id + "' appears in both train and test");
        id_split.emplace(entry.id, entry.split);

        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError(path.string(), 0, "cannot open manifest");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_manifest(buffer.str(), path.parent_path(), path.string());
}

namespace {

std::string relative_to(const fs::path& p, const fs::path& base) {
    const auto abs_p = fs::weakly_canonical(fs::absolute(p));
    const auto abs_base = fs::weakly_canonical(fs::absolute(base));
    auto rel = abs_p.lexically_relative(abs_base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return abs_p.generic_string();
}

}  // namespace

void save_manifest(const Manifest& manifest, const fs::path& path) {
    const auto base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write manifest: " + path.string());
    for (const auto& e : manifest.entries) {
        json record = json::object();
        record["id"] = e.id;
        record["photo"] = relative_to(e.photo, base);
        record["sketch"] = relative_to(e.sketch, base);
        record["split"] = std::string(to_string(e.split));
        if (e.fake_photo) record["fake_photo"] = relative_to(*e.fake_photo, base);
        if (e.fake_sketch) record["fake_sketch"] = relative_to(*e.fake_sketch, base);
        out << record.dump() << '\n';
    }
    if (!out) throw Error("failed writing manifest: " + path.string());
}

RawImage read_image(const fs::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw ImageError("cannot decode image: " + path.string());
    if (mat.depth() != CV_8U) mat.convertTo(mat, CV_8U);
    cv::Mat rgb;
    switch (mat.channels()) {
        case 1: cv::cvtColor(mat, rgb, cv::COLOR_GRAY2RGB); break;
        case 3: cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(mat, rgb, cv::COLOR_BGRA2RGB); break;
        default: throw ImageError("unsupported channel count in " + path.string());
    }
    RawImage out;
    out.width = rgb.cols;
    out.height = rgb.rows;
    out.pixels.resize(static_cast<std::size_t>(rgb.total()) * 3);
    for (int y = 0; y < rgb.rows; ++y)
        std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, out.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3);
    return out;
}

void write_png(const RawImage& image, const fs::path& path) {
    cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), bgr);
    } catch (const cv::Exception& e) {
        throw ImageError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw ImageError("cannot write " + path.string());
}

void PreprocessConfig::validate() const {
    if (target_size < 16 || target_size % 2 != 0)
        throw ConfigError("preprocess.target_size", "must be even and >= 16");
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
        throw ConfigError("preprocess.flip_probability", "must lie in [0, 1]");
}

std::uint8_t denormalize_value(float v) {
    const double scaled = (static_cast<double>(v) + 1.0) * 127.5;
    return static_cast<std::uint8_t>(std::clamp(std::lround(scaled), 0L, 255L));
}

torch::Tensor preprocess(const RawImage& raw, const PreprocessConfig& config, bool flip) {
    config.validate();
    if (raw.width <= 0 || raw.height <= 0 ||
        raw.pixels.size() != static_cast<std::size_t>(raw.width) * raw.height * 3)
        throw ImageError("corrupt raw image buffer");
    const int size = config.target_size;
    cv::Mat src(raw.height, raw.width, CV_8UC3, const_cast<std::uint8_t*>(raw.pixels.data()));
    cv::Mat resized;
    if (raw.width != size || raw.height != size)
        cv::resize(src, resized, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
    else
        resized = src;

    auto out = torch::empty({3, size, size}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    for (int y = 0; y < size; ++y) {
        const auto* row = resized.ptr<std::uint8_t>(y);
        for (int x = 0; x < size; ++x) {
            const int dst_x = flip ? size - 1 - x : x;
            for (int c = 0; c < 3; ++c) acc[c][y][dst_x] = normalize_pixel(row[x * 3 + c]);
        }
    }
    return out;
}

torch::Tensor preprocess(const RawImage& raw, const PreprocessConfig& config, bool training,
                         std::mt19937_64& rng) {
    bool flip = false;
    if (training) flip = std::bernoulli_distribution(config.flip_probability)(rng);
    return preprocess(raw, config, flip);
}

RawImage to_raw_image(const torch::Tensor& image) {
    if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a 3xHxW image tensor");
    auto t = image.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    auto acc = t.accessor<float, 3>();
    RawImage out;
    out.height = static_cast<int>(t.size(1));
    out.width = static_cast<int>(t.size(2));
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = denormalize_value(acc[c][y][x]);
    return out;
}

PairDataset::PairDataset(const Manifest& manifest, Split split, PreprocessConfig config)
    : config_(config) {
    config_.validate();
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        ids_.push_back(e.id);
        photos_.push_back(read_image(e.photo));
        sketches_.push_back(read_image(e.sketch));
    }
}

ImagePair PairDataset::item(std::size_t index, bool training, std::mt19937_64& rng) const {
    bool flip = false;
    if (training) flip = std::bernoulli_distribution(config_.flip_probability)(rng);
    return {ids_.at(index), preprocess(photos_.at(index), config_, flip),
            preprocess(sketches_.at(index), config_, flip)};
}

PairBatch PairDataset::collate(const std::vector<std::size_t>& indices, bool training,
                               std::mt19937_64& rng) const {
    PairBatch batch;
    std::vector<torch::Tensor> photos, sketches;
    for (auto i : indices) {
        auto pair = item(i, training, rng);
        batch.ids.push_back(pair.id);
        photos.push_back(pair.photo);
        sketches.push_back(pair.sketch);
    }
    batch.photos = torch::stack(photos);
    batch.sketches = torch::stack(sketches);
    return batch;
}

BatchIterator::BatchIterator(std::size_t count, std::size_t batch_size, bool shuffle,
                             std::uint64_t seed)
    : count_(count), batch_size_(batch_size), shuffle_(shuffle), seed_(seed) {
    if (count_ == 0) throw Error("batch iterator: split is empty");
    if (batch_size_ == 0) throw Error("batch iterator: batch_size must be positive");
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch(std::int64_t epoch_index) const {
    std::vector<std::size_t> order(count_);
    for (std::size_t i = 0; i < count_; ++i) order[i] = i;
    if (shuffle_) {
        std::seed_seq seq{seed_ & 0xffffffffu, seed_ >> 32, static_cast<std::uint64_t>(epoch_index)};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count_; start += batch_size_)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(count_, start + batch_size_)));
    return batches;
}

BatchIterator batch_iterator(const Manifest& manifest, Split split, std::size_t batch_size,
                             bool shuffle, std::uint64_t seed) {
    const auto n = manifest.count(split);
    if (n == 0) throw Error("batch iterator: split '" + std::string(to_string(split)) + "' is empty");
    return BatchIterator(n, batch_size, shuffle, seed);
}

}  // namespace facecycle
