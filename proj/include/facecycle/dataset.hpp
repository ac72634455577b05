#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace facecycle {

namespace fs = std::filesystem;

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// One identity: exactly one photo and one sketch. Generated manifests also
/// carry the synthesized counterparts.
struct ManifestEntry {
    std::string id;
    fs::path photo;
    fs::path sketch;
    Split split = Split::train;
    std::optional<fs::path> fake_photo;
    std::optional<fs::path> fake_sketch;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(Split which) const;
    std::size_t count(Split which) const;
    std::size_t size() const { return entries.size(); }
};

/// Reads a JSON-lines manifest (`id`, `photo`, `sketch`, `split`, optional
/// `fake_photo`/`fake_sketch`). Relative paths resolve against the manifest's
/// directory. Throws ManifestError.
Manifest load_manifest(const fs::path& path);
Manifest parse_manifest(std::string_view text, const fs::path& base_dir,
                        const std::string& source = "<memory>");
/// Paths below the manifest's directory are written relative to it.
void save_manifest(const Manifest& manifest, const fs::path& path);

/// 8-bit interleaved RGB.
struct RawImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Decodes PNG/JPEG; grayscale is expanded to three channels. Throws ImageError.
RawImage read_image(const fs::path& path);
void write_png(const RawImage& image, const fs::path& path);

struct PreprocessConfig {
    int target_size = 256;
    double flip_probability = 0.5;

    void validate() const;
};

inline float normalize_pixel(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }
std::uint8_t denormalize_value(float v);

/// 3×S×S float tensor in [-1, 1]. Non-square or off-size inputs are resized
/// bilinearly. The flip is drawn from `rng` only when `training` is set.
torch::Tensor preprocess(const RawImage& raw, const PreprocessConfig& config, bool training,
                         std::mt19937_64& rng);
torch::Tensor preprocess(const RawImage& raw, const PreprocessConfig& config, bool flip);
/// Inverse of preprocess for a 3×H×W tensor (no flip).
RawImage to_raw_image(const torch::Tensor& image);

struct ImagePair {
    std::string id;
    torch::Tensor photo;   // 3×S×S
    torch::Tensor sketch;  // 3×S×S
};

struct PairBatch {
    std::vector<std::string> ids;
    torch::Tensor photos;    // B×3×S×S
    torch::Tensor sketches;  // B×3×S×S

    std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
};

/// Decoded pairs of one split, kept in memory.
class PairDataset {
public:
    PairDataset(const Manifest& manifest, Split split, PreprocessConfig config);

    std::size_t size() const { return ids_.size(); }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    const PreprocessConfig& config() const { return config_; }

    /// Photo and sketch share one flip decision.
    ImagePair item(std::size_t index, bool training, std::mt19937_64& rng) const;
    PairBatch collate(const std::vector<std::size_t>& indices, bool training,
                      std::mt19937_64& rng) const;

private:
    std::vector<std::string> ids_;
    std::vector<RawImage> photos_;
    std::vector<RawImage> sketches_;
    PreprocessConfig config_;
};

/// Seeded epoch partitioner. Every epoch visits each index exactly once.
class BatchIterator {
public:
    BatchIterator(std::size_t count, std::size_t batch_size, bool shuffle, std::uint64_t seed);

    std::size_t batches_per_epoch() const { return (count_ + batch_size_ - 1) / batch_size_; }
    std::vector<std::vector<std::size_t>> epoch(std::int64_t epoch_index) const;

private:
    std::size_t count_;
    std::size_t batch_size_;
    bool shuffle_;
    std::uint64_t seed_;
};

/// Throws Error when the split is empty or the batch size is zero.
BatchIterator batch_iterator(const Manifest& manifest, Split split, std::size_t batch_size,
                             bool shuffle, std::uint64_t seed);

}  // namespace facecycle
