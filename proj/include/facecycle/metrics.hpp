#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "facecycle/dataset.hpp"

namespace facecycle {

struct QualityConfig {
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    int fsim_scales = 4;
    int fsim_orientations = 4;
    /// Dynamic range L of the luminance the SSIM constants refer to ([0,1] scale).
    double dynamic_range = 1.0;

    void validate() const;
};

/// Single-channel luminance in [0, 1], row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// BT.601 luma of an RGB image, scaled to [0, 1].
GrayImage luminance(const RawImage& image);
GrayImage flip_horizontal(const GrayImage& image);

/// Mean of the Gaussian-weighted local SSIM map (reflective borders).
/// Throws ShapeError on size mismatch or when the image is smaller than the window.
double ssim(const GrayImage& a, const GrayImage& b, const QualityConfig& config = {});
double ssim(const RawImage& a, const RawImage& b, const QualityConfig& config = {});

/// Phase congruency (log-Gabor bank, scales × orientations) of a luminance image.
/// Computed on the even-symmetric extension of the image, so borders reflect.
std::vector<double> phase_congruency(const GrayImage& image, const QualityConfig& config = {});

/// FSIM on luminance. Throws ShapeError on size mismatch.
double fsim(const GrayImage& a, const GrayImage& b, const QualityConfig& config = {});
double fsim(const RawImage& a, const RawImage& b, const QualityConfig& config = {});

struct QualityRow {
    std::string id;
    double ssim = 0.0;
    double fsim = 0.0;
};

struct MetricReport {
    std::vector<QualityRow> per_image;
    double mean_ssim = 0.0;
    double mean_fsim = 0.0;
    std::size_t count = 0;

    /// Recomputes the aggregates from per_image.
    void finalize();
    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
    void write_json(const std::filesystem::path& path) const;
    void write_csv(const std::filesystem::path& path) const;
};

enum class Modality { photo, sketch };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view name);

/// Scores each generated image of `split` against the real image of the same id.
/// `modality` picks fake_sketch vs sketch or fake_photo vs photo. Reals are
/// resized to the fake's resolution when they differ. Throws Error on id mismatch.
MetricReport evaluate_quality(const Manifest& fake_manifest, const Manifest& real_manifest, Modality modality,
                              Split split, const QualityConfig& config = {});

/// Pairs images of two directories by file name. Throws Error when the name sets differ.
MetricReport evaluate_quality_dirs(const std::filesystem::path& fake_dir, const std::filesystem::path& real_dir,
                                   const QualityConfig& config = {});

/// One row of a method × dataset × direction summary table.
struct QualitySummaryRow {
    std::string method;
    std::string dataset;
    std::string direction;
    double mean_ssim = 0.0;
    double mean_fsim = 0.0;
};

void write_summary_csv(const std::vector<QualitySummaryRow>& rows, const std::filesystem::path& path);

}  // namespace facecycle
