#include "facecycle/fixture.hpp"

#include <cstdio>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "facecycle/error.hpp"

namespace facecycle {
namespace {

struct FaceGeometry {
    cv::Point2d centre;
    cv::Size2d face;  // half-axes
    double hair_drop;
    double eye_dx, eye_y, eye_r;
    double brow_tilt;
    double nose_len;
    double mouth_w, mouth_y, mouth_curve;
    bool glasses;
    bool beard;
    cv::Scalar skin, hair, background, lips;  // BGR
};

FaceGeometry sample_geometry(std::mt19937_64& rng, int size) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    const double s = size;
    FaceGeometry g;
    g.centre = {s * 0.5, s * range(0.52, 0.56)};
    g.face = {s * range(0.26, 0.36), s * range(0.34, 0.42)};
    g.hair_drop = range(0.15, 0.45);
    g.eye_dx = s * range(0.10, 0.17);
    g.eye_y = s * range(0.42, 0.49);
    g.eye_r = s * range(0.03, 0.055);
    g.brow_tilt = range(-0.35, 0.35);
    g.nose_len = s * range(0.08, 0.15);
    g.mouth_w = s * range(0.07, 0.15);
    g.mouth_y = s * range(0.68, 0.75);
    g.mouth_curve = range(-0.5, 0.5);
    g.glasses = u(rng) < 0.4;
    g.beard = u(rng) < 0.3;
    g.skin = cv::Scalar(range(90, 190), range(120, 200), range(160, 235));
    g.hair = cv::Scalar(range(10, 90), range(10, 80), range(10, 110));
    g.background = cv::Scalar(range(60, 220), range(60, 220), range(60, 220));
    g.lips = cv::Scalar(range(60, 110), range(60, 100), range(150, 210));
    return g;
}

// Draws the facial features shared by both renderings.
void draw_features(cv::Mat& img, const FaceGeometry& g, const cv::Scalar& ink, int thick,
                   bool filled_eyes, const cv::Scalar& mouth_colour) {
    const int aa = cv::LINE_AA;
    for (int side : {-1, 1}) {
        cv::Point2d eye(g.centre.x + side * g.eye_dx, g.eye_y);
        if (filled_eyes) {
            cv::ellipse(img, eye, cv::Size2d(g.eye_r * 1.4, g.eye_r * 0.8), 0, 0, 360,
                        cv::Scalar(245, 245, 245), cv::FILLED, aa);
            cv::circle(img, eye, static_cast<int>(g.eye_r * 0.7 + 0.5), ink, cv::FILLED, aa);
        } else {
            cv::ellipse(img, eye, cv::Size2d(g.eye_r * 1.4, g.eye_r * 0.8), 0, 0, 360, ink, thick, aa);
            cv::circle(img, eye, std::max(1, static_cast<int>(g.eye_r * 0.5)), ink, cv::FILLED, aa);
        }
        const double by = g.eye_y - g.eye_r * 2.0;
        cv::line(img, cv::Point2d{eye.x - g.eye_r * 1.6, by + side * g.brow_tilt * g.eye_r},
                 cv::Point2d{eye.x + g.eye_r * 1.6, by - side * g.brow_tilt * g.eye_r}, ink, thick + 1, aa);
        if (g.glasses)
            cv::circle(img, eye, static_cast<int>(g.eye_r * 2.0 + 0.5), ink, thick, aa);
    }
    if (g.glasses)
        cv::line(img, cv::Point2d{g.centre.x - g.eye_dx + g.eye_r * 2.0, g.eye_y},
                 cv::Point2d{g.centre.x + g.eye_dx - g.eye_r * 2.0, g.eye_y}, ink, thick, aa);
    cv::line(img, cv::Point2d{g.centre.x, g.eye_y + g.eye_r}, cv::Point2d{g.centre.x + g.eye_r * 0.8, g.eye_y + g.nose_len},
             ink, thick, aa);
    cv::line(img, cv::Point2d{g.centre.x + g.eye_r * 0.8, g.eye_y + g.nose_len},
             cv::Point2d{g.centre.x - g.eye_r * 0.6, g.eye_y + g.nose_len}, ink, thick, aa);
    const double curve = g.mouth_curve * g.mouth_w * 0.5;
    cv::ellipse(img, cv::Point2d(g.centre.x, g.mouth_y), cv::Size2d(g.mouth_w, std::abs(curve) + 1.0),
                0, curve >= 0 ? 0 : 180, curve >= 0 ? 180 : 360, mouth_colour, thick + 1, aa);
}

cv::Mat render_photo(const FaceGeometry& g, int size) {
    cv::Mat img(size, size, CV_8UC3, g.background);
    for (int y = 0; y < size; ++y) {  // vertical illumination ramp
        auto* row = img.ptr<cv::Vec3b>(y);
        const double f = 0.75 + 0.5 * y / size;
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<std::uint8_t>(row[x][c] * f);
    }
    const int aa = cv::LINE_AA;
    cv::ellipse(img, g.centre - cv::Point2d(0, g.face.height * 0.15),
                cv::Size2d(g.face.width * 1.12, g.face.height * 1.05), 0, 180, 360, g.hair, cv::FILLED, aa);
    cv::ellipse(img, g.centre, g.face, 0, 0, 360, g.skin, cv::FILLED, aa);
    const double hair_line = g.centre.y - g.face.height * (1.0 - g.hair_drop * 0.5);
    cv::ellipse(img, cv::Point2d(g.centre.x, hair_line), cv::Size2d(g.face.width * 1.0, g.face.height * g.hair_drop),
                0, 180, 360, g.hair, cv::FILLED, aa);
    if (g.beard)
        cv::ellipse(img, g.centre + cv::Point2d(0, g.face.height * 0.55),
                    cv::Size2d(g.face.width * 0.7, g.face.height * 0.42), 0, 0, 180, g.hair * 1.2,
                    cv::FILLED, aa);
    draw_features(img, g, g.hair * 0.6, 1, true, g.lips);
    cv::GaussianBlur(img, img, cv::Size(3, 3), 0.6);
    return img;
}

cv::Mat render_sketch(const FaceGeometry& g, int size) {
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(238, 238, 238));
    const cv::Scalar ink(40, 40, 40);
    const cv::Scalar shade(150, 150, 150);
    const int aa = cv::LINE_AA;
    cv::ellipse(img, g.centre - cv::Point2d(0, g.face.height * 0.15),
                cv::Size2d(g.face.width * 1.12, g.face.height * 1.05), 0, 180, 360, shade, cv::FILLED, aa);
    // Hair hatching.
    for (int x = 0; x < size; x += 3)
        cv::line(img, cv::Point(x, 0), cv::Point(x + size / 10, size), cv::Scalar(238, 238, 238), 1);
    cv::ellipse(img, g.centre, g.face, 0, 0, 360, cv::Scalar(238, 238, 238), cv::FILLED, aa);
    cv::ellipse(img, g.centre, g.face, 0, 0, 360, ink, 1, aa);
    const double hair_line = g.centre.y - g.face.height * (1.0 - g.hair_drop * 0.5);
    cv::ellipse(img, cv::Point2d(g.centre.x, hair_line), cv::Size2d(g.face.width * 1.0, g.face.height * g.hair_drop),
                0, 180, 360, shade, cv::FILLED, aa);
    cv::ellipse(img, cv::Point2d(g.centre.x, hair_line), cv::Size2d(g.face.width * 1.0, g.face.height * g.hair_drop),
                0, 180, 360, ink, 1, aa);
    if (g.beard)
        cv::ellipse(img, g.centre + cv::Point2d(0, g.face.height * 0.55),
                    cv::Size2d(g.face.width * 0.7, g.face.height * 0.42), 0, 0, 180, shade, 2, aa);
    draw_features(img, g, ink, 1, false, ink);
    cv::Mat gray;
    cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
    return gray;
}

}  // namespace

Manifest make_fixture(const std::filesystem::path& dir, const FixtureConfig& config) {
    if (config.train_identities < 1 || config.test_identities < 0 || config.image_size < 16)
        throw ConfigError("fixture", "needs >= 1 train identity and image_size >= 16");
    std::filesystem::create_directories(dir / "photos");
    std::filesystem::create_directories(dir / "sketches");
    std::mt19937_64 rng(config.seed);
    const auto manifest_path = dir / "manifest.jsonl";
    Manifest manifest;
    const int total = config.train_identities + config.test_identities;
    for (int i = 0; i < total; ++i) {
        const auto g = sample_geometry(rng, config.image_size);
        char id[16];
        std::snprintf(id, sizeof id, "s%03d", i);
        ManifestEntry entry;
        entry.id = id;
        entry.photo = dir / "photos" / (entry.id + ".png");
        entry.sketch = dir / "sketches" / (entry.id + ".png");
        entry.split = i < config.train_identities ? Split::train : Split::test;
        if (!cv::imwrite(entry.photo.string(), render_photo(g, config.image_size)) ||
            !cv::imwrite(entry.sketch.string(), render_sketch(g, config.image_size)))
            throw ImageError("cannot write fixture images under " + dir.string());
        manifest.entries.push_back(std::move(entry));
    }
    save_manifest(manifest, manifest_path);
    return load_manifest(manifest_path);
}

}  // namespace facecycle
