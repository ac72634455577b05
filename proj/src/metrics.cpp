#include "facecycle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "facecycle/error.hpp"

namespace facecycle {

void QualityConfig::validate() const {
    if (ssim_window < 3 || ssim_window % 2 == 0) throw ConfigError("quality.ssim_window", "must be odd and >= 3");
    if (!(ssim_sigma > 0.0)) throw ConfigError("quality.ssim_sigma", "must be > 0");
    if (!(ssim_k1 > 0.0)) throw ConfigError("quality.ssim_k1", "must be > 0");
    if (!(ssim_k2 > 0.0)) throw ConfigError("quality.ssim_k2", "must be > 0");
    if (fsim_scales < 1) throw ConfigError("quality.fsim_scales", "must be >= 1");
    if (fsim_orientations < 1) throw ConfigError("quality.fsim_orientations", "must be >= 1");
    if (!(dynamic_range > 0.0)) throw ConfigError("quality.dynamic_range", "must be > 0");
}

GrayImage luminance(const RawImage& image) {
    GrayImage out{image.width, image.height, std::vector<double>(static_cast<std::size_t>(image.width) * image.height)};
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const auto* p = &image.pixels[i * 3];
        out.pixels[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
    return out;
}

GrayImage flip_horizontal(const GrayImage& image) {
    GrayImage out = image;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            out.pixels[static_cast<std::size_t>(y) * image.width + x] = image.at(y, image.width - 1 - x);
    return out;
}

namespace {

void require_same_shape(const GrayImage& a, const GrayImage& b, const char* what) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height) + ")");
    if (a.width < 1 || a.height < 1) throw ShapeError(std::string(what) + ": empty image");
}

cv::Mat as_mat(const GrayImage& image, double scale = 1.0) {
    cv::Mat m(image.height, image.width, CV_64F);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) m.at<double>(y, x) = image.at(y, x) * scale;
    return m;
}

double mean_of(const cv::Mat& m) { return cv::sum(m)[0] / static_cast<double>(m.total()); }

}  // namespace

double ssim(const GrayImage& a, const GrayImage& b, const QualityConfig& config) {
    config.validate();
    require_same_shape(a, b, "ssim");
    if (a.width < config.ssim_window || a.height < config.ssim_window)
        throw ShapeError("ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                         " is smaller than the " + std::to_string(config.ssim_window) + "-pixel window");
    const double c1 = std::pow(config.ssim_k1 * config.dynamic_range, 2);
    const double c2 = std::pow(config.ssim_k2 * config.dynamic_range, 2);
    const cv::Mat kernel = cv::getGaussianKernel(config.ssim_window, config.ssim_sigma, CV_64F);
    auto blur = [&](const cv::Mat& m) {
        cv::Mat out;
        cv::sepFilter2D(m, out, CV_64F, kernel, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
        return out;
    };
    const cv::Mat x = as_mat(a), y = as_mat(b);
    const cv::Mat mu_x = blur(x), mu_y = blur(y);
    const cv::Mat mu_xx = mu_x.mul(mu_x), mu_yy = mu_y.mul(mu_y), mu_xy = mu_x.mul(mu_y);
    const cv::Mat s_xx = blur(x.mul(x)) - mu_xx;
    const cv::Mat s_yy = blur(y.mul(y)) - mu_yy;
    const cv::Mat s_xy = blur(x.mul(y)) - mu_xy;
    cv::Mat num = (2.0 * mu_xy + c1).mul(2.0 * s_xy + c2);
    cv::Mat den = (mu_xx + mu_yy + c1).mul(s_xx + s_yy + c2);
    cv::Mat map;
    cv::divide(num, den, map);
    return mean_of(map);
}

double ssim(const RawImage& a, const RawImage& b, const QualityConfig& config) {
    return ssim(luminance(a), luminance(b), config);
}

// ---------------------------------------------------------------------------
// Phase congruency

namespace {

// Frequency coordinate of DFT index i for an even length n, in cycles/pixel.
double freq(int i, int n) { return (i < n / 2 ? i : i - n) / static_cast<double>(n); }

cv::Mat inverse_dft(const cv::Mat& spectrum) {
    cv::Mat out;
    cv::idft(spectrum, out, cv::DFT_COMPLEX_OUTPUT | cv::DFT_SCALE);
    return out;
}

cv::Mat apply_filter(const cv::Mat& spectrum, const cv::Mat& filter) {
    cv::Mat f2;
    cv::merge(std::vector<cv::Mat>{filter, filter}, f2);
    return spectrum.mul(f2);
}

double median_of(std::vector<double> v) {
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> phase_congruency(const GrayImage& image, const QualityConfig& config) {
    constexpr double kMinWaveLength = 6.0;
    constexpr double kMult = 2.0;
    constexpr double kSigmaOnf = 0.55;
    constexpr double kDThetaOnSigma = 1.2;
    constexpr double kNoiseK = 2.0;
    constexpr double kEps = 1e-4;
    constexpr double kLowpassCutoff = 0.45;
    constexpr int kLowpassOrder = 15;
    const double pi = std::numbers::pi;

    const int h = image.height, w = image.width;
    const int rows = 2 * h, cols = 2 * w;
    const int nscale = config.fsim_scales, norient = config.fsim_orientations;
    const double theta_sigma = pi / norient / kDThetaOnSigma;

    // Even-symmetric extension [I, flip(I); flip(I), flip(flip(I))].
    cv::Mat base = as_mat(image), ext;
    cv::copyMakeBorder(base, ext, 0, h, 0, w, cv::BORDER_REFLECT);
    cv::Mat spectrum;
    cv::dft(ext, spectrum, cv::DFT_COMPLEX_OUTPUT);

    cv::Mat radius(rows, cols, CV_64F), sin_t(rows, cols, CV_64F), cos_t(rows, cols, CV_64F), lowpass(rows, cols, CV_64F);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double fx = freq(c, cols), fy = freq(r, rows);
            const double rad = std::sqrt(fx * fx + fy * fy);
            const double th = std::atan2(-fy, fx);
            lowpass.at<double>(r, c) = 1.0 / (1.0 + std::pow(rad / kLowpassCutoff, 2 * kLowpassOrder));
            radius.at<double>(r, c) = (r == 0 && c == 0) ? 1.0 : rad;
            sin_t.at<double>(r, c) = std::sin(th);
            cos_t.at<double>(r, c) = std::cos(th);
        }

    std::vector<cv::Mat> log_gabor(static_cast<std::size_t>(nscale));
    for (int s = 0; s < nscale; ++s) {
        const double fo = 1.0 / (kMinWaveLength * std::pow(kMult, s));
        cv::Mat lg(rows, cols, CV_64F);
        const double denom = 2.0 * std::pow(std::log(kSigmaOnf), 2);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double l = std::log(radius.at<double>(r, c) / fo);
                lg.at<double>(r, c) = std::exp(-l * l / denom) * lowpass.at<double>(r, c);
            }
        lg.at<double>(0, 0) = 0.0;
        log_gabor[static_cast<std::size_t>(s)] = lg;
    }

    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    std::vector<double> energy_all(n, 0.0), an_all(n, 0.0);
    for (int o = 0; o < norient; ++o) {
        const double angle = o * pi / norient;
        cv::Mat spread(rows, cols, CV_64F);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double st = sin_t.at<double>(r, c), ct = cos_t.at<double>(r, c);
                const double ds = st * std::cos(angle) - ct * std::sin(angle);
                const double dc = ct * std::cos(angle) + st * std::sin(angle);
                const double dtheta = std::abs(std::atan2(ds, dc));
                spread.at<double>(r, c) = std::exp(-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma));
            }

        std::vector<cv::Mat> eo(static_cast<std::size_t>(nscale));
        std::vector<cv::Mat> ifft_filters(static_cast<std::size_t>(nscale));
        std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
        double em_n = 0.0;
        for (int s = 0; s < nscale; ++s) {
            const cv::Mat filter = log_gabor[static_cast<std::size_t>(s)].mul(spread);
            cv::Mat filter_c;
            cv::merge(std::vector<cv::Mat>{filter, cv::Mat::zeros(rows, cols, CV_64F)}, filter_c);
            std::vector<cv::Mat> parts;
            cv::split(inverse_dft(filter_c), parts);
            ifft_filters[static_cast<std::size_t>(s)] = parts[0] * std::sqrt(static_cast<double>(n));
            eo[static_cast<std::size_t>(s)] = inverse_dft(apply_filter(spectrum, filter));
            const auto* p = eo[static_cast<std::size_t>(s)].ptr<cv::Vec2d>();
            for (std::size_t i = 0; i < n; ++i) {
                sum_e[i] += p[i][0];
                sum_o[i] += p[i][1];
                sum_an[i] += std::hypot(p[i][0], p[i][1]);
            }
            if (s == 0) em_n = cv::sum(filter.mul(filter))[0];
        }

        std::vector<double> energy(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double x_energy = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + kEps;
            const double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
            for (int s = 0; s < nscale; ++s) {
                const auto v = eo[static_cast<std::size_t>(s)].ptr<cv::Vec2d>()[i];
                energy[i] += v[0] * mean_e + v[1] * mean_o - std::abs(v[0] * mean_o - v[1] * mean_e);
            }
        }

        // Noise threshold from the smallest-scale response.
        std::vector<double> e2(n);
        const auto* p0 = eo[0].ptr<cv::Vec2d>();
        for (std::size_t i = 0; i < n; ++i) e2[i] = p0[i][0] * p0[i][0] + p0[i][1] * p0[i][1];
        const double mean_e2n = -median_of(std::move(e2)) / std::log(0.5);
        const double noise_power = em_n > 0.0 ? mean_e2n / em_n : 0.0;
        double sum_an2 = 0.0, sum_aiaj = 0.0;
        for (int si = 0; si < nscale; ++si) {
            sum_an2 += cv::sum(ifft_filters[static_cast<std::size_t>(si)].mul(ifft_filters[static_cast<std::size_t>(si)]))[0];
            for (int sj = si + 1; sj < nscale; ++sj)
                sum_aiaj += cv::sum(ifft_filters[static_cast<std::size_t>(si)].mul(ifft_filters[static_cast<std::size_t>(sj)]))[0];
        }
        const double noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
        const double tau = std::sqrt(std::max(noise_energy2, 0.0) / 2.0);
        const double noise_mean = tau * std::sqrt(pi / 2.0);
        const double noise_sigma = std::sqrt((2.0 - pi / 2.0) * tau * tau);
        const double threshold = (noise_mean + kNoiseK * noise_sigma) / 1.7;

        for (std::size_t i = 0; i < n; ++i) {
            energy_all[i] += std::max(energy[i] - threshold, 0.0);
            an_all[i] += sum_an[i];
        }
    }

    std::vector<double> pc(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            pc[static_cast<std::size_t>(r) * w + c] = energy_all[i] / (an_all[i] + 1e-12);
        }
    return pc;
}

namespace {

GrayImage downsample_for_fsim(const GrayImage& image) {
    const int f = std::max(1, static_cast<int>(std::lround(std::min(image.width, image.height) / 256.0)));
    if (f == 1) return image;
    cv::Mat m = as_mat(image), avg;
    cv::blur(m, avg, cv::Size(f, f), cv::Point(-1, -1), cv::BORDER_REFLECT);
    GrayImage out;
    out.width = (image.width + f - 1) / f;
    out.height = (image.height + f - 1) / f;
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.pixels[static_cast<std::size_t>(y) * out.width + x] = avg.at<double>(y * f, x * f);
    return out;
}

cv::Mat gradient_magnitude(const GrayImage& image) {
    const cv::Mat kx = (cv::Mat_<double>(3, 3) << 3, 0, -3, 10, 0, -10, 3, 0, -3) / 16.0;
    const cv::Mat ky = kx.t();
    const cv::Mat m = as_mat(image, 255.0);
    cv::Mat gx, gy, mag;
    cv::filter2D(m, gx, CV_64F, kx, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
    cv::filter2D(m, gy, CV_64F, ky, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT);
    cv::magnitude(gx, gy, mag);
    return mag;
}

}  // namespace

double fsim(const GrayImage& a, const GrayImage& b, const QualityConfig& config) {
    config.validate();
    require_same_shape(a, b, "fsim");
    constexpr double kT1 = 0.85;
    constexpr double kT2 = 160.0;
    const GrayImage da = downsample_for_fsim(a), db = downsample_for_fsim(b);
    // Phase congruency on the 0-255 scale, matching the reference implementation.
    GrayImage sa = da, sb = db;
    for (auto& v : sa.pixels) v *= 255.0;
    for (auto& v : sb.pixels) v *= 255.0;
    const auto pc1 = phase_congruency(sa, config);
    const auto pc2 = phase_congruency(sb, config);
    const cv::Mat g1 = gradient_magnitude(da), g2 = gradient_magnitude(db);
    const auto* gp1 = g1.ptr<double>();
    const auto* gp2 = g2.ptr<double>();
    double num = 0.0, den = 0.0, plain = 0.0;
    for (std::size_t i = 0; i < pc1.size(); ++i) {
        const double s_pc = (2.0 * pc1[i] * pc2[i] + kT1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + kT1);
        const double s_g = (2.0 * gp1[i] * gp2[i] + kT2) / (gp1[i] * gp1[i] + gp2[i] * gp2[i] + kT2);
        const double pcm = std::max(pc1[i], pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
        plain += s_pc * s_g;
    }
    // Featureless pair (no phase congruency anywhere): fall back to the unweighted mean.
    if (!(den > 0.0)) return plain / static_cast<double>(pc1.size());
    return num / den;
}

double fsim(const RawImage& a, const RawImage& b, const QualityConfig& config) {
    return fsim(luminance(a), luminance(b), config);
}

// ---------------------------------------------------------------------------
// Reports

void MetricReport::finalize() {
    count = per_image.size();
    double s = 0.0, f = 0.0;
    for (const auto& row : per_image) {
        s += row.ssim;
        f += row.fsim;
    }
    mean_ssim = count ? s / static_cast<double>(count) : 0.0;
    mean_fsim = count ? f / static_cast<double>(count) : 0.0;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : per_image) rows.push_back({{"id", r.id}, {"ssim", r.ssim}, {"fsim", r.fsim}});
    return {{"per_image", rows},
            {"aggregates", {{"mean_ssim", mean_ssim}, {"mean_fsim", mean_fsim}, {"count", count}}}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport report;
    for (const auto& r : j.at("per_image"))
        report.per_image.push_back({r.at("id").get<std::string>(), r.at("ssim").get<double>(), r.at("fsim").get<double>()});
    report.finalize();
    return report;
}

void MetricReport::write_json(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(17) << "id,ssim,fsim\n";
    for (const auto& r : per_image) out << r.id << ',' << r.ssim << ',' << r.fsim << '\n';
}

std::string_view to_string(Modality modality) { return modality == Modality::photo ? "photo" : "sketch"; }

Modality parse_modality(std::string_view name) {
    if (name == "photo") return Modality::photo;
    if (name == "sketch") return Modality::sketch;
    throw Error("unknown modality '" + std::string(name) + "' (expected photo|sketch)");
}

namespace {

RawImage resize_to(const RawImage& image, int width, int height) {
    if (image.width == width && image.height == height) return image;
    cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    RawImage out{width, height, std::vector<std::uint8_t>(dst.data, dst.data + dst.total() * 3)};
    return out;
}

QualityRow score_pair(const std::string& id, const RawImage& fake, const RawImage& real, const QualityConfig& config) {
    const auto a = luminance(fake);
    const auto b = luminance(resize_to(real, fake.width, fake.height));
    return {id, ssim(a, b, config), fsim(a, b, config)};
}

}  // namespace

MetricReport evaluate_quality(const Manifest& fake_manifest, const Manifest& real_manifest, Modality modality,
                              Split split, const QualityConfig& config) {
    config.validate();
    std::map<std::string, const ManifestEntry*> reals;
    for (const auto& e : real_manifest.entries)
        if (e.split == split) reals.emplace(e.id, &e);
    MetricReport report;
    std::set<std::string> seen;
    for (const auto& e : fake_manifest.entries) {
        if (e.split != split) continue;
        auto it = reals.find(e.id);
        if (it == reals.end()) throw Error("evaluate_quality: id '" + e.id + "' has no real counterpart");
        const auto& fake_path = modality == Modality::photo ? e.fake_photo : e.fake_sketch;
        if (!fake_path)
            throw Error("evaluate_quality: id '" + e.id + "' has no fake_" + std::string(to_string(modality)));
        const auto& real_path = modality == Modality::photo ? it->second->photo : it->second->sketch;
        report.per_image.push_back(score_pair(e.id, read_image(*fake_path), read_image(real_path), config));
        seen.insert(e.id);
    }
    for (const auto& [id, _] : reals)
        if (!seen.count(id)) throw Error("evaluate_quality: id '" + id + "' has no generated counterpart");
    report.finalize();
    return report;
}

namespace {

std::map<std::string, std::filesystem::path> list_images(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::map<std::string, std::filesystem::path> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            out.emplace(entry.path().filename().string(), entry.path());
    }
    return out;
}

}  // namespace

MetricReport evaluate_quality_dirs(const std::filesystem::path& fake_dir, const std::filesystem::path& real_dir,
                                   const QualityConfig& config) {
    config.validate();
    const auto fakes = list_images(fake_dir);
    const auto reals = list_images(real_dir);
    for (const auto& [name, _] : fakes)
        if (!reals.count(name)) throw Error("evaluate_quality: " + name + " missing from " + real_dir.string());
    for (const auto& [name, _] : reals)
        if (!fakes.count(name)) throw Error("evaluate_quality: " + name + " missing from " + fake_dir.string());
    MetricReport report;
    for (const auto& [name, path] : fakes)
        report.per_image.push_back(
            score_pair(std::filesystem::path(name).stem().string(), read_image(path), read_image(reals.at(name)), config));
    report.finalize();
    return report;
}

void write_summary_csv(const std::vector<QualitySummaryRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << std::setprecision(6) << "method,dataset,direction,ssim_percent,fsim_percent\n";
    for (const auto& r : rows)
        out << r.method << ',' << r.dataset << ',' << r.direction << ',' << 100.0 * r.mean_ssim << ','
            << 100.0 * r.mean_fsim << '\n';
}

}  // namespace facecycle
