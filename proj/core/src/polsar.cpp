#include <dbgc/polsar.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include <dbgc/error.hpp>
#include <dbgc/io.hpp>
#include <dbgc/rng.hpp>

namespace dbgc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// CoherencyImage
// ---------------------------------------------------------------------------

CoherencyImage::CoherencyImage(int height, int width)
    : height_(height), width_(width) {
    const auto n = static_cast<std::size_t>(height) * width;
    t11_.assign(n, 0.0);
    t22_.assign(n, 0.0);
    t33_.assign(n, 0.0);
    t12_.assign(n, {0.0, 0.0});
    t13_.assign(n, {0.0, 0.0});
    t23_.assign(n, {0.0, 0.0});
}

Eigen::Matrix3cd CoherencyImage::at(int r, int c) const {
    const std::size_t i = index(r, c);
    Eigen::Matrix3cd t;
    t(0, 0) = t11_[i];
    t(1, 1) = t22_[i];
    t(2, 2) = t33_[i];
    t(0, 1) = t12_[i];
    t(0, 2) = t13_[i];
    t(1, 2) = t23_[i];
    t(1, 0) = std::conj(t12_[i]);
    t(2, 0) = std::conj(t13_[i]);
    t(2, 1) = std::conj(t23_[i]);
    return t;
}

void CoherencyImage::set(int r, int c, const Eigen::Matrix3cd& t) {
    const double scale = std::max(1.0, t.cwiseAbs().maxCoeff());
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            const auto diff = std::abs(t(a, b) - std::conj(t(b, a)));
            if (diff > 1e-9 * scale) {
                fail(ErrorCode::CorruptData,
                     "matrix is not Hermitian at pixel (" +
                         std::to_string(r) + ", " + std::to_string(c) + ")");
            }
        }
    }
    for (int a = 0; a < 3; ++a) {
        if (!(t(a, a).real() >= -1e-9 * scale)) {
            fail(ErrorCode::CorruptData,
                 "negative diagonal at pixel (" + std::to_string(r) + ", " +
                     std::to_string(c) + ")");
        }
    }
    const std::size_t i = index(r, c);
    t11_[i] = std::max(0.0, t(0, 0).real());
    t22_[i] = std::max(0.0, t(1, 1).real());
    t33_[i] = std::max(0.0, t(2, 2).real());
    // Hermitian average removes rounding skew between t(a,b) and t(b,a).
    t12_[i] = 0.5 * (t(0, 1) + std::conj(t(1, 0)));
    t13_[i] = 0.5 * (t(0, 2) + std::conj(t(2, 0)));
    t23_[i] = 0.5 * (t(1, 2) + std::conj(t(2, 1)));
}

void CoherencyImage::validate() const {
    const auto n = pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const bool finite =
            std::isfinite(t11_[i]) && std::isfinite(t22_[i]) &&
            std::isfinite(t33_[i]) && std::isfinite(t12_[i].real()) &&
            std::isfinite(t12_[i].imag()) && std::isfinite(t13_[i].real()) &&
            std::isfinite(t13_[i].imag()) && std::isfinite(t23_[i].real()) &&
            std::isfinite(t23_[i].imag());
        if (!finite) {
            fail(ErrorCode::CorruptData,
                 "non-finite coherency value at pixel " + std::to_string(i));
        }
        if (t11_[i] < 0 || t22_[i] < 0 || t33_[i] < 0) {
            fail(ErrorCode::CorruptData,
                 "negative diagonal at pixel " + std::to_string(i));
        }
    }
}

void GroundTruth::validate() const {
    const int c_max = num_classes();
    std::vector<std::size_t> counts(static_cast<std::size_t>(c_max) + 1, 0);
    for (const auto v : labels) {
        if (v > c_max) {
            fail(ErrorCode::CorruptData,
                 "ground-truth label " + std::to_string(int(v)) +
                     " exceeds class count " + std::to_string(c_max));
        }
        ++counts[v];
    }
    for (int c = 1; c <= c_max; ++c) {
        if (counts[c] == 0) {
            fail(ErrorCode::CorruptData,
                 "class '" + class_names[c - 1] + "' has no labeled pixels");
        }
    }
}

// ---------------------------------------------------------------------------
// File ingestion
// ---------------------------------------------------------------------------

namespace {

const std::array<const char*, 9> kChannelFiles = {
    "T11.bin",      "T22.bin",      "T33.bin",
    "T12_real.bin", "T12_imag.bin", "T13_real.bin",
    "T13_imag.bin", "T23_real.bin", "T23_imag.bin"};

struct Header {
    int height = 0;
    int width = 0;
    std::vector<std::string> class_names;
};

Header read_header(const std::filesystem::path& directory) {
    const auto path = directory / "header.json";
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::MissingChannel, "missing header " + path.string());
    }
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptData,
             "cannot parse " + path.string() + ": " + e.what());
    }
    Header h;
    if (!j.contains("height") || !j.contains("width")) {
        fail(ErrorCode::CorruptData,
             path.string() + " must declare height and width");
    }
    h.height = j.at("height").get<int>();
    h.width = j.at("width").get<int>();
    if (h.height <= 0 || h.width <= 0) {
        fail(ErrorCode::CorruptData, "non-positive dimensions in header");
    }
    if (j.contains("classes")) {
        h.class_names = j.at("classes").get<std::vector<std::string>>();
    }
    return h;
}

std::vector<float> read_channel(const std::filesystem::path& directory,
                                const char* name, std::size_t pixels) {
    const auto path = directory / name;
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::MissingChannel, "missing channel file " + path.string());
    }
    const auto size = std::filesystem::file_size(path);
    if (size != pixels * sizeof(float)) {
        fail(ErrorCode::ShapeMismatch,
             path.string() + " holds " + std::to_string(size) +
                 " bytes, expected " + std::to_string(pixels * sizeof(float)));
    }
    auto values = read_f32_file(path);
    for (const float v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorCode::CorruptData, "non-finite value in " + path.string());
        }
    }
    return values;
}

}  // namespace

CoherencyImage load_coherency(const std::filesystem::path& directory) {
    if (!std::filesystem::is_directory(directory)) {
        fail(ErrorCode::MissingChannel,
             "data directory not found: " + directory.string());
    }
    const Header h = read_header(directory);
    const auto n = static_cast<std::size_t>(h.height) * h.width;

    std::array<std::vector<float>, 9> ch;
    for (int k = 0; k < 9; ++k) {
        ch[k] = read_channel(directory, kChannelFiles[k], n);
    }

    CoherencyImage coh(h.height, h.width);
    for (std::size_t i = 0; i < n; ++i) {
        coh.t11(i) = ch[0][i];
        coh.t22(i) = ch[1][i];
        coh.t33(i) = ch[2][i];
        coh.t12(i) = {ch[3][i], ch[4][i]};
        coh.t13(i) = {ch[5][i], ch[6][i]};
        coh.t23(i) = {ch[7][i], ch[8][i]};
    }
    coh.validate();
    return coh;
}

void save_coherency(const std::filesystem::path& directory,
                    const CoherencyImage& coh) {
    std::filesystem::create_directories(directory);
    const auto n = coh.pixel_count();
    std::array<std::vector<float>, 9> ch;
    for (auto& v : ch) v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ch[0][i] = static_cast<float>(coh.t11(i));
        ch[1][i] = static_cast<float>(coh.t22(i));
        ch[2][i] = static_cast<float>(coh.t33(i));
        ch[3][i] = static_cast<float>(coh.t12(i).real());
        ch[4][i] = static_cast<float>(coh.t12(i).imag());
        ch[5][i] = static_cast<float>(coh.t13(i).real());
        ch[6][i] = static_cast<float>(coh.t13(i).imag());
        ch[7][i] = static_cast<float>(coh.t23(i).real());
        ch[8][i] = static_cast<float>(coh.t23(i).imag());
    }
    for (int k = 0; k < 9; ++k) {
        write_f32_file(directory / kChannelFiles[k], ch[k]);
    }
    json j{{"height", coh.height()}, {"width", coh.width()}};
    write_text_file(directory / "header.json", j.dump(2) + "\n");
}

GroundTruth load_ground_truth(const std::filesystem::path& directory) {
    const Header h = read_header(directory);
    if (h.class_names.empty()) {
        fail(ErrorCode::CorruptData,
             "header.json in " + directory.string() +
                 " declares no classes for ground truth");
    }
    const auto path = directory / "ground_truth.bin";
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::MissingChannel,
             "missing ground truth file " + path.string());
    }
    const auto n = static_cast<std::size_t>(h.height) * h.width;
    auto labels = read_u8_file(path);
    if (labels.size() != n) {
        fail(ErrorCode::ShapeMismatch,
             path.string() + " holds " + std::to_string(labels.size()) +
                 " labels, expected " + std::to_string(n));
    }
    GroundTruth gt;
    gt.height = h.height;
    gt.width = h.width;
    gt.labels = std::move(labels);
    gt.class_names = h.class_names;
    gt.validate();
    return gt;
}

void save_ground_truth(const std::filesystem::path& directory,
                       const GroundTruth& gt) {
    std::filesystem::create_directories(directory);
    write_u8_file(directory / "ground_truth.bin", gt.labels);
    json j{{"height", gt.height},
           {"width", gt.width},
           {"classes", gt.class_names}};
    write_text_file(directory / "header.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

FeatureImage extract_features(const CoherencyImage& coh) {
    FeatureImage f(coh.height(), coh.width());
    const auto n = coh.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        double* p = f.data.data() + i * FeatureImage::kChannels;
        p[0] = coh.t11(i);
        p[1] = coh.t22(i);
        p[2] = coh.t33(i);
        p[3] = coh.t12(i).real();
        p[4] = coh.t12(i).imag();
        p[5] = coh.t13(i).real();
        p[6] = coh.t13(i).imag();
        p[7] = coh.t23(i).real();
        p[8] = coh.t23(i).imag();
    }
    return f;
}

CoherencyImage features_to_coherency(const FeatureImage& features) {
    if (features.normalized) {
        fail(ErrorCode::InvalidConfig,
             "features must be raw to rebuild coherency matrices");
    }
    CoherencyImage coh(features.height, features.width);
    const auto n = coh.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double* p =
            features.data.data() + i * FeatureImage::kChannels;
        coh.t11(i) = p[0];
        coh.t22(i) = p[1];
        coh.t33(i) = p[2];
        coh.t12(i) = {p[3], p[4]};
        coh.t13(i) = {p[5], p[6]};
        coh.t23(i) = {p[7], p[8]};
    }
    return coh;
}

FeatureImage normalize_features(const FeatureImage& raw) {
    if (raw.normalized) {
        fail(ErrorCode::InvalidConfig, "features are already normalized");
    }
    const auto pixels = static_cast<std::size_t>(raw.height) * raw.width;
    if (pixels == 0) fail(ErrorCode::ShapeMismatch, "empty feature image");

    FeatureImage out = raw;
    out.normalized = true;
    for (int ch = 0; ch < FeatureImage::kChannels; ++ch) {
        double mean = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) {
            mean += raw.data[i * FeatureImage::kChannels + ch];
        }
        mean /= static_cast<double>(pixels);
        double var = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) {
            const double d =
                raw.data[i * FeatureImage::kChannels + ch] - mean;
            var += d * d;
        }
        var /= static_cast<double>(pixels);
        const double sd = std::sqrt(var);
        out.norm_mean[ch] = mean;
        out.norm_std[ch] = sd;
        if (sd > 0.0) {
            for (std::size_t i = 0; i < pixels; ++i) {
                auto& v = out.data[i * FeatureImage::kChannels + ch];
                v = (v - mean) / sd;
            }
        } else {
            // Constant channel: all zeros keeps degenerate scenes usable.
            for (std::size_t i = 0; i < pixels; ++i) {
                out.data[i * FeatureImage::kChannels + ch] = 0.0;
            }
        }
    }
    return out;
}

FeatureImage denormalize_features(const FeatureImage& normalized) {
    if (!normalized.normalized) {
        fail(ErrorCode::InvalidConfig, "features are not normalized");
    }
    const auto pixels =
        static_cast<std::size_t>(normalized.height) * normalized.width;
    FeatureImage out = normalized;
    out.normalized = false;
    for (int ch = 0; ch < FeatureImage::kChannels; ++ch) {
        const double mean = normalized.norm_mean[ch];
        const double sd = normalized.norm_std[ch];
        for (std::size_t i = 0; i < pixels; ++i) {
            auto& v = out.data[i * FeatureImage::kChannels + ch];
            v = v * sd + mean;
        }
    }
    out.norm_mean.fill(0.0);
    out.norm_std.fill(0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Pauli RGB
// ---------------------------------------------------------------------------

namespace {

// Nearest-rank 99th percentile.
double percentile99(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    const auto rank = static_cast<std::size_t>(
        std::ceil(0.99 * static_cast<double>(n)));
    return values[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace

RgbImage pauli_rgb(const CoherencyImage& coh) {
    const auto n = coh.pixel_count();
    std::array<std::vector<double>, 3> plane;
    for (auto& p : plane) p.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        plane[0][i] = coh.t22(i);  // R: even-bounce power
        plane[1][i] = coh.t33(i);  // G: volume power
        plane[2][i] = coh.t11(i);  // B: odd-bounce power
    }
    RgbImage image(coh.height(), coh.width());
    for (int ch = 0; ch < 3; ++ch) {
        const double clip = percentile99(plane[ch]);
        for (std::size_t i = 0; i < n; ++i) {
            double v = 0.0;
            if (clip > 0.0) {
                v = std::min(plane[ch][i], clip) / clip;
            }
            image.data[i * 3 + ch] = static_cast<std::uint8_t>(
                std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        }
    }
    return image;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

SceneSpec make_default_scene(int height, int width, int num_classes,
                             int looks) {
    if (num_classes < 1 || num_classes > 5) {
        fail(ErrorCode::InvalidSpec,
             "default scene supports 1..5 classes, got " +
                 std::to_string(num_classes));
    }
    using C = std::complex<double>;
    // Cholesky-style factors; covariance L * L^H is PSD by construction.
    // Patterns: surface-dominant, double-bounce, volume, low-power, high
    // cross-pol, with distinct total power.
    std::array<Eigen::Matrix3cd, 5> factors;
    factors[0] << C(1.50, 0), C(0, 0), C(0, 0),
                  C(0.10, 0.10), C(0.35, 0), C(0, 0),
                  C(0.05, -0.05), C(0.05, 0), C(0.25, 0);
    factors[1] << C(0.50, 0), C(0, 0), C(0, 0),
                  C(-0.40, 0.30), C(1.30, 0), C(0, 0),
                  C(0.00, 0.10), C(0.20, 0), C(0.40, 0);
    factors[2] << C(0.90, 0), C(0, 0), C(0, 0),
                  C(0.20, -0.20), C(0.90, 0), C(0, 0),
                  C(0.20, 0.20), C(0.30, 0), C(0.90, 0);
    factors[3] << C(0.45, 0), C(0, 0), C(0, 0),
                  C(0.05, 0.02), C(0.12, 0), C(0, 0),
                  C(0.00, 0.02), C(0.03, 0), C(0.08, 0);
    factors[4] << C(0.70, 0), C(0, 0), C(0, 0),
                  C(0.10, -0.30), C(0.50, 0), C(0, 0),
                  C(0.30, 0.20), C(0.40, 0), C(1.20, 0);

    static const std::array<const char*, 5> names = {
        "surface", "double_bounce", "volume", "low_power", "cross_pol"};

    SceneSpec spec;
    spec.height = height;
    spec.width = width;
    spec.looks = looks;
    for (int c = 0; c < num_classes; ++c) {
        SceneClass sc;
        sc.name = names[c];
        sc.covariance = factors[c] * factors[c].adjoint();
        spec.classes.push_back(std::move(sc));
    }
    return spec;
}

namespace {

// Square root factor of a Hermitian PSD matrix; throws InvalidSpec when the
// matrix is not Hermitian PSD.
Eigen::Matrix3cd psd_factor(const Eigen::Matrix3cd& sigma,
                            const std::string& what) {
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        fail(ErrorCode::InvalidSpec, what + " covariance is not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(sigma);
    if (es.info() != Eigen::Success) {
        fail(ErrorCode::InvalidSpec,
             what + " covariance eigendecomposition failed");
    }
    const auto& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-9 * scale) {
        fail(ErrorCode::InvalidSpec,
             what + " covariance is not positive semidefinite");
    }
    Eigen::Vector3d sqrt_ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * sqrt_ev.asDiagonal() *
           es.eigenvectors().adjoint();
}

std::vector<std::uint8_t> region_layout(const SceneSpec& spec, Rng& rng) {
    const int num_classes = static_cast<int>(spec.classes.size());
    const auto n = static_cast<std::size_t>(spec.height) * spec.width;
    std::vector<std::uint8_t> classes(n, 1);
    if (num_classes == 1) return classes;

    if (spec.layout == SceneLayout::Bands) {
        for (int r = 0; r < spec.height; ++r) {
            const int band = r * num_classes / spec.height;
            for (int c = 0; c < spec.width; ++c) {
                classes[static_cast<std::size_t>(r) * spec.width + c] =
                    static_cast<std::uint8_t>(band + 1);
            }
        }
        return classes;
    }

    const int cells =
        spec.voronoi_cells > 0 ? spec.voronoi_cells : 2 * num_classes;
    if (cells < num_classes) {
        fail(ErrorCode::InvalidSpec,
             "Voronoi layout needs at least one cell per class");
    }
    std::vector<std::pair<int, int>> sites(cells);
    for (auto& s : sites) {
        s.first = static_cast<int>(rng.below(spec.height));
        s.second = static_cast<int>(rng.below(spec.width));
    }
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            long best = std::numeric_limits<long>::max();
            int best_cell = 0;
            for (int k = 0; k < cells; ++k) {
                const long dr = r - sites[k].first;
                const long dc = c - sites[k].second;
                const long d2 = dr * dr + dc * dc;
                if (d2 < best) {
                    best = d2;
                    best_cell = k;
                }
            }
            classes[static_cast<std::size_t>(r) * spec.width + c] =
                static_cast<std::uint8_t>(best_cell % num_classes + 1);
        }
    }
    return classes;
}

}  // namespace

SynthScene synth_scene(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.classes.empty()) {
        fail(ErrorCode::InvalidSpec, "scene needs at least one class");
    }
    if (spec.height <= 0 || spec.width <= 0 || spec.looks < 1) {
        fail(ErrorCode::InvalidSpec, "invalid scene dimensions or look count");
    }
    std::vector<Eigen::Matrix3cd> factors;
    factors.reserve(spec.classes.size());
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
        factors.push_back(
            psd_factor(spec.classes[c].covariance,
                       "class '" + spec.classes[c].name + "'"));
    }

    Rng layout_rng(derive_seed(seed, "layout"));
    const auto region = region_layout(spec, layout_rng);

    Rng rng(derive_seed(seed, "speckle"));
    CoherencyImage coh(spec.height, spec.width);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const auto n = coh.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = factors[region[i] - 1];
        Eigen::Matrix3cd t = Eigen::Matrix3cd::Zero();
        for (int look = 0; look < spec.looks; ++look) {
            Eigen::Vector3cd z;
            for (int d = 0; d < 3; ++d) {
                const double re = rng.normal() * inv_sqrt2;
                const double im = rng.normal() * inv_sqrt2;
                z(d) = {re, im};
            }
            const Eigen::Vector3cd k = a * z;
            t.noalias() += k * k.adjoint();
        }
        t /= static_cast<double>(spec.looks);
        const std::size_t r = i / spec.width;
        const std::size_t c = i % spec.width;
        coh.set(static_cast<int>(r), static_cast<int>(c), t);
    }

    GroundTruth gt;
    gt.height = spec.height;
    gt.width = spec.width;
    gt.labels = region;
    for (const auto& cls : spec.classes) gt.class_names.push_back(cls.name);
    gt.validate();
    return {std::move(coh), std::move(gt)};
}

// ---------------------------------------------------------------------------
// Label splits
// ---------------------------------------------------------------------------

LabelSplit make_split(const GroundTruth& gt, int per_class,
                      std::uint64_t seed) {
    if (per_class < 1) {
        fail(ErrorCode::InvalidConfig, "per_class must be at least 1");
    }
    const int num_classes = gt.num_classes();
    std::vector<std::vector<LabeledPixel>> by_class(num_classes);
    for (int r = 0; r < gt.height; ++r) {
        for (int c = 0; c < gt.width; ++c) {
            const int cls = gt.label(r, c);
            if (cls > 0) {
                by_class[cls - 1].push_back({r, c, cls});
            }
        }
    }

    LabelSplit split;
    split.seed = seed;
    split.per_class = per_class;
    Rng rng(seed);
    for (int c = 0; c < num_classes; ++c) {
        auto& coords = by_class[c];
        if (static_cast<int>(coords.size()) < per_class) {
            fail(ErrorCode::ClassTooSmall,
                 "class '" + gt.class_names[c] + "' has " +
                     std::to_string(coords.size()) + " labeled pixels, need " +
                     std::to_string(per_class));
        }
        rng.shuffle(coords);
        for (int i = 0; i < per_class; ++i) {
            split.train_coords.push_back(coords[i]);
        }
        if (static_cast<int>(coords.size()) == per_class) {
            split.empty_test_class = true;
        }
        for (std::size_t i = per_class; i < coords.size(); ++i) {
            split.test_coords.push_back(coords[i]);
        }
    }
    return split;
}

}  // namespace dbgc
