#ifndef DBGC_POLSAR_HPP
#define DBGC_POLSAR_HPP

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <dbgc/image.hpp>

namespace dbgc {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Per-pixel 3x3 Hermitian coherency matrix in linear power units. Only the
// upper triangle is stored; the lower triangle is implied by conjugation, so
// matrices are Hermitian by construction.
class CoherencyImage {
public:
    CoherencyImage() = default;
    CoherencyImage(int height, int width);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height_) * width_;
    }

    Eigen::Matrix3cd at(int r, int c) const;

    // Validates Hermitian symmetry (1e-9 relative) and nonnegative real
    // diagonal before storing. Throws CorruptData otherwise.
    void set(int r, int c, const Eigen::Matrix3cd& t);

    // Direct channel access used by the file loader and feature extractor.
    double& t11(std::size_t i) { return t11_[i]; }
    double& t22(std::size_t i) { return t22_[i]; }
    double& t33(std::size_t i) { return t33_[i]; }
    std::complex<double>& t12(std::size_t i) { return t12_[i]; }
    std::complex<double>& t13(std::size_t i) { return t13_[i]; }
    std::complex<double>& t23(std::size_t i) { return t23_[i]; }
    double t11(std::size_t i) const { return t11_[i]; }
    double t22(std::size_t i) const { return t22_[i]; }
    double t33(std::size_t i) const { return t33_[i]; }
    std::complex<double> t12(std::size_t i) const { return t12_[i]; }
    std::complex<double> t13(std::size_t i) const { return t13_[i]; }
    std::complex<double> t23(std::size_t i) const { return t23_[i]; }

    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * width_ + c;
    }

    // Throws CorruptData when any stored value is non-finite or a diagonal
    // entry is negative.
    void validate() const;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> t11_, t22_, t33_;
    std::vector<std::complex<double>> t12_, t13_, t23_;
};

// Nine real channels per pixel in the fixed order
// [T11, T22, T33, Re T12, Im T12, Re T13, Im T13, Re T23, Im T23].
struct FeatureImage {
    static constexpr int kChannels = 9;

    int height = 0;
    int width = 0;
    std::vector<double> data;  // height * width * kChannels, row-major
    bool normalized = false;
    std::array<double, kChannels> norm_mean{};
    std::array<double, kChannels> norm_std{};

    FeatureImage() = default;
    FeatureImage(int h, int w)
        : height(h), width(w),
          data(static_cast<std::size_t>(h) * w * kChannels, 0.0) {}

    double* at(int r, int c) {
        return data.data() +
               (static_cast<std::size_t>(r) * width + c) * kChannels;
    }
    const double* at(int r, int c) const {
        return data.data() +
               (static_cast<std::size_t>(r) * width + c) * kChannels;
    }
};

// Per-pixel class ids; 0 means unlabeled, classes are 1..C.
struct GroundTruth {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::uint8_t label(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * width + c];
    }

    // Checks label range and that every named class has at least one pixel.
    void validate() const;
};

struct LabeledPixel {
    int row = 0;
    int col = 0;
    int cls = 0;  // 1..C
};

struct LabelSplit {
    std::vector<LabeledPixel> train_coords;
    std::vector<LabeledPixel> test_coords;
    std::uint64_t seed = 0;
    int per_class = 0;
    // Set when some class contributed every labeled pixel to training and
    // therefore has no test support.
    bool empty_test_class = false;
};

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

enum class SceneLayout { Voronoi, Bands };

struct SceneClass {
    std::string name;
    Eigen::Matrix3cd covariance;  // Hermitian PSD
};

struct SceneSpec {
    int height = 128;
    int width = 128;
    int looks = 4;
    SceneLayout layout = SceneLayout::Voronoi;
    int voronoi_cells = 0;  // 0 -> 2 * classes
    std::vector<SceneClass> classes;
};

// Five built-in classes with well-separated covariance structure.
SceneSpec make_default_scene(int height, int width, int num_classes = 5,
                             int looks = 4);

struct SynthScene {
    CoherencyImage coherency;
    GroundTruth truth;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Directory layout: nine raw little-endian float32 channel files
// (T11.bin ... T23_imag.bin) plus header.json {"height": H, "width": W}
// and optionally {"classes": [...]} with ground_truth.bin.
CoherencyImage load_coherency(const std::filesystem::path& directory);
void save_coherency(const std::filesystem::path& directory,
                    const CoherencyImage& coh);

GroundTruth load_ground_truth(const std::filesystem::path& directory);
void save_ground_truth(const std::filesystem::path& directory,
                       const GroundTruth& gt);

FeatureImage extract_features(const CoherencyImage& coh);

// Exact inverse of extract_features for unnormalized features.
CoherencyImage features_to_coherency(const FeatureImage& features);

// Per-channel z-score over all pixels. Channels with zero variance map to
// zero. Stores the statistics so the transform is invertible.
FeatureImage normalize_features(const FeatureImage& raw);
FeatureImage denormalize_features(const FeatureImage& normalized);

// False-color composite: R from T22, G from T33, B from T11, each channel
// clipped at its 99th percentile and scaled to [0, 255].
RgbImage pauli_rgb(const CoherencyImage& coh);

SynthScene synth_scene(const SceneSpec& spec, std::uint64_t seed);

LabelSplit make_split(const GroundTruth& gt, int per_class,
                      std::uint64_t seed);

}  // namespace dbgc

#endif
