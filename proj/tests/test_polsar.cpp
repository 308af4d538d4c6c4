#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <vector>

#include "dbgc/io.hpp"
#include "dbgc/polsar.hpp"
#include "dbgc/rng.hpp"
#include "test_util.hpp"

using namespace dbgc;
using dbgc_test::TempDir;
using dbgc_test::expect_error;

namespace {

Eigen::Matrix3cd hermitian(double t11, double t22, double t33,
                           std::complex<double> t12,
                           std::complex<double> t13,
                           std::complex<double> t23) {
    Eigen::Matrix3cd t;
    t << t11, t12, t13,
         std::conj(t12), t22, t23,
         std::conj(t13), std::conj(t23), t33;
    return t;
}

Eigen::Matrix3cd random_psd(Rng& rng) {
    Eigen::Matrix3cd a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = {rng.normal(), rng.normal()};
    return a * a.adjoint();
}

}  // namespace

TEST_CASE("coherency set/at round-trips Hermitian matrices") {
    CoherencyImage coh(2, 3);
    Rng rng(42);
    std::vector<Eigen::Matrix3cd> stored;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) {
            auto t = random_psd(rng);
            coh.set(r, c, t);
            stored.push_back(t);
        }
    }
    std::size_t i = 0;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c, ++i) {
            const auto got = coh.at(r, c);
            CHECK((got - stored[i]).cwiseAbs().maxCoeff() ==
                  doctest::Approx(0.0).epsilon(1e-12));
            CHECK((got - got.adjoint()).cwiseAbs().maxCoeff() == 0.0);
        }
    }
}

TEST_CASE("coherency set rejects invalid matrices") {
    CoherencyImage coh(1, 1);
    Eigen::Matrix3cd bad = Eigen::Matrix3cd::Identity();
    bad(0, 1) = {1.0, 0.0};
    bad(1, 0) = {5.0, 0.0};  // breaks conjugate symmetry
    expect_error(ErrorCode::CorruptData, [&] { coh.set(0, 0, bad); });

    Eigen::Matrix3cd neg = Eigen::Matrix3cd::Identity();
    neg(2, 2) = {-1.0, 0.0};
    expect_error(ErrorCode::CorruptData, [&] { coh.set(0, 0, neg); });
}

TEST_CASE("loading constant channel files yields all-ones matrices") {
    TempDir dir("dbgc_polsar");
    const std::vector<float> ones(4, 1.0f);
    const char* names[] = {"T11.bin", "T22.bin", "T33.bin",
                           "T12_real.bin", "T12_imag.bin",
                           "T13_real.bin", "T13_imag.bin",
                           "T23_real.bin", "T23_imag.bin"};
    for (const char* name : names) {
        const bool imag = std::string(name).find("imag") != std::string::npos;
        write_f32_file(dir.path() / name,
                       imag ? std::vector<float>(4, 0.0f) : ones);
    }
    write_text_file(dir.path() / "header.json",
                    "{\"height\": 2, \"width\": 2}");

    const auto coh = load_coherency(dir.path());
    CHECK(coh.height() == 2);
    CHECK(coh.width() == 2);
    const Eigen::Matrix3cd expected = Eigen::Matrix3cd::Ones();
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            CHECK((coh.at(r, c) - expected).cwiseAbs().maxCoeff() == 0.0);

    SUBCASE("missing channel file") {
        std::filesystem::remove(dir.path() / "T23_imag.bin");
        expect_error(ErrorCode::MissingChannel,
                     [&] { load_coherency(dir.path()); });
    }
    SUBCASE("wrong file size") {
        write_f32_file(dir.path() / "T33.bin", std::vector<float>(3, 1.0f));
        expect_error(ErrorCode::ShapeMismatch,
                     [&] { load_coherency(dir.path()); });
    }
    SUBCASE("non-finite values") {
        std::vector<float> nans(4, std::numeric_limits<float>::quiet_NaN());
        write_f32_file(dir.path() / "T11.bin", nans);
        expect_error(ErrorCode::CorruptData,
                     [&] { load_coherency(dir.path()); });
    }
}

TEST_CASE("save/load coherency round-trip is exact") {
    TempDir dir("dbgc_polsar");
    CoherencyImage coh(3, 4);
    Rng rng(7);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) coh.set(r, c, random_psd(rng));
    // Channel files are float32, so quantize before comparing.
    save_coherency(dir.path(), coh);
    const auto back = load_coherency(dir.path());
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 4; ++c) {
            const auto a = coh.at(r, c);
            const auto b = back.at(r, c);
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    CHECK(static_cast<float>(a(i, j).real()) ==
                          static_cast<float>(b(i, j).real()));
                    CHECK(static_cast<float>(a(i, j).imag()) ==
                          static_cast<float>(b(i, j).imag()));
                }
            }
        }
    }
}

TEST_CASE("ground truth save/load round-trip keeps labels and names") {
    TempDir dir("dbgc_polsar");
    GroundTruth gt;
    gt.height = 2;
    gt.width = 3;
    gt.labels = {0, 1, 2, 2, 1, 0};
    gt.class_names = {"water", "forest"};
    gt.validate();
    save_ground_truth(dir.path(), gt);
    const auto back = load_ground_truth(dir.path());
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.labels == gt.labels);
    CHECK(back.class_names == gt.class_names);
}

TEST_CASE("ground truth validation catches bad labels") {
    GroundTruth gt;
    gt.height = 1;
    gt.width = 2;
    gt.labels = {1, 3};  // class 3 does not exist
    gt.class_names = {"a", "b"};
    expect_error(ErrorCode::CorruptData, [&] { gt.validate(); });

    gt.labels = {1, 1};  // class 2 has no pixels
    expect_error(ErrorCode::CorruptData, [&] { gt.validate(); });
}

TEST_CASE("feature extraction follows the fixed channel order") {
    CoherencyImage coh(1, 2);
    coh.set(0, 0, Eigen::Matrix3cd::Identity());
    coh.set(0, 1, hermitian(1.0, 1.0, 1.0, {2.0, 3.0}, {0.0, 0.0},
                            {0.0, 0.0}));
    const auto f = extract_features(coh);
    CHECK(f.height == 1);
    CHECK(f.width == 2);
    CHECK_FALSE(f.normalized);

    const double* p0 = f.at(0, 0);
    const double expected0[9] = {1, 1, 1, 0, 0, 0, 0, 0, 0};
    for (int k = 0; k < 9; ++k) CHECK(p0[k] == expected0[k]);

    const double* p1 = f.at(0, 1);
    CHECK(p1[3] == 2.0);
    CHECK(p1[4] == 3.0);
}

TEST_CASE("feature extraction matches a per-element reader on random input") {
    Rng rng(11);
    CoherencyImage coh(4, 5);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 5; ++c) coh.set(r, c, random_psd(rng));
    const auto f = extract_features(coh);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 5; ++c) {
            const auto t = coh.at(r, c);
            const double* p = f.at(r, c);
            CHECK(p[0] == t(0, 0).real());
            CHECK(p[1] == t(1, 1).real());
            CHECK(p[2] == t(2, 2).real());
            CHECK(p[3] == t(0, 1).real());
            CHECK(p[4] == t(0, 1).imag());
            CHECK(p[5] == t(0, 2).real());
            CHECK(p[6] == t(0, 2).imag());
            CHECK(p[7] == t(1, 2).real());
            CHECK(p[8] == t(1, 2).imag());
        }
    }
}

TEST_CASE("features reconstruct the coherency image exactly") {
    Rng rng(13);
    CoherencyImage coh(3, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) coh.set(r, c, random_psd(rng));
    const auto back = features_to_coherency(extract_features(coh));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK((back.at(r, c) - coh.at(r, c)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("normalization is a per-channel z-score") {
    FeatureImage raw(1, 2);
    for (int k = 0; k < 9; ++k) {
        raw.at(0, 0)[k] = 0.0;
        raw.at(0, 1)[k] = (k == 3) ? 2.0 : 0.0;
    }
    const auto norm = normalize_features(raw);
    CHECK(norm.normalized);
    // Channel 3 holds {0, 2}: z-scores are -1 and +1.
    CHECK(norm.at(0, 0)[3] == doctest::Approx(-1.0));
    CHECK(norm.at(0, 1)[3] == doctest::Approx(1.0));
    // Constant channels map to zero.
    CHECK(norm.at(0, 0)[0] == 0.0);
    CHECK(norm.at(0, 1)[0] == 0.0);

    expect_error(ErrorCode::InvalidConfig, [&] { normalize_features(norm); });
}

TEST_CASE("normalization statistics recompute to zero mean unit std") {
    Rng rng(17);
    FeatureImage raw(6, 7);
    for (auto& v : raw.data) v = rng.normal() * 3.0 + 1.5;
    const auto norm = normalize_features(raw);
    for (int k = 0; k < FeatureImage::kChannels; ++k) {
        double sum = 0.0, sq = 0.0;
        const auto n = static_cast<std::size_t>(raw.height) * raw.width;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = norm.data[i * FeatureImage::kChannels + k];
            sum += v;
            sq += v * v;
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sq / static_cast<double>(n) - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(1e-6));
    }

    const auto back = denormalize_features(norm);
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
        CHECK(back.data[i] ==
              doctest::Approx(raw.data[i]).epsilon(1e-9));
    }
}

TEST_CASE("pauli composite maps channels and clips at the 99th percentile") {
    SUBCASE("identity everywhere is uniform gray") {
        CoherencyImage coh(2, 2);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
                coh.set(r, c, Eigen::Matrix3cd::Identity());
        const auto img = pauli_rgb(coh);
        for (std::size_t i = 0; i + 2 < img.data.size(); i += 3) {
            CHECK(img.data[i] == img.data[i + 1]);
            CHECK(img.data[i] == img.data[i + 2]);
        }
    }

    SUBCASE("pure T22 gives a pure red image") {
        CoherencyImage coh(2, 2);
        Eigen::Matrix3cd t = Eigen::Matrix3cd::Zero();
        t(1, 1) = 1.0;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) coh.set(r, c, t);
        const auto img = pauli_rgb(coh);
        for (std::size_t i = 0; i + 2 < img.data.size(); i += 3) {
            CHECK(img.data[i] == 255);
            CHECK(img.data[i + 1] == 0);
            CHECK(img.data[i + 2] == 0);
        }
    }

    SUBCASE("doubling T22 below the clip point does not decrease red") {
        CoherencyImage coh(10, 10);
        Rng rng(19);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c) coh.set(r, c, random_psd(rng));
        const auto before = pauli_rgb(coh);
        auto t = coh.at(4, 4);
        t(1, 1) *= 2.0;
        CoherencyImage bumped(10, 10);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                bumped.set(r, c, (r == 4 && c == 4) ? t : coh.at(r, c));
        const auto after = pauli_rgb(bumped);
        const std::size_t i = (4 * 10 + 4) * 3;
        CHECK(after.data[i] >= before.data[i]);
    }

    SUBCASE("nearest-rank percentile on a 1..100 ramp") {
        // 100 pixels with T22 = 1..100. ceil(0.99*100) = 99 -> the 99th
        // sorted value, 99, becomes the clip point, so 99 and 100 both
        // map to 255 and value v maps to round(255*v/99).
        CoherencyImage coh(10, 10);
        for (int r = 0; r < 10; ++r) {
            for (int c = 0; c < 10; ++c) {
                Eigen::Matrix3cd t = Eigen::Matrix3cd::Zero();
                t(1, 1) = static_cast<double>(r * 10 + c + 1);
                coh.set(r, c, t);
            }
        }
        const auto img = pauli_rgb(coh);
        auto red = [&](int r, int c) {
            return img.data[(static_cast<std::size_t>(r) * 10 + c) * 3];
        };
        CHECK(red(9, 9) == 255);  // 100, clipped
        CHECK(red(9, 8) == 255);  // 99, the clip point
        CHECK(red(0, 0) == std::lround(255.0 * 1.0 / 99.0));
        CHECK(red(4, 9) == std::lround(255.0 * 50.0 / 99.0));
    }
}

TEST_CASE("default scene spec has well-formed separated classes") {
    const auto spec = make_default_scene(32, 16, 5);
    CHECK(spec.classes.size() == 5);
    CHECK(spec.height == 32);
    CHECK(spec.width == 16);
    for (const auto& cls : spec.classes) {
        CHECK_FALSE(cls.name.empty());
        const auto& s = cls.covariance;
        CHECK((s - s.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(s);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    }
    for (std::size_t a = 0; a < spec.classes.size(); ++a)
        for (std::size_t b = a + 1; b < spec.classes.size(); ++b)
            CHECK((spec.classes[a].covariance - spec.classes[b].covariance)
                      .cwiseAbs()
                      .maxCoeff() > 0.05);
}

TEST_CASE("synthetic scenes are deterministic and Wishart-consistent") {
    auto spec = make_default_scene(8, 8, 3);
    const auto a = synth_scene(spec, 123);
    const auto b = synth_scene(spec, 123);
    const auto c = synth_scene(spec, 124);
    CHECK(a.truth.labels == b.truth.labels);
    bool all_equal = true;
    bool any_diff = false;
    for (std::size_t i = 0; i < a.coherency.pixel_count(); ++i) {
        if (a.coherency.t11(i) != b.coherency.t11(i)) all_equal = false;
        if (a.coherency.t11(i) != c.coherency.t11(i)) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);

    SUBCASE("many looks concentrate T around the class covariance") {
        SceneSpec one = make_default_scene(2, 2, 1);
        one.looks = 10000;
        const auto scene = synth_scene(one, 5);
        const auto& sigma = one.classes[0].covariance;
        for (int r = 0; r < 2; ++r) {
            for (int cc = 0; cc < 2; ++cc) {
                const double err = (scene.coherency.at(r, cc) - sigma).norm() /
                                   sigma.norm();
                CHECK(err < 0.05);
            }
        }
    }

    SUBCASE("single class labels everything 1") {
        SceneSpec one = make_default_scene(4, 4, 1);
        const auto scene = synth_scene(one, 3);
        for (const auto v : scene.truth.labels) CHECK(v == 1);
    }

    SUBCASE("band layout stacks classes top to bottom") {
        SceneSpec bands = make_default_scene(9, 4, 3);
        bands.layout = SceneLayout::Bands;
        const auto scene = synth_scene(bands, 9);
        for (int r = 0; r < 9; ++r)
            for (int cc = 0; cc < 4; ++cc)
                CHECK(scene.truth.label(r, cc) == r / 3 + 1);
    }

    SUBCASE("non-PSD covariance is rejected") {
        SceneSpec bad = make_default_scene(2, 2, 1);
        bad.classes[0].covariance(0, 0) = {-1.0, 0.0};
        expect_error(ErrorCode::InvalidSpec, [&] { synth_scene(bad, 1); });
    }
}

TEST_CASE("label splits sample exactly per_class train pixels per class") {
    const auto scene = synth_scene(make_default_scene(16, 16, 4), 77);
    const auto split = make_split(scene.truth, 5, 42);

    std::vector<int> train_counts(5, 0);
    std::vector<std::vector<char>> taken(
        16, std::vector<char>(16, 0));
    for (const auto& p : split.train_coords) {
        ++train_counts[p.cls];
        CHECK(scene.truth.label(p.row, p.col) == p.cls);
        taken[p.row][p.col] = 1;
    }
    for (int c = 1; c <= 4; ++c) CHECK(train_counts[c] == 5);

    std::size_t labeled = 0;
    for (const auto v : scene.truth.labels) labeled += v != 0;
    CHECK(split.train_coords.size() + split.test_coords.size() == labeled);
    for (const auto& p : split.test_coords) {
        CHECK(taken[p.row][p.col] == 0);
        CHECK(scene.truth.label(p.row, p.col) == p.cls);
    }
    CHECK_FALSE(split.empty_test_class);

    SUBCASE("same seed reproduces the split") {
        const auto again = make_split(scene.truth, 5, 42);
        CHECK(again.train_coords.size() == split.train_coords.size());
        for (std::size_t i = 0; i < split.train_coords.size(); ++i) {
            CHECK(again.train_coords[i].row == split.train_coords[i].row);
            CHECK(again.train_coords[i].col == split.train_coords[i].col);
        }
    }

    SUBCASE("asking for more pixels than a class has fails") {
        expect_error(ErrorCode::ClassTooSmall,
                     [&] { make_split(scene.truth, 1000, 1); });
    }
}

TEST_CASE("draining a class into training sets the warning flag") {
    GroundTruth gt;
    gt.height = 2;
    gt.width = 2;
    gt.labels = {1, 1, 2, 2};
    gt.class_names = {"a", "b"};
    const auto split = make_split(gt, 2, 9);
    CHECK(split.train_coords.size() == 4);
    CHECK(split.test_coords.empty());
    CHECK(split.empty_test_class);
}

TEST_CASE("per_class one with two classes gives two train pixels") {
    GroundTruth gt;
    gt.height = 2;
    gt.width = 3;
    gt.labels = {1, 0, 2, 2, 1, 0};
    gt.class_names = {"a", "b"};
    const auto split = make_split(gt, 1, 0);
    CHECK(split.train_coords.size() == 2);
    CHECK(split.test_coords.size() == 2);
}
