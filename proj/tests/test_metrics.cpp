#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "dbgc/metrics.hpp"
#include "dbgc/png_io.hpp"
#include "dbgc/rng.hpp"
#include "test_util.hpp"

using namespace dbgc;
using dbgc_test::TempDir;
using dbgc_test::expect_error;

namespace {

GroundTruth make_gt(int h, int w, const std::vector<std::uint8_t>& labels,
                    int classes) {
    GroundTruth gt;
    gt.height = h;
    gt.width = w;
    gt.labels = labels;
    for (int i = 0; i < classes; ++i)
        gt.class_names.push_back("class_" + std::to_string(i + 1));
    return gt;
}

ClassificationResult make_pred(int h, int w,
                               const std::vector<std::uint8_t>& ids) {
    ClassificationResult pred;
    pred.height = h;
    pred.width = w;
    pred.class_ids = ids;
    return pred;
}

// One row block per class; per_class[i] lands exactly on acc[i] because
// every class gets `support` pixels and round(acc * support) hits.
struct ColumnScenario {
    GroundTruth gt;
    ClassificationResult pred;

    ColumnScenario(const std::vector<double>& acc, int support) {
        const int c = static_cast<int>(acc.size());
        const int w = 1000;
        const int rows_per_class = support / w;
        const int h = c * rows_per_class;
        std::vector<std::uint8_t> labels, ids;
        for (int cls = 1; cls <= c; ++cls) {
            const long long hit =
                std::llround(acc[cls - 1] * support);
            for (int i = 0; i < support; ++i) {
                labels.push_back(static_cast<std::uint8_t>(cls));
                const int wrong = cls % c + 1;
                ids.push_back(static_cast<std::uint8_t>(
                    i < hit ? cls : wrong));
            }
        }
        gt = make_gt(h, w, labels, c);
        pred = make_pred(h, w, ids);
    }
};

}  // namespace

TEST_CASE("perfect prediction scores one everywhere") {
    auto gt = make_gt(2, 3, {1, 1, 2, 2, 3, 3}, 3);
    auto pred = make_pred(2, 3, {1, 1, 2, 2, 3, 3});
    const auto m = evaluate(pred, gt, {});
    CHECK(m.oa == 1.0);
    CHECK(m.aa == 1.0);
    CHECK(m.total == 6);
    for (int i = 0; i < 3; ++i) {
        CHECK(m.per_class[i] == 1.0);
        CHECK(m.class_defined[i]);
        CHECK(m.support[i] == 2);
        CHECK(m.confusion[i][i] == 2);
    }
    CHECK_FALSE(m.zero_support_warning);
}

TEST_CASE("constant prediction on a balanced truth scores one half") {
    auto gt = make_gt(2, 2, {1, 1, 2, 2}, 2);
    auto pred = make_pred(2, 2, {1, 1, 1, 1});
    const auto m = evaluate(pred, gt, {});
    CHECK(m.oa == 0.5);
    CHECK(m.aa == 0.5);
    CHECK(m.per_class[0] == 1.0);
    CHECK(m.per_class[1] == 0.0);
    CHECK(m.confusion[0][0] == 2);
    CHECK(m.confusion[1][0] == 2);
    CHECK(m.confusion[1][1] == 0);
}

TEST_CASE("confusion cells count every true/predicted pair") {
    // Truth: class 1 on the top row, class 2 on the bottom; predictions
    // planted cell by cell.
    auto gt = make_gt(2, 4, {1, 1, 1, 1, 2, 2, 2, 2}, 2);
    auto pred = make_pred(2, 4, {1, 1, 2, 2, 2, 2, 2, 1});
    const auto m = evaluate(pred, gt, {});
    CHECK(m.confusion[0][0] == 2);
    CHECK(m.confusion[0][1] == 2);
    CHECK(m.confusion[1][0] == 1);
    CHECK(m.confusion[1][1] == 3);
    CHECK(m.total == 8);
    CHECK(m.oa == doctest::Approx(5.0 / 8.0).epsilon(1e-15));
    CHECK(m.aa ==
          doctest::Approx(0.5 * (2.0 / 4.0 + 3.0 / 4.0)).epsilon(1e-15));
    long long sum = 0;
    for (const auto& row : m.confusion)
        for (long long v : row) sum += v;
    CHECK(sum == m.total);
}

TEST_CASE("unlabeled pixels never enter the count") {
    auto gt = make_gt(2, 2, {1, 0, 0, 2}, 2);
    auto pred = make_pred(2, 2, {1, 2, 1, 2});
    const auto m = evaluate(pred, gt, {});
    CHECK(m.total == 2);
    CHECK(m.oa == 1.0);
}

TEST_CASE("excluded training pixels are left out of the evaluation") {
    auto gt = make_gt(2, 3, {1, 1, 1, 2, 2, 2}, 2);
    auto pred = make_pred(2, 3, {1, 2, 1, 2, 2, 1});
    SUBCASE("partial exclusion shrinks the totals") {
        std::vector<LabeledPixel> train = {{0, 1, 1}, {1, 2, 2}};
        const auto m = evaluate(pred, gt, train);
        CHECK(m.total == 4);
        CHECK(m.confusion[0][0] == 2);
        CHECK(m.confusion[0][1] == 0);
        CHECK(m.confusion[1][1] == 2);
        CHECK(m.oa == 1.0);
    }
    SUBCASE("excluding a whole class flags the average") {
        std::vector<LabeledPixel> train = {{0, 0, 1}, {0, 1, 1}, {0, 2, 1}};
        const auto m = evaluate(pred, gt, train);
        CHECK(m.zero_support_warning);
        CHECK_FALSE(m.class_defined[0]);
        CHECK(m.class_defined[1]);
        CHECK(m.support[0] == 0);
        CHECK(m.per_class[0] == 0.0);
        CHECK(m.aa == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        const auto json = metrics_to_json(m, gt.class_names);
        CHECK(json.find("null") != std::string::npos);
        const auto table = metrics_table(m, gt.class_names);
        CHECK(table.find("n/a") != std::string::npos);
    }
    SUBCASE("out-of-image exclusions are rejected") {
        expect_error(ErrorCode::OutOfBounds,
                     [&] { evaluate(pred, gt, {{2, 0, 1}}); });
        expect_error(ErrorCode::OutOfBounds,
                     [&] { evaluate(pred, gt, {{0, -1, 1}}); });
    }
}

TEST_CASE("evaluation rejects malformed inputs") {
    auto gt = make_gt(2, 2, {1, 1, 2, 2}, 2);
    SUBCASE("dimension mismatch") {
        auto pred = make_pred(2, 3, {1, 1, 1, 2, 2, 2});
        expect_error(ErrorCode::ShapeMismatch,
                     [&] { evaluate(pred, gt, {}); });
    }
    SUBCASE("prediction outside the class range") {
        expect_error(ErrorCode::CorruptData, [&] {
            evaluate(make_pred(2, 2, {1, 1, 2, 3}), gt, {});
        });
        expect_error(ErrorCode::CorruptData, [&] {
            evaluate(make_pred(2, 2, {0, 1, 2, 2}), gt, {});
        });
    }
    SUBCASE("no labeled test pixels") {
        auto blank = make_gt(2, 2, {0, 0, 0, 0}, 2);
        expect_error(ErrorCode::EmptyEvaluation, [&] {
            evaluate(make_pred(2, 2, {1, 1, 1, 1}), blank, {});
        });
        std::vector<LabeledPixel> all = {
            {0, 0, 1}, {0, 1, 1}, {1, 0, 2}, {1, 1, 2}};
        expect_error(ErrorCode::EmptyEvaluation, [&] {
            evaluate(make_pred(2, 2, {1, 1, 2, 2}), gt, all);
        });
    }
}

TEST_CASE("published per-class columns reproduce the reported averages") {
    SUBCASE("dual-branch column") {
        const std::vector<double> acc = {
            0.9875, 0.9863, 1.0000, 0.9984, 0.9721, 0.9930, 0.9636, 0.9647,
            0.9711, 0.9926, 0.9651, 0.9888, 0.9435, 0.9825, 0.9905};
        ColumnScenario s(acc, 10000);
        const auto m = evaluate(s.pred, s.gt, {});
        for (int i = 0; i < 15; ++i)
            CHECK(m.per_class[i] == doctest::Approx(acc[i]).epsilon(1e-12));
        CHECK(std::abs(m.aa - 0.9800) <= 1e-4);
    }
    SUBCASE("graph-only column") {
        const std::vector<double> acc = {
            0.9456, 0.9744, 0.9851, 0.9428, 0.8610, 0.9811, 0.9807, 0.6562,
            0.3690, 0.9871, 0.9807, 0.9616, 0.3355, 0.8760, 0.9943};
        ColumnScenario s(acc, 10000);
        const auto m = evaluate(s.pred, s.gt, {});
        CHECK(std::abs(m.aa - 0.8554) <= 1e-4);
    }
}

TEST_CASE("equal support makes the two averages agree") {
    Rng rng(17);
    const int c = 4, support = 125, w = 100;
    std::vector<std::uint8_t> labels, ids;
    for (int cls = 1; cls <= c; ++cls) {
        for (int i = 0; i < support; ++i) {
            labels.push_back(static_cast<std::uint8_t>(cls));
            const bool hit = rng.uniform01() < 0.8;
            ids.push_back(static_cast<std::uint8_t>(
                hit ? cls : static_cast<int>(rng.below(c)) + 1));
        }
    }
    const int h = c * support / w;
    const auto m = evaluate(make_pred(h, w, ids), make_gt(h, w, labels, c),
                            {});
    for (int i = 0; i < c; ++i) CHECK(m.support[i] == support);
    CHECK(m.oa == doctest::Approx(m.aa).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under class relabeling") {
    Rng rng(23);
    const int c = 5, n = 300, w = 30;
    std::vector<std::uint8_t> labels, ids;
    for (int i = 0; i < n; ++i) {
        labels.push_back(static_cast<std::uint8_t>(rng.below(c)) + 1);
        ids.push_back(static_cast<std::uint8_t>(rng.below(c)) + 1);
    }
    const auto base =
        evaluate(make_pred(n / w, w, ids), make_gt(n / w, w, labels, c), {});

    const std::array<int, 5> perm = {3, 5, 1, 2, 4};
    std::vector<std::uint8_t> plabels, pids;
    for (int i = 0; i < n; ++i) {
        plabels.push_back(static_cast<std::uint8_t>(perm[labels[i] - 1]));
        pids.push_back(static_cast<std::uint8_t>(perm[ids[i] - 1]));
    }
    const auto renamed = evaluate(make_pred(n / w, w, pids),
                                  make_gt(n / w, w, plabels, c), {});
    CHECK(renamed.oa == doctest::Approx(base.oa).epsilon(1e-12));
    CHECK(renamed.aa == doctest::Approx(base.aa).epsilon(1e-12));
    CHECK(renamed.total == base.total);
    for (int i = 0; i < c; ++i) {
        CHECK(renamed.per_class[perm[i] - 1] ==
              doctest::Approx(base.per_class[i]).epsilon(1e-12));
        CHECK(renamed.confusion[perm[i] - 1][perm[i] - 1] ==
              base.confusion[i][i]);
    }
}

TEST_CASE("the default palette reserves black and stays distinct") {
    const auto& p = default_palette();
    REQUIRE(p.size() == 16);
    CHECK(p[0] == std::array<std::uint8_t, 3>{0, 0, 0});
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j)
            CHECK(p[i] != p[j]);
}

TEST_CASE("rendered maps color each pixel through the palette") {
    ClassificationResult pred;
    pred.height = 2;
    pred.width = 2;
    pred.class_ids = {0, 1, 2, 15};
    const auto& palette = default_palette();
    const auto img = render_map(pred, palette);
    REQUIRE(img.height == 2);
    REQUIRE(img.width == 2);
    for (int i = 0; i < 4; ++i) {
        const int r = i / 2, c = i % 2;
        const auto& want = palette[pred.class_ids[i]];
        CHECK(img.at(r, c, 0) == want[0]);
        CHECK(img.at(r, c, 1) == want[1]);
        CHECK(img.at(r, c, 2) == want[2]);
    }

    SUBCASE("single-class maps are single-color") {
        ClassificationResult uniform;
        uniform.height = 3;
        uniform.width = 3;
        uniform.class_ids.assign(9, 5);
        const auto flat = render_map(uniform, palette);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    CHECK(flat.at(r, c, ch) == palette[5][ch]);
    }
    SUBCASE("a class without a palette entry is an error") {
        Palette tiny = {palette[0], palette[1], palette[2]};
        ClassificationResult over;
        over.height = 1;
        over.width = 2;
        over.class_ids = {1, 3};
        expect_error(ErrorCode::PaletteMissing,
                     [&] { render_map(over, tiny); });
    }
}

TEST_CASE("rendered maps survive a PNG round-trip exactly") {
    Rng rng(29);
    ClassificationResult pred;
    pred.height = 9;
    pred.width = 13;
    for (int i = 0; i < 9 * 13; ++i)
        pred.class_ids.push_back(static_cast<std::uint8_t>(rng.below(16)));
    const auto img = render_map(pred, default_palette());

    TempDir dir("metrics");
    write_png(dir.path() / "map.png", img);
    const auto back = read_png(dir.path() / "map.png");
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    CHECK(back.data == img.data);
}

TEST_CASE("reports carry the headline numbers") {
    auto gt = make_gt(2, 2, {1, 1, 2, 2}, 2);
    auto pred = make_pred(2, 2, {1, 1, 2, 1});
    const auto m = evaluate(pred, gt, {});
    const auto json = metrics_to_json(m, gt.class_names);
    CHECK(json.find("\"oa\"") != std::string::npos);
    CHECK(json.find("\"aa\"") != std::string::npos);
    CHECK(json.find("\"confusion\"") != std::string::npos);
    CHECK(json.find("0.75") != std::string::npos);
    CHECK(json.find("class_2") != std::string::npos);

    const auto table = metrics_table(m, gt.class_names);
    CHECK(table.find("OA") != std::string::npos);
    CHECK(table.find("AA") != std::string::npos);
    CHECK(table.find("0.7500") != std::string::npos);
    CHECK(table.find("class_1") != std::string::npos);
}
