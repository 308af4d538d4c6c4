#include <dbgc/metrics.hpp>

#include <cstdio>

#include <nlohmann/json.hpp>

#include <dbgc/error.hpp>

namespace dbgc {

using json = nlohmann::json;

Metrics evaluate(const ClassificationResult& pred, const GroundTruth& gt,
                 const std::vector<LabeledPixel>& exclude) {
    require_same_dims(pred.height, pred.width, gt.height, gt.width,
                      "evaluation");
    const int c = gt.num_classes();
    std::vector<bool> excluded(
        static_cast<std::size_t>(gt.height) * gt.width, false);
    for (const auto& p : exclude) {
        if (p.row < 0 || p.row >= gt.height || p.col < 0 ||
            p.col >= gt.width) {
            fail(ErrorCode::OutOfBounds, "excluded pixel outside image");
        }
        excluded[static_cast<std::size_t>(p.row) * gt.width + p.col] = true;
    }

    Metrics m;
    m.confusion.assign(c, std::vector<long long>(c, 0));
    for (int r = 0; r < gt.height; ++r) {
        for (int col = 0; col < gt.width; ++col) {
            const int truth = gt.label(r, col);
            if (truth == 0) continue;
            if (excluded[static_cast<std::size_t>(r) * gt.width + col]) {
                continue;
            }
            const int guess = pred.at(r, col);
            if (guess < 1 || guess > c) {
                fail(ErrorCode::CorruptData,
                     "predicted class " + std::to_string(guess) +
                         " outside 1.." + std::to_string(c));
            }
            ++m.confusion[truth - 1][guess - 1];
            ++m.total;
        }
    }
    if (m.total == 0) {
        fail(ErrorCode::EmptyEvaluation, "no labeled test pixels");
    }

    long long diag = 0;
    m.per_class.assign(c, 0.0);
    m.class_defined.assign(c, false);
    m.support.assign(c, 0);
    double acc_sum = 0.0;
    int defined = 0;
    for (int i = 0; i < c; ++i) {
        long long row_sum = 0;
        for (int j = 0; j < c; ++j) row_sum += m.confusion[i][j];
        m.support[i] = row_sum;
        diag += m.confusion[i][i];
        if (row_sum > 0) {
            m.per_class[i] = static_cast<double>(m.confusion[i][i]) /
                             static_cast<double>(row_sum);
            m.class_defined[i] = true;
            acc_sum += m.per_class[i];
            ++defined;
        } else {
            m.zero_support_warning = true;
        }
    }
    m.oa = static_cast<double>(diag) / static_cast<double>(m.total);
    m.aa = acc_sum / defined;
    return m;
}

const Palette& default_palette() {
    static const Palette palette = {{
        {0, 0, 0},        // unlabeled
        {230, 25, 75},    // red
        {60, 180, 75},    // green
        {255, 225, 25},   // yellow
        {0, 130, 200},    // blue
        {245, 130, 48},   // orange
        {145, 30, 180},   // purple
        {70, 240, 240},   // cyan
        {240, 50, 230},   // magenta
        {210, 245, 60},   // lime
        {250, 190, 212},  // pink
        {0, 128, 128},    // teal
        {220, 190, 255},  // lavender
        {170, 110, 40},   // brown
        {255, 250, 200},  // beige
        {128, 0, 0},      // maroon
    }};
    return palette;
}

RgbImage render_map(const ClassificationResult& pred,
                    const Palette& palette) {
    RgbImage image(pred.height, pred.width);
    for (std::size_t i = 0; i < pred.class_ids.size(); ++i) {
        const auto id = pred.class_ids[i];
        if (id >= palette.size()) {
            fail(ErrorCode::PaletteMissing,
                 "no palette entry for class " + std::to_string(id));
        }
        image.data[i * 3] = palette[id][0];
        image.data[i * 3 + 1] = palette[id][1];
        image.data[i * 3 + 2] = palette[id][2];
    }
    return image;
}

std::string metrics_to_json(const Metrics& m,
                            const std::vector<std::string>& class_names) {
    json j;
    j["oa"] = m.oa;
    j["aa"] = m.aa;
    j["total"] = m.total;
    auto& per_class = j["per_class"] = json::array();
    for (std::size_t i = 0; i < m.per_class.size(); ++i) {
        if (m.class_defined[i]) {
            per_class.push_back(m.per_class[i]);
        } else {
            per_class.push_back(nullptr);
        }
    }
    j["support"] = m.support;
    j["confusion"] = m.confusion;
    j["classes"] = class_names;
    j["zero_support_warning"] = m.zero_support_warning;
    return j.dump(2) + "\n";
}

std::string metrics_table(const Metrics& m,
                          const std::vector<std::string>& class_names) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-20s %10s %10s\n", "class", "pixels",
                  "accuracy");
    out += line;
    for (std::size_t i = 0; i < m.per_class.size(); ++i) {
        const std::string name =
            i < class_names.size() ? class_names[i]
                                   : "class_" + std::to_string(i + 1);
        if (m.class_defined[i]) {
            std::snprintf(line, sizeof(line), "%-20s %10lld %10.4f\n",
                          name.c_str(), m.support[i], m.per_class[i]);
        } else {
            std::snprintf(line, sizeof(line), "%-20s %10lld %10s\n",
                          name.c_str(), m.support[i], "n/a");
        }
        out += line;
    }
    std::snprintf(line, sizeof(line), "%-20s %10lld %10.4f\n", "OA", m.total,
                  m.oa);
    out += line;
    std::snprintf(line, sizeof(line), "%-20s %10s %10.4f\n", "AA", "",
                  m.aa);
    out += line;
    return out;
}

}  // namespace dbgc
