#ifndef DBGC_METRICS_HPP
#define DBGC_METRICS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <dbgc/fusion.hpp>
#include <dbgc/image.hpp>
#include <dbgc/polsar.hpp>

namespace dbgc {

struct Metrics {
    double oa = 0.0;
    double aa = 0.0;
    std::vector<double> per_class;    // zero where undefined
    std::vector<bool> class_defined;  // false for zero-support classes
    std::vector<std::vector<long long>> confusion;  // rows true, cols pred
    std::vector<long long> support;   // per-class evaluated pixel counts
    long long total = 0;
    bool zero_support_warning = false;
};

// Confusion statistics over labeled pixels, with the given coordinates
// (typically the training split) left out. Classes with no remaining test
// pixels are dropped from AA and flagged.
Metrics evaluate(const ClassificationResult& pred, const GroundTruth& gt,
                 const std::vector<LabeledPixel>& exclude);

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// 16 entries: index 0 is the reserved unlabeled color (black), then 15
// distinguishable class colors.
const Palette& default_palette();

// Colors each pixel by its class id. Ids must index into the palette.
RgbImage render_map(const ClassificationResult& pred, const Palette& palette);

std::string metrics_to_json(const Metrics& m,
                            const std::vector<std::string>& class_names);

// Plain-text per-class table with OA/AA summary rows.
std::string metrics_table(const Metrics& m,
                          const std::vector<std::string>& class_names);

}  // namespace dbgc

#endif
