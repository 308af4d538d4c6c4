#ifndef DBGC_SLIC_HPP
#define DBGC_SLIC_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include <dbgc/image.hpp>

namespace dbgc {

// Partition of the image into K 4-connected segments with contiguous ids.
struct SuperpixelSegmentation {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> labels;  // row-major, values in [0, k)
    int k = 0;
    int k_target = 0;

    std::uint32_t label(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * width + c];
    }

    // Checks the structural invariants: every id in [0, k) used, labels in
    // range, every segment one 4-connected component, K within 1.5x of the
    // requested count. Throws CorruptData / InvalidK on violation.
    void validate() const;
};

// SLIC segmentation of an RGB image in CIELAB space. Cluster centers start
// on a regular grid of step S = sqrt(HW / k_target), moved to the lowest
// gradient position in a 3x3 window; assignment searches a 2Sx2S window per
// center with distance d = d_lab + (compactness / S) * d_xy; segments
// smaller than S^2/4 are merged into their largest adjacent segment, and
// segments keep merging until K <= 1.5 * k_target. The result is fully
// deterministic; `seed` is accepted for interface stability but unused.
SuperpixelSegmentation slic_segment(const RgbImage& rgb, int k_target,
                                    double compactness = 10.0,
                                    int iterations = 10,
                                    std::uint64_t seed = 0);

std::vector<std::size_t> segment_sizes(const SuperpixelSegmentation& seg);

// Raw little-endian u32 label file plus JSON header.
void save_segmentation(const std::filesystem::path& directory,
                       const SuperpixelSegmentation& seg);
SuperpixelSegmentation load_segmentation(
    const std::filesystem::path& directory);

// Copy of the input with segment boundaries painted white.
RgbImage boundary_overlay(const RgbImage& rgb,
                          const SuperpixelSegmentation& seg);

}  // namespace dbgc

#endif
