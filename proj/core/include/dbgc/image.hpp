#ifndef DBGC_IMAGE_HPP
#define DBGC_IMAGE_HPP

#include <array>
#include <cstdint>
#include <vector>

#include <dbgc/error.hpp>

namespace dbgc {

// 8-bit interleaved RGB, row-major.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // height * width * 3

    RgbImage() = default;
    RgbImage(int h, int w)
        : height(h), width(w),
          data(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    std::uint8_t at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }

    void set_pixel(int r, int c, std::array<std::uint8_t, 3> rgb) {
        at(r, c, 0) = rgb[0];
        at(r, c, 1) = rgb[1];
        at(r, c, 2) = rgb[2];
    }
};

inline void require_same_dims(int h1, int w1, int h2, int w2,
                              const char* what) {
    if (h1 != h2 || w1 != w2) {
        fail(ErrorCode::ShapeMismatch, std::string(what) + ": " +
                                           std::to_string(h1) + "x" +
                                           std::to_string(w1) + " vs " +
                                           std::to_string(h2) + "x" +
                                           std::to_string(w2));
    }
}

}  // namespace dbgc

#endif
