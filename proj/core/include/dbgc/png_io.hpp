#ifndef DBGC_PNG_IO_HPP
#define DBGC_PNG_IO_HPP

#include <filesystem>

#include <dbgc/image.hpp>

namespace dbgc {

void write_png(const std::filesystem::path& path, const RgbImage& image);

// Decodes an 8-bit PNG to RGB. Grayscale and alpha variants are expanded;
// palette and 16-bit images are reduced to 8-bit RGB.
RgbImage read_png(const std::filesystem::path& path);

}  // namespace dbgc

#endif
