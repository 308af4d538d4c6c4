#ifndef DBGC_IO_HPP
#define DBGC_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dbgc {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const void* data, std::size_t size);

// Raw little-endian arrays. The in-memory layout is assumed little-endian,
// which holds for every platform this project targets.
std::vector<float> read_f32_file(const std::filesystem::path& path);
std::vector<double> read_f64_file(const std::filesystem::path& path);
std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path);
std::vector<std::uint32_t> read_u32_file(const std::filesystem::path& path);

void write_f32_file(const std::filesystem::path& path,
                    const std::vector<float>& values);
void write_f64_file(const std::filesystem::path& path,
                    const std::vector<double>& values);
void write_u8_file(const std::filesystem::path& path,
                   const std::vector<std::uint8_t>& values);
void write_u32_file(const std::filesystem::path& path,
                    const std::vector<std::uint32_t>& values);

void write_text_file(const std::filesystem::path& path,
                     const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Hex-encoded SHA-256 of a buffer or file, used for artifact checksums.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace dbgc

#endif
