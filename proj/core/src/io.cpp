#include <dbgc/io.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>

#include <openssl/evp.h>

#include <dbgc/error.hpp>

namespace dbgc {

const char* error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingChannel: return "MissingChannel";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::CorruptData: return "CorruptData";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::ClassTooSmall: return "ClassTooSmall";
        case ErrorCode::InvalidK: return "InvalidK";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::NumericalError: return "NumericalError";
        case ErrorCode::TrainingDiverged: return "TrainingDiverged";
        case ErrorCode::InvalidPatchSize: return "InvalidPatchSize";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
        case ErrorCode::PaletteMissing: return "PaletteMissing";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::LockHeld: return "LockHeld";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(size);
    if (size > 0 &&
        !in.read(reinterpret_cast<char*>(bytes.data()),
                 static_cast<std::streamsize>(size))) {
        fail(ErrorCode::IoError, "short read on " + path.string());
    }
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const void* data, std::size_t size) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(size));
    if (!out) fail(ErrorCode::IoError, "short write on " + path.string());
}

namespace {

template <typename T>
std::vector<T> read_typed(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() % sizeof(T) != 0) {
        fail(ErrorCode::ShapeMismatch,
             path.string() + " size " + std::to_string(bytes.size()) +
                 " is not a multiple of " + std::to_string(sizeof(T)));
    }
    std::vector<T> values(bytes.size() / sizeof(T));
    if (!values.empty()) {
        std::memcpy(values.data(), bytes.data(), bytes.size());
    }
    return values;
}

template <typename T>
void write_typed(const std::filesystem::path& path,
                 const std::vector<T>& values) {
    write_file_bytes(path, values.data(), values.size() * sizeof(T));
}

}  // namespace

std::vector<float> read_f32_file(const std::filesystem::path& path) {
    return read_typed<float>(path);
}
std::vector<double> read_f64_file(const std::filesystem::path& path) {
    return read_typed<double>(path);
}
std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path) {
    return read_typed<std::uint8_t>(path);
}
std::vector<std::uint32_t> read_u32_file(const std::filesystem::path& path) {
    return read_typed<std::uint32_t>(path);
}

void write_f32_file(const std::filesystem::path& path,
                    const std::vector<float>& values) {
    write_typed(path, values);
}
void write_f64_file(const std::filesystem::path& path,
                    const std::vector<double>& values) {
    write_typed(path, values);
}
void write_u8_file(const std::filesystem::path& path,
                   const std::vector<std::uint8_t>& values) {
    write_typed(path, values);
}
void write_u32_file(const std::filesystem::path& path,
                    const std::vector<std::uint32_t>& values) {
    write_typed(path, values);
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
    write_file_bytes(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    if (EVP_Digest(data, size, digest, &digest_len, EVP_sha256(), nullptr) !=
        1) {
        fail(ErrorCode::IoError, "sha256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * digest_len);
    for (unsigned int i = 0; i < digest_len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file_hex(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace dbgc
