#include <dbgc/nn.hpp>

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include <dbgc/error.hpp>
#include <dbgc/io.hpp>

namespace dbgc {

using json = nlohmann::json;

std::size_t total_size(const std::vector<ParameterRef>& refs) {
    std::size_t n = 0;
    for (const auto& r : refs) n += r.size;
    return n;
}

void Adam::step(const std::vector<ParameterRef>& params,
                const std::vector<ParameterRef>& grads) {
    if (params.size() != grads.size()) {
        fail(ErrorCode::ShapeMismatch,
             "parameter and gradient lists differ in length");
    }
    const std::size_t n = total_size(params);
    if (m_.empty()) {
        m_.assign(n, 0.0);
        v_.assign(n, 0.0);
    } else if (m_.size() != n) {
        fail(ErrorCode::ShapeMismatch,
             "parameter count changed between optimizer steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t off = 0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size != grads[b].size) {
            fail(ErrorCode::ShapeMismatch,
                 "gradient shape mismatch for " + params[b].name);
        }
        double* p = params[b].data;
        const double* g = grads[b].data;
        for (std::size_t i = 0; i < params[b].size; ++i, ++off) {
            m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g[i];
            v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m_[off] / bc1;
            const double vhat = v_[off] / bc2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void glorot_fill(double* data, std::size_t size, int fan_in, int fan_out,
                 Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < size; ++i) {
        data[i] = (2.0 * rng.uniform01() - 1.0) * limit;
    }
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::string& config_json,
                     const std::vector<ParameterRef>& params) {
    json manifest;
    manifest["format"] = "dbgc-checkpoint";
    manifest["version"] = 1;
    try {
        manifest["config"] = json::parse(config_json);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig,
             std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    auto& list = manifest["params"] = json::array();
    for (const auto& r : params) {
        list.push_back({{"name", r.name}, {"shape", r.shape}});
    }
    const std::string text = manifest.dump();

    std::vector<std::uint8_t> bytes;
    bytes.reserve(8 + text.size() + total_size(params) * sizeof(double));
    const std::uint64_t len = text.size();
    for (int i = 0; i < 8; ++i) {
        bytes.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    }
    bytes.insert(bytes.end(), text.begin(), text.end());
    for (const auto& r : params) {
        const auto* raw = reinterpret_cast<const std::uint8_t*>(r.data);
        bytes.insert(bytes.end(), raw, raw + r.size * sizeof(double));
    }
    write_file_bytes(path, bytes.data(), bytes.size());
}

namespace {

json read_manifest(const std::vector<std::uint8_t>& bytes,
                   const std::filesystem::path& path,
                   std::size_t* blob_offset) {
    if (bytes.size() < 8) {
        fail(ErrorCode::CorruptData,
             "checkpoint too short: " + path.string());
    }
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    if (8 + len > bytes.size()) {
        fail(ErrorCode::CorruptData,
             "checkpoint manifest length exceeds file: " + path.string());
    }
    json manifest;
    try {
        manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptData,
             "cannot parse checkpoint manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "dbgc-checkpoint") {
        fail(ErrorCode::CorruptData,
             "not a checkpoint file: " + path.string());
    }
    *blob_offset = 8 + len;
    return manifest;
}

}  // namespace

std::string checkpoint_config(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t off = 0;
    const json manifest = read_manifest(bytes, path, &off);
    return manifest.at("config").dump();
}

void load_checkpoint_params(const std::filesystem::path& path,
                            const std::vector<ParameterRef>& params) {
    const auto bytes = read_file_bytes(path);
    std::size_t off = 0;
    const json manifest = read_manifest(bytes, path, &off);
    const auto& list = manifest.at("params");
    if (list.size() != params.size()) {
        fail(ErrorCode::CorruptData,
             "checkpoint holds " + std::to_string(list.size()) +
                 " parameters, expected " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = list[i];
        if (entry.at("name").get<std::string>() != params[i].name) {
            fail(ErrorCode::CorruptData,
                 "checkpoint parameter " + std::to_string(i) + " is '" +
                     entry.at("name").get<std::string>() + "', expected '" +
                     params[i].name + "'");
        }
        if (entry.at("shape").get<std::vector<int>>() != params[i].shape) {
            fail(ErrorCode::CorruptData,
                 "shape mismatch for checkpoint parameter " + params[i].name);
        }
        const std::size_t nbytes = params[i].size * sizeof(double);
        if (off + nbytes > bytes.size()) {
            fail(ErrorCode::CorruptData,
                 "checkpoint truncated at parameter " + params[i].name);
        }
        std::memcpy(params[i].data, bytes.data() + off, nbytes);
        off += nbytes;
    }
    if (off != bytes.size()) {
        fail(ErrorCode::CorruptData,
             "checkpoint has trailing bytes: " + path.string());
    }
}

}  // namespace dbgc
