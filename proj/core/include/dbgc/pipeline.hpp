#ifndef DBGC_PIPELINE_HPP
#define DBGC_PIPELINE_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <dbgc/polsar.hpp>

namespace dbgc {

// Full run description. The JSON schema mirrors the nesting here: "data",
// "superpixel", "graphmae", "cnn", "fusion", "split", plus top-level "seed"
// and "out". Every field has a default; unknown keys are rejected.
struct PipelineConfig {
    // data
    std::string source = "synthetic";  // "synthetic" | "directory"
    std::string data_dir;
    int height = 128;
    int width = 128;
    int num_classes = 5;
    int looks = 4;
    std::string layout = "voronoi";  // "voronoi" | "bands"
    int voronoi_cells = 0;

    // superpixel
    int k_target = 0;  // 0 -> pixel count / 100
    double compactness = 10.0;
    int slic_iterations = 10;

    // graphmae
    double mask_ratio = 0.5;
    double gamma = 3.0;
    int pretrain_epochs = 400;
    double pretrain_lr = 1e-3;
    int head_dim = 16;
    int heads = 4;
    int enc_layers = 4;

    // cnn
    int patch = 15;
    std::array<int, 4> cnn_channels{128, 256, 512, 512};
    int embed_dim = 64;

    // fusion
    double alpha = 0.4;
    int joint_epochs = 250;
    double joint_lr = 5e-4;
    int batch_size = 64;

    // split
    int per_class = 111;

    std::uint64_t seed = 0;
    std::string out_dir = "run";

    int resolved_k_target() const;
};

PipelineConfig parse_config_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);

// Feature image persistence (raw f64 data plus a JSON sidecar with the
// dimensions and normalization statistics).
void save_features(const std::filesystem::path& directory,
                   const FeatureImage& features);
FeatureImage load_features(const std::filesystem::path& directory);

void save_split(const std::filesystem::path& path, const LabelSplit& split);
LabelSplit load_split(const std::filesystem::path& path);

// Pipeline stages. Each acquires the output-directory lock, writes its
// artifacts, and records them with checksums in manifest.json.
void cmd_prepare(const PipelineConfig& cfg);
void cmd_segment(const PipelineConfig& cfg);
void cmd_pretrain(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_evaluate(const PipelineConfig& cfg);
void run_all(const PipelineConfig& cfg);

}  // namespace dbgc

#endif
