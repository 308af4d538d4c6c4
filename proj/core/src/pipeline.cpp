#include <dbgc/pipeline.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include <dbgc/cnn.hpp>
#include <dbgc/error.hpp>
#include <dbgc/fusion.hpp>
#include <dbgc/graph.hpp>
#include <dbgc/graphmae.hpp>
#include <dbgc/io.hpp>
#include <dbgc/metrics.hpp>
#include <dbgc/nn.hpp>
#include <dbgc/png_io.hpp>
#include <dbgc/slic.hpp>

namespace dbgc {

using json = nlohmann::json;

int PipelineConfig::resolved_k_target() const {
    if (k_target > 0) return k_target;
    return std::max(1, height * width / 100);
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& j, const char* where,
                    std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(known.begin(), known.end(), [&](const char* k) {
                return key == k;
            }) == known.end()) {
            fail(ErrorCode::InvalidConfig,
                 std::string("unknown key '") + key + "' in " + where);
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            fail(ErrorCode::InvalidConfig,
                 std::string("config key '") + key + "' has the wrong type");
        }
    }
}

}  // namespace

PipelineConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig,
             std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, "config root",
                   {"data", "superpixel", "graphmae", "cnn", "fusion",
                    "split", "seed", "out"});
    PipelineConfig cfg;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown(d, "data",
                       {"source", "directory", "height", "width",
                        "num_classes", "looks", "layout", "voronoi_cells"});
        get_if(d, "source", cfg.source);
        get_if(d, "directory", cfg.data_dir);
        get_if(d, "height", cfg.height);
        get_if(d, "width", cfg.width);
        get_if(d, "num_classes", cfg.num_classes);
        get_if(d, "looks", cfg.looks);
        get_if(d, "layout", cfg.layout);
        get_if(d, "voronoi_cells", cfg.voronoi_cells);
    }
    if (j.contains("superpixel")) {
        const auto& s = j.at("superpixel");
        reject_unknown(s, "superpixel",
                       {"k_target", "compactness", "iterations"});
        get_if(s, "k_target", cfg.k_target);
        get_if(s, "compactness", cfg.compactness);
        get_if(s, "iterations", cfg.slic_iterations);
    }
    if (j.contains("graphmae")) {
        const auto& g = j.at("graphmae");
        reject_unknown(g, "graphmae",
                       {"ratio", "gamma", "epochs", "lr", "head_dim", "heads",
                        "enc_layers"});
        get_if(g, "ratio", cfg.mask_ratio);
        get_if(g, "gamma", cfg.gamma);
        get_if(g, "epochs", cfg.pretrain_epochs);
        get_if(g, "lr", cfg.pretrain_lr);
        get_if(g, "head_dim", cfg.head_dim);
        get_if(g, "heads", cfg.heads);
        get_if(g, "enc_layers", cfg.enc_layers);
    }
    if (j.contains("cnn")) {
        const auto& c = j.at("cnn");
        reject_unknown(c, "cnn", {"n", "channels", "embed_dim"});
        get_if(c, "n", cfg.patch);
        get_if(c, "channels", cfg.cnn_channels);
        get_if(c, "embed_dim", cfg.embed_dim);
    }
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        reject_unknown(f, "fusion", {"alpha", "epochs", "lr", "batch"});
        get_if(f, "alpha", cfg.alpha);
        get_if(f, "epochs", cfg.joint_epochs);
        get_if(f, "lr", cfg.joint_lr);
        get_if(f, "batch", cfg.batch_size);
    }
    if (j.contains("split")) {
        const auto& s = j.at("split");
        reject_unknown(s, "split", {"per_class"});
        get_if(s, "per_class", cfg.per_class);
    }
    get_if(j, "seed", cfg.seed);
    get_if(j, "out", cfg.out_dir);

    if (cfg.source != "synthetic" && cfg.source != "directory") {
        fail(ErrorCode::InvalidConfig,
             "data.source must be 'synthetic' or 'directory'");
    }
    if (cfg.layout != "voronoi" && cfg.layout != "bands") {
        fail(ErrorCode::InvalidConfig,
             "data.layout must be 'voronoi' or 'bands'");
    }
    if (cfg.source == "directory" && cfg.data_dir.empty()) {
        fail(ErrorCode::InvalidConfig,
             "data.directory is required when data.source is 'directory'");
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config_json(read_text_file(path));
}

std::string config_to_json(const PipelineConfig& cfg) {
    json j;
    j["data"] = {{"source", cfg.source},      {"directory", cfg.data_dir},
                 {"height", cfg.height},      {"width", cfg.width},
                 {"num_classes", cfg.num_classes}, {"looks", cfg.looks},
                 {"layout", cfg.layout},
                 {"voronoi_cells", cfg.voronoi_cells}};
    j["superpixel"] = {{"k_target", cfg.k_target},
                       {"compactness", cfg.compactness},
                       {"iterations", cfg.slic_iterations}};
    j["graphmae"] = {{"ratio", cfg.mask_ratio}, {"gamma", cfg.gamma},
                     {"epochs", cfg.pretrain_epochs},
                     {"lr", cfg.pretrain_lr},   {"head_dim", cfg.head_dim},
                     {"heads", cfg.heads},      {"enc_layers", cfg.enc_layers}};
    j["cnn"] = {{"n", cfg.patch},
                {"channels", cfg.cnn_channels},
                {"embed_dim", cfg.embed_dim}};
    j["fusion"] = {{"alpha", cfg.alpha},
                   {"epochs", cfg.joint_epochs},
                   {"lr", cfg.joint_lr},
                   {"batch", cfg.batch_size}};
    j["split"] = {{"per_class", cfg.per_class}};
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Artifact persistence
// ---------------------------------------------------------------------------

void save_features(const std::filesystem::path& directory,
                   const FeatureImage& features) {
    std::filesystem::create_directories(directory);
    write_f64_file(directory / "features.bin", features.data);
    json j{{"height", features.height},
           {"width", features.width},
           {"channels", FeatureImage::kChannels},
           {"normalized", features.normalized},
           {"mean", features.norm_mean},
           {"std", features.norm_std}};
    write_text_file(directory / "features.json", j.dump(2) + "\n");
}

FeatureImage load_features(const std::filesystem::path& directory) {
    const auto header_path = directory / "features.json";
    if (!std::filesystem::exists(header_path)) {
        fail(ErrorCode::MissingChannel,
             "missing feature header " + header_path.string());
    }
    json j;
    try {
        j = json::parse(read_text_file(header_path));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptData,
             "cannot parse " + header_path.string() + ": " + e.what());
    }
    FeatureImage f(j.at("height").get<int>(), j.at("width").get<int>());
    if (j.at("channels").get<int>() != FeatureImage::kChannels) {
        fail(ErrorCode::ShapeMismatch, "feature file channel count");
    }
    f.normalized = j.at("normalized").get<bool>();
    f.norm_mean = j.at("mean").get<std::array<double, 9>>();
    f.norm_std = j.at("std").get<std::array<double, 9>>();
    auto data = read_f64_file(directory / "features.bin");
    if (data.size() != f.data.size()) {
        fail(ErrorCode::ShapeMismatch,
             "feature data holds " + std::to_string(data.size()) +
                 " values, expected " + std::to_string(f.data.size()));
    }
    f.data = std::move(data);
    return f;
}

void save_split(const std::filesystem::path& path, const LabelSplit& split) {
    json j;
    j["seed"] = split.seed;
    j["per_class"] = split.per_class;
    j["empty_test_class"] = split.empty_test_class;
    auto& train = j["train"] = json::array();
    for (const auto& p : split.train_coords) {
        train.push_back({p.row, p.col, p.cls});
    }
    write_text_file(path, j.dump() + "\n");
}

LabelSplit load_split(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        fail(ErrorCode::MissingChannel, "missing split " + path.string());
    }
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(ErrorCode::CorruptData,
             "cannot parse " + path.string() + ": " + e.what());
    }
    LabelSplit split;
    split.seed = j.at("seed").get<std::uint64_t>();
    split.per_class = j.at("per_class").get<int>();
    split.empty_test_class = j.at("empty_test_class").get<bool>();
    for (const auto& row : j.at("train")) {
        split.train_coords.push_back({row.at(0).get<int>(),
                                      row.at(1).get<int>(),
                                      row.at(2).get<int>()});
    }
    return split;
}

// ---------------------------------------------------------------------------
// Locking and manifest
// ---------------------------------------------------------------------------

namespace {

class DirLock {
public:
    explicit DirLock(const std::filesystem::path& out_dir)
        : path_(out_dir / "manifest.lock") {
        std::filesystem::create_directories(out_dir);
        if (std::filesystem::exists(path_)) {
            fail(ErrorCode::LockHeld,
                 "output directory is locked by " + path_.string() +
                     "; remove the file if no other run is active");
        }
        std::ofstream f(path_);
        if (!f) {
            fail(ErrorCode::IoError, "cannot create " + path_.string());
        }
        f << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path path_;
};

struct StageSeeds {
    std::uint64_t scene, split, pretrain, joint;
};

StageSeeds stage_seeds(const PipelineConfig& cfg) {
    return {derive_seed(cfg.seed, "scene"), derive_seed(cfg.seed, "split"),
            derive_seed(cfg.seed, "pretrain"),
            derive_seed(cfg.seed, "joint")};
}

// Adds one stage record (artifact checksums plus the seeds it consumed) to
// manifest.json, creating the manifest on first use.
void record_stage(const PipelineConfig& cfg, const std::string& stage,
                  const std::vector<std::string>& artifacts,
                  const json& stage_seed) {
    const auto out = std::filesystem::path(cfg.out_dir);
    const auto manifest_path = out / "manifest.json";
    json manifest;
    if (std::filesystem::exists(manifest_path)) {
        try {
            manifest = json::parse(read_text_file(manifest_path));
        } catch (const json::exception& e) {
            fail(ErrorCode::CorruptData,
                 "cannot parse existing manifest: " + std::string(e.what()));
        }
    }
    manifest["root_seed"] = cfg.seed;
    manifest["config"] = json::parse(config_to_json(cfg));
    json entry;
    entry["seed"] = stage_seed;
    auto& files = entry["artifacts"] = json::object();
    for (const auto& rel : artifacts) {
        files[rel] = sha256_file_hex(out / rel);
    }
    manifest["stages"][stage] = std::move(entry);
    write_text_file(manifest_path, manifest.dump(2) + "\n");
}

GraphMAEConfig graphmae_config(const PipelineConfig& cfg,
                               std::uint64_t seed) {
    GraphMAEConfig g;
    g.input_dim = FeatureImage::kChannels;
    g.head_dim = cfg.head_dim;
    g.heads = cfg.heads;
    g.enc_layers = cfg.enc_layers;
    g.mask_ratio = cfg.mask_ratio;
    g.gamma = cfg.gamma;
    g.epochs = cfg.pretrain_epochs;
    g.lr = cfg.pretrain_lr;
    g.seed = seed;
    return g;
}

CnnConfig cnn_config(const PipelineConfig& cfg) {
    CnnConfig c;
    c.patch = cfg.patch;
    c.in_channels = FeatureImage::kChannels;
    c.channels = cfg.cnn_channels;
    c.embed_dim = cfg.embed_dim;
    return c;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<double>& losses) {
    std::string text = "epoch,loss\n";
    char line[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, losses[i]);
        text += line;
    }
    write_text_file(path, text);
}

std::filesystem::path data_root(const PipelineConfig& cfg) {
    if (cfg.source == "directory") {
        return cfg.data_dir;
    }
    return std::filesystem::path(cfg.out_dir) / "data";
}

json graphmae_checkpoint_config(const GraphMAEConfig& g) {
    return {{"type", "graphmae"},      {"input_dim", g.input_dim},
            {"head_dim", g.head_dim},  {"heads", g.heads},
            {"enc_layers", g.enc_layers}, {"ratio", g.mask_ratio},
            {"gamma", g.gamma},        {"epochs", g.epochs},
            {"lr", g.lr},              {"seed", g.seed}};
}

GraphMAEParams load_graphmae_checkpoint(const std::filesystem::path& path) {
    const json c = json::parse(checkpoint_config(path));
    if (c.value("type", "") != "graphmae") {
        fail(ErrorCode::CorruptData,
             "checkpoint at " + path.string() + " is not a graph encoder");
    }
    GraphMAEConfig g;
    g.input_dim = c.at("input_dim").get<int>();
    g.head_dim = c.at("head_dim").get<int>();
    g.heads = c.at("heads").get<int>();
    g.enc_layers = c.at("enc_layers").get<int>();
    g.mask_ratio = c.at("ratio").get<double>();
    g.gamma = c.at("gamma").get<double>();
    g.epochs = c.at("epochs").get<int>();
    g.lr = c.at("lr").get<double>();
    g.seed = c.at("seed").get<std::uint64_t>();
    Rng shape_rng(0);
    GraphMAEParams params = init_graphmae(g, shape_rng);
    load_checkpoint_params(path, params.refs());
    return params;
}

struct JointCheckpoint {
    CnnParams cnn;
    HeadParams head;
    double alpha = 0.0;
};

void save_joint_checkpoint(const std::filesystem::path& path, CnnParams& cnn,
                           HeadParams& head, const PipelineConfig& cfg,
                           int num_classes, std::uint64_t seed) {
    json c = {{"type", "joint"},
              {"cnn",
               {{"n", cnn.cfg.patch},
                {"channels", cnn.cfg.channels},
                {"embed_dim", cnn.cfg.embed_dim}}},
              {"classes", num_classes},
              {"alpha", cfg.alpha},
              {"epochs", cfg.joint_epochs},
              {"lr", cfg.joint_lr},
              {"batch", cfg.batch_size},
              {"seed", seed}};
    auto refs = cnn.refs();
    auto head_refs = head.refs();
    refs.insert(refs.end(), head_refs.begin(), head_refs.end());
    save_checkpoint(path, c.dump(), refs);
}

JointCheckpoint load_joint_checkpoint(const std::filesystem::path& path) {
    const json c = json::parse(checkpoint_config(path));
    if (c.value("type", "") != "joint") {
        fail(ErrorCode::CorruptData,
             "checkpoint at " + path.string() + " is not a classifier");
    }
    CnnConfig cc;
    cc.patch = c.at("cnn").at("n").get<int>();
    cc.channels = c.at("cnn").at("channels").get<std::array<int, 4>>();
    cc.embed_dim = c.at("cnn").at("embed_dim").get<int>();
    Rng shape_rng(0);
    JointCheckpoint ck{init_cnn(cc, shape_rng),
                       init_head(c.at("classes").get<int>(), cc.embed_dim,
                                 shape_rng),
                       c.at("alpha").get<double>()};
    auto refs = ck.cnn.refs();
    auto head_refs = ck.head.refs();
    refs.insert(refs.end(), head_refs.begin(), head_refs.end());
    load_checkpoint_params(path, refs);
    return ck;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void cmd_prepare(const PipelineConfig& cfg) {
    const auto out = std::filesystem::path(cfg.out_dir);
    DirLock lock(out);
    const StageSeeds seeds = stage_seeds(cfg);

    CoherencyImage coh;
    GroundTruth gt;
    std::vector<std::string> artifacts;
    if (cfg.source == "synthetic") {
        SceneSpec spec = make_default_scene(cfg.height, cfg.width,
                                            cfg.num_classes, cfg.looks);
        spec.layout = cfg.layout == "bands" ? SceneLayout::Bands
                                            : SceneLayout::Voronoi;
        spec.voronoi_cells = cfg.voronoi_cells;
        SynthScene scene = synth_scene(spec, seeds.scene);
        coh = std::move(scene.coherency);
        gt = std::move(scene.truth);
        save_coherency(out / "data", coh);
        save_ground_truth(out / "data", gt);
        artifacts.insert(
            artifacts.end(),
            {"data/header.json", "data/ground_truth.bin", "data/T11.bin",
             "data/T22.bin", "data/T33.bin", "data/T12_real.bin",
             "data/T12_imag.bin", "data/T13_real.bin", "data/T13_imag.bin",
             "data/T23_real.bin", "data/T23_imag.bin"});
    } else {
        coh = load_coherency(cfg.data_dir);
        gt = load_ground_truth(cfg.data_dir);
    }

    const FeatureImage features = normalize_features(extract_features(coh));
    save_features(out, features);

    const RgbImage pauli = pauli_rgb(coh);
    write_png(out / "pauli.png", pauli);

    const LabelSplit split = make_split(gt, cfg.per_class, seeds.split);
    save_split(out / "split.json", split);

    artifacts.insert(artifacts.end(), {"features.bin", "features.json",
                                       "pauli.png", "split.json"});
    record_stage(cfg, "prepare", artifacts,
                 {{"scene", seeds.scene}, {"split", seeds.split}});
}

void cmd_segment(const PipelineConfig& cfg) {
    const auto out = std::filesystem::path(cfg.out_dir);
    DirLock lock(out);

    const RgbImage pauli = read_png(out / "pauli.png");
    const SuperpixelSegmentation seg =
        slic_segment(pauli, cfg.resolved_k_target(), cfg.compactness,
                     cfg.slic_iterations);
    save_segmentation(out / "segmentation", seg);
    write_png(out / "segmentation" / "boundary.png",
              boundary_overlay(pauli, seg));
    record_stage(cfg, "segment",
                 {"segmentation/labels.bin", "segmentation/segmentation.json",
                  "segmentation/boundary.png"},
                 0);
}

void cmd_pretrain(const PipelineConfig& cfg) {
    const auto out = std::filesystem::path(cfg.out_dir);
    DirLock lock(out);
    const StageSeeds seeds = stage_seeds(cfg);

    const FeatureImage features = load_features(out);
    const SuperpixelSegmentation seg = load_segmentation(out / "segmentation");
    const SuperpixelGraph graph = build_graph(features, seg);

    const GraphMAEConfig mae_cfg = graphmae_config(cfg, seeds.pretrain);
    PretrainResult result = pretrain(graph, mae_cfg);
    save_checkpoint(out / "graphmae.ckpt",
                    graphmae_checkpoint_config(mae_cfg).dump(),
                    result.params.refs());
    write_loss_csv(out / "pretrain_loss.csv", result.loss_history);
    record_stage(cfg, "pretrain", {"graphmae.ckpt", "pretrain_loss.csv"},
                 seeds.pretrain);
}

void cmd_train(const PipelineConfig& cfg) {
    const auto out = std::filesystem::path(cfg.out_dir);
    DirLock lock(out);
    const StageSeeds seeds = stage_seeds(cfg);

    const FeatureImage features = load_features(out);
    const SuperpixelSegmentation seg = load_segmentation(out / "segmentation");
    const SuperpixelGraph graph = build_graph(features, seg);
    const GraphMAEParams mae = load_graphmae_checkpoint(out / "graphmae.ckpt");
    const PixelFeatureMap fs_map = encode_and_broadcast(graph, mae, seg);

    const GroundTruth gt = load_ground_truth(data_root(cfg));
    const LabelSplit split = load_split(out / "split.json");

    Rng init_rng(derive_seed(seeds.joint, "init"));
    CnnParams cnn = init_cnn(cnn_config(cfg), init_rng);
    HeadParams head =
        init_head(gt.num_classes(), cfg.embed_dim, init_rng);

    FusionConfig fusion_cfg;
    fusion_cfg.alpha = cfg.alpha;
    fusion_cfg.epochs = cfg.joint_epochs;
    fusion_cfg.lr = cfg.joint_lr;
    fusion_cfg.batch_size = cfg.batch_size;
    fusion_cfg.seed = seeds.joint;

    JointTrainResult result = train_joint(fs_map, features, split,
                                          std::move(cnn), std::move(head),
                                          fusion_cfg);
    save_joint_checkpoint(out / "joint.ckpt", result.cnn, result.head, cfg,
                          gt.num_classes(), seeds.joint);
    write_loss_csv(out / "joint_loss.csv", result.loss_history);
    record_stage(cfg, "train", {"joint.ckpt", "joint_loss.csv"}, seeds.joint);
}

void cmd_evaluate(const PipelineConfig& cfg) {
    const auto out = std::filesystem::path(cfg.out_dir);
    DirLock lock(out);

    const FeatureImage features = load_features(out);
    const SuperpixelSegmentation seg = load_segmentation(out / "segmentation");
    const SuperpixelGraph graph = build_graph(features, seg);
    const GraphMAEParams mae = load_graphmae_checkpoint(out / "graphmae.ckpt");
    const PixelFeatureMap fs_map = encode_and_broadcast(graph, mae, seg);
    const JointCheckpoint joint = load_joint_checkpoint(out / "joint.ckpt");

    const ClassificationResult pred =
        predict_map(fs_map, features, joint.cnn, joint.head, joint.alpha);
    write_u8_file(out / "map_labels.bin", pred.class_ids);
    write_png(out / "map.png", render_map(pred, default_palette()));

    const GroundTruth gt = load_ground_truth(data_root(cfg));
    const LabelSplit split = load_split(out / "split.json");
    const Metrics metrics = evaluate(pred, gt, split.train_coords);
    write_text_file(out / "metrics.json",
                    metrics_to_json(metrics, gt.class_names));
    write_text_file(out / "metrics.txt",
                    metrics_table(metrics, gt.class_names));
    record_stage(cfg, "evaluate",
                 {"map_labels.bin", "map.png", "metrics.json", "metrics.txt"},
                 0);
}

void run_all(const PipelineConfig& cfg) {
    cmd_prepare(cfg);
    cmd_segment(cfg);
    cmd_pretrain(cfg);
    cmd_train(cfg);
    cmd_evaluate(cfg);
}

}  // namespace dbgc
