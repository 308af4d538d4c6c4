#ifndef DBGC_GRAPHMAE_HPP
#define DBGC_GRAPHMAE_HPP

#include <cstdint>
#include <vector>

#include <dbgc/gat.hpp>
#include <dbgc/graph.hpp>
#include <dbgc/nn.hpp>

namespace dbgc {

struct GraphMAEConfig {
    int input_dim = 9;
    int head_dim = 16;
    int heads = 4;
    int enc_layers = 4;
    double mask_ratio = 0.5;
    double gamma = 3.0;
    int epochs = 400;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    int embed_dim() const { return head_dim * heads; }
};

// Graph with a subset of node feature rows replaced by the mask token.
struct MaskedGraph {
    const SuperpixelGraph* base = nullptr;
    std::vector<int> mask_set;  // sorted ascending
    MatrixRM masked_features;   // K x input_dim
};

// Encoder stack (all layers concatenate their heads; hidden layers use ELU,
// the last one is linear), a single averaged-head decoder back to the input
// dimension, and the two learnable mask tokens.
struct GraphMAEParams {
    GraphMAEConfig cfg;
    Eigen::VectorXd enc_mask_token;  // input_dim
    Eigen::VectorXd dec_mask_token;  // embed_dim
    std::vector<GatLayerParams> encoder;
    GatLayerParams decoder;

    std::vector<ParameterRef> refs();
    void check_finite() const;
};

GraphMAEParams init_graphmae(const GraphMAEConfig& cfg, Rng& rng);
GraphMAEParams zero_like(const GraphMAEParams& p);

// Samples round(ratio * K) nodes without replacement and overwrites their
// feature rows with `token`.
MaskedGraph mask_nodes(const SuperpixelGraph& g, double ratio,
                       const Eigen::VectorXd& token, std::uint64_t seed);

// Scaled cosine error (1/N) sum_i (1 - cos(x_i, z_i))^gamma over matching
// rows; norms are clamped below at 1e-12. Empty input raises EmptyMask.
double sce_loss(const MatrixRM& targets, const MatrixRM& recon, double gamma);
MatrixRM sce_loss_grad(const MatrixRM& targets, const MatrixRM& recon,
                       double gamma);

struct ReconstructResult {
    double loss = 0.0;
    std::vector<int> mask_set;
};

// Mask, encode, re-mask the masked rows to the decoder token, decode, and
// score the reconstruction of the masked rows against the input features.
ReconstructResult forward_reconstruct(const SuperpixelGraph& g,
                                      const GraphMAEParams& p, double ratio,
                                      std::uint64_t seed);

// Same pass plus gradient accumulation into `grads`.
ReconstructResult reconstruct_backward(const SuperpixelGraph& g,
                                       const GraphTopology& topo,
                                       const GraphMAEParams& p, double ratio,
                                       std::uint64_t seed,
                                       GraphMAEParams& grads);

struct PretrainResult {
    GraphMAEParams params;
    std::vector<double> loss_history;
};

// Full-graph training with a fresh mask sample every epoch.
PretrainResult pretrain(const SuperpixelGraph& g, const GraphMAEConfig& cfg);

// Per-pixel copy of each superpixel's embedding (the map F_s).
struct PixelFeatureMap {
    int height = 0;
    int width = 0;
    int d = 0;
    std::vector<double> values;  // height * width * d, row-major

    const double* at(int r, int c) const {
        return values.data() +
               (static_cast<std::size_t>(r) * width + c) * d;
    }
    double* at(int r, int c) {
        return values.data() +
               (static_cast<std::size_t>(r) * width + c) * d;
    }
};

// Encoder output on the unmasked graph, one row per node.
MatrixRM encode(const SuperpixelGraph& g, const GraphMAEParams& p);

PixelFeatureMap encode_and_broadcast(const SuperpixelGraph& g,
                                     const GraphMAEParams& p,
                                     const SuperpixelSegmentation& seg);

}  // namespace dbgc

#endif
