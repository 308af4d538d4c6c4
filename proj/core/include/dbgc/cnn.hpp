#ifndef DBGC_CNN_HPP
#define DBGC_CNN_HPP

#include <array>
#include <cstdint>
#include <vector>

#include <dbgc/nn.hpp>
#include <dbgc/polsar.hpp>

namespace dbgc {

struct CnnConfig {
    int patch = 15;  // n, odd
    int in_channels = FeatureImage::kChannels;
    std::array<int, 4> channels{128, 256, 512, 512};
    int embed_dim = 64;
};

// Pixel-centered patch in channel-planar layout:
// data[ch * n * n + r * n + c].
struct Patch {
    int row = 0;
    int col = 0;
    int n = 0;
    std::vector<double> data;
};

// Mirror-reflect padding without edge repeat: coordinate -1 maps to 1,
// H maps to H-2. Interior patches are exact crops.
Patch extract_patch(const FeatureImage& features, int row, int col, int n);

// Four conv blocks (3x3, stride 1, zero pad 1, ReLU) with 2x2 stride-2
// max-pooling after blocks 2 and 4, then one fully-connected layer to the
// embedding dimension.
struct ConvParams {
    MatrixRM w;         // out_ch x (in_ch * 9)
    Eigen::VectorXd b;  // out_ch
};

struct CnnParams {
    CnnConfig cfg;
    std::array<ConvParams, 4> conv;
    MatrixRM fc_w;         // embed_dim x flat_dim
    Eigen::VectorXd fc_b;  // embed_dim

    // Spatial side lengths after each pooling stage and the FC input width.
    int mid_size() const { return cfg.patch / 2; }
    int final_size() const { return mid_size() / 2; }
    int flat_dim() const {
        return cfg.channels[3] * final_size() * final_size();
    }

    std::vector<ParameterRef> refs();
    void check_finite() const;
};

CnnParams init_cnn(const CnnConfig& cfg, Rng& rng);
CnnParams zero_like(const CnnParams& p);

// Activations are matrices of shape (channels x batch * h * w); the cache
// keeps everything the backward pass needs.
struct CnnBatchCache {
    int batch = 0;
    MatrixRM a0;                      // input
    std::array<MatrixRM, 4> act;      // post-ReLU block outputs
    std::array<MatrixRM, 2> pooled;   // after the two pooling stages
    std::array<std::vector<int>, 2> argmax;  // source column per pooled cell
    MatrixRM flat;                    // flat_dim x batch
};

// Returns one embedding row per patch (batch x embed_dim).
MatrixRM cnn_forward(const std::vector<Patch>& batch, const CnnParams& p,
                     CnnBatchCache* cache = nullptr);

// Accumulates parameter gradients into `grads`; d_out is batch x embed_dim.
void cnn_backward(const MatrixRM& d_out, const CnnParams& p,
                  const CnnBatchCache& cache, CnnParams& grads);

}  // namespace dbgc

#endif
