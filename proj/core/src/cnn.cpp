#include <dbgc/cnn.hpp>

#include <cmath>
#include <limits>
#include <string>

#include <dbgc/error.hpp>

namespace dbgc {

Patch extract_patch(const FeatureImage& features, int row, int col, int n) {
    if (n < 1 || n % 2 == 0) {
        fail(ErrorCode::InvalidPatchSize,
             "patch size must be odd and positive, got " + std::to_string(n));
    }
    if (row < 0 || row >= features.height || col < 0 ||
        col >= features.width) {
        fail(ErrorCode::OutOfBounds,
             "patch center (" + std::to_string(row) + ", " +
                 std::to_string(col) + ") outside image");
    }
    const auto reflect = [](int x, int size) {
        if (size == 1) return 0;
        while (x < 0 || x >= size) {
            if (x < 0) x = -x;
            if (x >= size) x = 2 * (size - 1) - x;
        }
        return x;
    };
    Patch patch;
    patch.row = row;
    patch.col = col;
    patch.n = n;
    patch.data.resize(static_cast<std::size_t>(FeatureImage::kChannels) * n *
                      n);
    const int half = n / 2;
    for (int dr = -half; dr <= half; ++dr) {
        const int sr = reflect(row + dr, features.height);
        for (int dc = -half; dc <= half; ++dc) {
            const int sc = reflect(col + dc, features.width);
            const double* src = features.at(sr, sc);
            const std::size_t base =
                static_cast<std::size_t>(dr + half) * n + (dc + half);
            for (int ch = 0; ch < FeatureImage::kChannels; ++ch) {
                patch.data[static_cast<std::size_t>(ch) * n * n + base] =
                    src[ch];
            }
        }
    }
    return patch;
}

std::vector<ParameterRef> CnnParams::refs() {
    std::vector<ParameterRef> out;
    for (int l = 0; l < 4; ++l) {
        const std::string block = "conv" + std::to_string(l + 1);
        out.push_back(ref(block + ".w", conv[l].w));
        out.push_back(ref(block + ".b", conv[l].b));
    }
    out.push_back(ref("fc.w", fc_w));
    out.push_back(ref("fc.b", fc_b));
    return out;
}

void CnnParams::check_finite() const {
    for (const auto& c : conv) {
        if (!c.w.allFinite() || !c.b.allFinite()) {
            fail(ErrorCode::NumericalError, "non-finite convolution weight");
        }
    }
    if (!fc_w.allFinite() || !fc_b.allFinite()) {
        fail(ErrorCode::NumericalError, "non-finite FC weight");
    }
}

CnnParams init_cnn(const CnnConfig& cfg, Rng& rng) {
    if (cfg.patch < 5 || cfg.patch % 2 == 0) {
        fail(ErrorCode::InvalidPatchSize,
             "patch size must be odd and at least 5 so two pooling stages "
             "leave a positive spatial extent");
    }
    CnnParams p;
    p.cfg = cfg;
    int in_ch = cfg.in_channels;
    for (int l = 0; l < 4; ++l) {
        const int out_ch = cfg.channels[l];
        p.conv[l].w.resize(out_ch, in_ch * 9);
        glorot_fill(p.conv[l].w.data(), p.conv[l].w.size(), in_ch * 9,
                    out_ch * 9, rng);
        p.conv[l].b = Eigen::VectorXd::Zero(out_ch);
        in_ch = out_ch;
    }
    p.fc_w.resize(cfg.embed_dim, p.flat_dim());
    glorot_fill(p.fc_w.data(), p.fc_w.size(), p.flat_dim(), cfg.embed_dim,
                rng);
    p.fc_b = Eigen::VectorXd::Zero(cfg.embed_dim);
    return p;
}

CnnParams zero_like(const CnnParams& p) {
    CnnParams z = p;
    for (auto& c : z.conv) {
        c.w.setZero();
        c.b.setZero();
    }
    z.fc_w.setZero();
    z.fc_b.setZero();
    return z;
}

namespace {

// Activations: (channels x batch * h * w), column index b*h*w + r*w + c.
// im2col materializes every 3x3 zero-padded receptive field as one column
// of a (channels * 9 x batch * h * w) matrix so the convolution becomes a
// single matrix product.
MatrixRM im2col(const MatrixRM& act, int batch, int h, int w) {
    const int channels = static_cast<int>(act.rows());
    const int hw = h * w;
    MatrixRM col = MatrixRM::Zero(static_cast<Eigen::Index>(channels) * 9,
                                  act.cols());
    for (int ch = 0; ch < channels; ++ch) {
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int row = ch * 9 + (dr + 1) * 3 + (dc + 1);
                for (int b = 0; b < batch; ++b) {
                    const int base = b * hw;
                    for (int r = 0; r < h; ++r) {
                        const int sr = r + dr;
                        if (sr < 0 || sr >= h) continue;
                        for (int c = 0; c < w; ++c) {
                            const int sc = c + dc;
                            if (sc < 0 || sc >= w) continue;
                            col(row, base + r * w + c) =
                                act(ch, base + sr * w + sc);
                        }
                    }
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: scatter-add column gradients back onto the activation.
MatrixRM col2im(const MatrixRM& d_col, int channels, int batch, int h,
                int w) {
    const int hw = h * w;
    MatrixRM d_act = MatrixRM::Zero(channels, d_col.cols());
    for (int ch = 0; ch < channels; ++ch) {
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int row = ch * 9 + (dr + 1) * 3 + (dc + 1);
                for (int b = 0; b < batch; ++b) {
                    const int base = b * hw;
                    for (int r = 0; r < h; ++r) {
                        const int sr = r + dr;
                        if (sr < 0 || sr >= h) continue;
                        for (int c = 0; c < w; ++c) {
                            const int sc = c + dc;
                            if (sc < 0 || sc >= w) continue;
                            d_act(ch, base + sr * w + sc) +=
                                d_col(row, base + r * w + c);
                        }
                    }
                }
            }
        }
    }
    return d_act;
}

// 2x2 stride-2 max pooling with floor division; ties pick the first cell in
// row-major scan order.
MatrixRM max_pool(const MatrixRM& act, int batch, int h, int w,
                  std::vector<int>* argmax) {
    const int channels = static_cast<int>(act.rows());
    const int h2 = h / 2;
    const int w2 = w / 2;
    MatrixRM out(channels, static_cast<Eigen::Index>(batch) * h2 * w2);
    if (argmax) {
        argmax->assign(static_cast<std::size_t>(channels) * batch * h2 * w2,
                       0);
    }
    for (int ch = 0; ch < channels; ++ch) {
        for (int b = 0; b < batch; ++b) {
            for (int r = 0; r < h2; ++r) {
                for (int c = 0; c < w2; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_col = 0;
                    for (int dr = 0; dr < 2; ++dr) {
                        for (int dc = 0; dc < 2; ++dc) {
                            const int src =
                                b * h * w + (2 * r + dr) * w + (2 * c + dc);
                            if (act(ch, src) > best) {
                                best = act(ch, src);
                                best_col = src;
                            }
                        }
                    }
                    const int dst = b * h2 * w2 + r * w2 + c;
                    out(ch, dst) = best;
                    if (argmax) {
                        (*argmax)[static_cast<std::size_t>(ch) * batch * h2 *
                                      w2 +
                                  dst] = best_col;
                    }
                }
            }
        }
    }
    return out;
}

MatrixRM unpool(const MatrixRM& d_pooled, const std::vector<int>& argmax,
                int batch, int h, int w) {
    const int channels = static_cast<int>(d_pooled.rows());
    const int h2 = h / 2;
    const int w2 = w / 2;
    MatrixRM d_act =
        MatrixRM::Zero(channels, static_cast<Eigen::Index>(batch) * h * w);
    for (int ch = 0; ch < channels; ++ch) {
        for (Eigen::Index col = 0; col < d_pooled.cols(); ++col) {
            const int src =
                argmax[static_cast<std::size_t>(ch) * batch * h2 * w2 + col];
            d_act(ch, src) += d_pooled(ch, col);
        }
    }
    return d_act;
}

void relu_inplace(MatrixRM& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (m.data()[i] < 0) m.data()[i] = 0;
    }
}

}  // namespace

MatrixRM cnn_forward(const std::vector<Patch>& batch, const CnnParams& p,
                     CnnBatchCache* cache) {
    p.check_finite();
    if (batch.empty()) fail(ErrorCode::ShapeMismatch, "empty patch batch");
    const int n = p.cfg.patch;
    for (const auto& patch : batch) {
        if (patch.n != n) {
            fail(ErrorCode::ShapeMismatch,
                 "patch size " + std::to_string(patch.n) +
                     " does not match configured " + std::to_string(n));
        }
    }
    if (p.final_size() < 1) {
        fail(ErrorCode::InvalidPatchSize,
             "patch too small for two pooling stages");
    }
    const int nb = static_cast<int>(batch.size());
    const int hw = n * n;

    MatrixRM a0(p.cfg.in_channels, static_cast<Eigen::Index>(nb) * hw);
    for (int b = 0; b < nb; ++b) {
        for (int ch = 0; ch < p.cfg.in_channels; ++ch) {
            for (int s = 0; s < hw; ++s) {
                a0(ch, b * hw + s) =
                    batch[b].data[static_cast<std::size_t>(ch) * hw + s];
            }
        }
    }

    const int mid = p.mid_size();
    CnnBatchCache local;
    CnnBatchCache& cc = cache ? *cache : local;
    cc.batch = nb;
    cc.a0 = std::move(a0);

    auto conv_relu = [&](const MatrixRM& in, int l, int h, int w) {
        MatrixRM col = im2col(in, nb, h, w);
        MatrixRM out = p.conv[l].w * col;
        out.colwise() += p.conv[l].b;
        relu_inplace(out);
        return out;
    };

    cc.act[0] = conv_relu(cc.a0, 0, n, n);
    cc.act[1] = conv_relu(cc.act[0], 1, n, n);
    cc.pooled[0] = max_pool(cc.act[1], nb, n, n, &cc.argmax[0]);
    cc.act[2] = conv_relu(cc.pooled[0], 2, mid, mid);
    cc.act[3] = conv_relu(cc.act[2], 3, mid, mid);
    cc.pooled[1] = max_pool(cc.act[3], nb, mid, mid, &cc.argmax[1]);

    const int fin = p.final_size();
    const int fsp = fin * fin;
    cc.flat.resize(p.flat_dim(), nb);
    for (int b = 0; b < nb; ++b) {
        for (int ch = 0; ch < p.cfg.channels[3]; ++ch) {
            for (int s = 0; s < fsp; ++s) {
                cc.flat(ch * fsp + s, b) = cc.pooled[1](ch, b * fsp + s);
            }
        }
    }
    MatrixRM logits = p.fc_w * cc.flat;  // embed_dim x batch
    logits.colwise() += p.fc_b;
    return logits.transpose();
}

void cnn_backward(const MatrixRM& d_out, const CnnParams& p,
                  const CnnBatchCache& cache, CnnParams& grads) {
    const int nb = cache.batch;
    if (d_out.rows() != nb || d_out.cols() != p.cfg.embed_dim) {
        fail(ErrorCode::ShapeMismatch, "output gradient shape");
    }
    const int n = p.cfg.patch;
    const int mid = p.mid_size();
    const int fin = p.final_size();
    const int fsp = fin * fin;

    const MatrixRM d_logits = d_out.transpose();  // embed_dim x batch
    grads.fc_w += d_logits * cache.flat.transpose();
    grads.fc_b += d_logits.rowwise().sum();

    const MatrixRM d_flat = p.fc_w.transpose() * d_logits;
    MatrixRM d_pool2(p.cfg.channels[3],
                     static_cast<Eigen::Index>(nb) * fsp);
    for (int b = 0; b < nb; ++b) {
        for (int ch = 0; ch < p.cfg.channels[3]; ++ch) {
            for (int s = 0; s < fsp; ++s) {
                d_pool2(ch, b * fsp + s) = d_flat(ch * fsp + s, b);
            }
        }
    }

    auto conv_backward = [&](MatrixRM d_act, const MatrixRM& in, int l,
                             int h, int w, bool need_input_grad) {
        // d_act arrives w.r.t. the ReLU output; the mask follows from the
        // cached outputs (out > 0 iff pre-activation > 0).
        const MatrixRM& out = cache.act[l];
        for (Eigen::Index i = 0; i < d_act.size(); ++i) {
            if (out.data()[i] <= 0) d_act.data()[i] = 0;
        }
        const MatrixRM col = im2col(in, nb, h, w);
        grads.conv[l].w += d_act * col.transpose();
        grads.conv[l].b += d_act.rowwise().sum();
        if (!need_input_grad) return MatrixRM();
        const MatrixRM d_col = p.conv[l].w.transpose() * d_act;
        return col2im(d_col, static_cast<int>(in.rows()), nb, h, w);
    };

    MatrixRM d = unpool(d_pool2, cache.argmax[1], nb, mid, mid);
    d = conv_backward(std::move(d), cache.act[2], 3, mid, mid, true);
    d = conv_backward(std::move(d), cache.pooled[0], 2, mid, mid, true);
    d = unpool(d, cache.argmax[0], nb, n, n);
    d = conv_backward(std::move(d), cache.act[0], 1, n, n, true);
    conv_backward(std::move(d), cache.a0, 0, n, n, false);
}

}  // namespace dbgc
