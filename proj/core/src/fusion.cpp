#include <dbgc/fusion.hpp>

#include <cmath>
#include <numeric>

#include <dbgc/error.hpp>

namespace dbgc {

std::vector<ParameterRef> HeadParams::refs() {
    std::vector<ParameterRef> out;
    out.push_back(ref("head.w", w));
    out.push_back(ref("head.b", b));
    return out;
}

void HeadParams::check_finite() const {
    if (!w.allFinite() || !b.allFinite()) {
        fail(ErrorCode::NumericalError, "non-finite head parameter");
    }
}

HeadParams init_head(int num_classes, int embed_dim, Rng& rng) {
    if (num_classes < 1 || embed_dim < 1) {
        fail(ErrorCode::InvalidConfig, "head dimensions must be positive");
    }
    HeadParams h;
    h.w.resize(num_classes, embed_dim);
    glorot_fill(h.w.data(), h.w.size(), embed_dim, num_classes, rng);
    h.b = Eigen::VectorXd::Zero(num_classes);
    return h;
}

HeadParams zero_like(const HeadParams& p) {
    HeadParams z = p;
    z.w.setZero();
    z.b.setZero();
    return z;
}

Eigen::VectorXd fuse(const Eigen::VectorXd& fs, const Eigen::VectorXd& fp,
                     double alpha) {
    if (fs.size() != fp.size()) {
        fail(ErrorCode::ShapeMismatch,
             "fusion operands have different dimensions");
    }
    return alpha * fs + (1.0 - alpha) * fp;
}

namespace {

// Row-wise stable softmax.
MatrixRM softmax_rows(MatrixRM logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double peak = logits.row(i).maxCoeff();
        double denom = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            logits(i, j) = std::exp(logits(i, j) - peak);
            denom += logits(i, j);
        }
        logits.row(i) /= denom;
    }
    return logits;
}

constexpr double kProbFloor = 1e-12;

}  // namespace

Eigen::VectorXd classify(const Eigen::VectorXd& f, const HeadParams& head) {
    head.check_finite();
    if (f.size() != head.w.cols()) {
        fail(ErrorCode::ShapeMismatch, "classifier input dimension");
    }
    MatrixRM logits = (head.w * f + head.b).transpose();
    return softmax_rows(std::move(logits)).row(0).transpose();
}

int predict_class(const Eigen::VectorXd& probs) {
    int best = 0;
    for (int j = 1; j < probs.size(); ++j) {
        if (probs[j] > probs[best]) best = j;
    }
    return best + 1;
}

double cross_entropy(const Eigen::VectorXd& probs, int true_class) {
    if (true_class < 1 || true_class > probs.size()) {
        fail(ErrorCode::OutOfBounds,
             "class " + std::to_string(true_class) + " outside 1.." +
                 std::to_string(probs.size()));
    }
    return -std::log(std::max(probs[true_class - 1], kProbFloor));
}

namespace {

struct BatchResult {
    double loss_sum = 0.0;  // summed over samples
    MatrixRM probs;         // batch x classes
};

// Forward over one batch of labeled pixels; returns per-sample data needed
// by the backward pass through `fp` and `fused`.
BatchResult fused_forward(const std::vector<LabeledPixel>& coords,
                          const PixelFeatureMap& fs_map, const MatrixRM& fp,
                          const HeadParams& head, double alpha,
                          MatrixRM* fused_out) {
    const int nb = static_cast<int>(coords.size());
    const int d = static_cast<int>(fp.cols());
    MatrixRM fused(nb, d);
    for (int b = 0; b < nb; ++b) {
        const double* fs = fs_map.at(coords[b].row, coords[b].col);
        for (int j = 0; j < d; ++j) {
            fused(b, j) = alpha * fs[j] + (1.0 - alpha) * fp(b, j);
        }
    }
    MatrixRM logits = fused * head.w.transpose();
    logits.rowwise() += head.b.transpose();
    BatchResult out;
    out.probs = softmax_rows(std::move(logits));
    for (int b = 0; b < nb; ++b) {
        out.loss_sum += -std::log(
            std::max(out.probs(b, coords[b].cls - 1), kProbFloor));
    }
    if (fused_out) *fused_out = std::move(fused);
    return out;
}

std::vector<Patch> gather_patches(const FeatureImage& features,
                                  const std::vector<LabeledPixel>& coords,
                                  int n) {
    std::vector<Patch> patches;
    patches.reserve(coords.size());
    for (const auto& p : coords) {
        patches.push_back(extract_patch(features, p.row, p.col, n));
    }
    return patches;
}

}  // namespace

JointTrainResult train_joint(const PixelFeatureMap& fs_map,
                             const FeatureImage& features,
                             const LabelSplit& split, CnnParams cnn,
                             HeadParams head, const FusionConfig& cfg) {
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) {
        fail(ErrorCode::InvalidConfig, "alpha outside [0, 1]");
    }
    if (cfg.batch_size < 1) {
        fail(ErrorCode::InvalidConfig, "batch size must be positive");
    }
    require_same_dims(features.height, features.width, fs_map.height,
                      fs_map.width, "joint training");
    if (fs_map.d != cnn.cfg.embed_dim) {
        fail(ErrorCode::ShapeMismatch,
             "superpixel embedding dimension does not match CNN output");
    }
    if (split.train_coords.empty()) {
        fail(ErrorCode::EmptyEvaluation, "no training pixels");
    }

    JointTrainResult result{std::move(cnn), std::move(head), {}};
    Adam opt(cfg.lr);
    auto cnn_refs = result.cnn.refs();
    auto head_refs = result.head.refs();
    std::vector<ParameterRef> params(cnn_refs);
    params.insert(params.end(), head_refs.begin(), head_refs.end());

    std::vector<int> order(split.train_coords.size());
    std::iota(order.begin(), order.end(), 0);
    const auto n_train = split.train_coords.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(
            derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_train;
             start += cfg.batch_size) {
            const std::size_t stop =
                std::min(n_train, start + cfg.batch_size);
            std::vector<LabeledPixel> coords;
            coords.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                coords.push_back(split.train_coords[order[i]]);
            }
            const int nb = static_cast<int>(coords.size());

            const auto patches =
                gather_patches(features, coords, result.cnn.cfg.patch);
            CnnBatchCache cache;
            const MatrixRM fp = cnn_forward(patches, result.cnn, &cache);

            MatrixRM fused;
            const BatchResult fw = fused_forward(coords, fs_map, fp,
                                                 result.head, cfg.alpha,
                                                 &fused);
            if (!std::isfinite(fw.loss_sum)) {
                fail(ErrorCode::TrainingDiverged,
                     "loss became non-finite at epoch " +
                         std::to_string(epoch));
            }
            epoch_loss += fw.loss_sum;

            MatrixRM d_logits = fw.probs;
            for (int b = 0; b < nb; ++b) {
                d_logits(b, coords[b].cls - 1) -= 1.0;
            }
            d_logits /= static_cast<double>(nb);

            CnnParams cnn_grads = zero_like(result.cnn);
            HeadParams head_grads = zero_like(result.head);
            head_grads.w += d_logits.transpose() * fused;
            head_grads.b += d_logits.colwise().sum().transpose();
            const MatrixRM d_fused = d_logits * result.head.w;
            const MatrixRM d_fp = (1.0 - cfg.alpha) * d_fused;
            cnn_backward(d_fp, result.cnn, cache, cnn_grads);

            auto cg = cnn_grads.refs();
            auto hg = head_grads.refs();
            std::vector<ParameterRef> grads(cg);
            grads.insert(grads.end(), hg.begin(), hg.end());
            opt.step(params, grads);
        }
        result.loss_history.push_back(epoch_loss /
                                      static_cast<double>(n_train));
    }
    return result;
}

ClassificationResult predict_map(const PixelFeatureMap& fs_map,
                                 const FeatureImage& features,
                                 const CnnParams& cnn, const HeadParams& head,
                                 double alpha) {
    require_same_dims(features.height, features.width, fs_map.height,
                      fs_map.width, "prediction");
    ClassificationResult out;
    out.height = features.height;
    out.width = features.width;
    out.class_ids.resize(static_cast<std::size_t>(out.height) * out.width);

    constexpr int kBatch = 256;
    std::vector<LabeledPixel> coords;
    coords.reserve(kBatch);
    std::size_t cursor = 0;
    const auto flush = [&]() {
        if (coords.empty()) return;
        const auto patches = gather_patches(features, coords, cnn.cfg.patch);
        const MatrixRM fp = cnn_forward(patches, cnn);
        MatrixRM fused(static_cast<int>(coords.size()), fp.cols());
        for (std::size_t b = 0; b < coords.size(); ++b) {
            const double* fs = fs_map.at(coords[b].row, coords[b].col);
            for (Eigen::Index j = 0; j < fp.cols(); ++j) {
                fused(static_cast<Eigen::Index>(b), j) =
                    alpha * fs[j] + (1.0 - alpha) * fp(b, j);
            }
        }
        MatrixRM logits = fused * head.w.transpose();
        logits.rowwise() += head.b.transpose();
        for (std::size_t b = 0; b < coords.size(); ++b) {
            int best = 0;
            for (Eigen::Index j = 1; j < logits.cols(); ++j) {
                if (logits(b, j) > logits(b, best)) {
                    best = static_cast<int>(j);
                }
            }
            out.class_ids[cursor++] = static_cast<std::uint8_t>(best + 1);
        }
        coords.clear();
    };

    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            coords.push_back({r, c, 0});
            if (static_cast<int>(coords.size()) == kBatch) flush();
        }
    }
    flush();
    return out;
}

}  // namespace dbgc
