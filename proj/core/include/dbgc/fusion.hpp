#ifndef DBGC_FUSION_HPP
#define DBGC_FUSION_HPP

#include <cstdint>
#include <vector>

#include <dbgc/cnn.hpp>
#include <dbgc/graphmae.hpp>
#include <dbgc/nn.hpp>
#include <dbgc/polsar.hpp>

namespace dbgc {

struct FusionConfig {
    double alpha = 0.4;
    int epochs = 250;
    double lr = 5e-4;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

// Linear classifier over the fused embedding.
struct HeadParams {
    MatrixRM w;         // classes x embed_dim
    Eigen::VectorXd b;  // classes

    int num_classes() const { return static_cast<int>(w.rows()); }
    std::vector<ParameterRef> refs();
    void check_finite() const;
};

HeadParams init_head(int num_classes, int embed_dim, Rng& rng);
HeadParams zero_like(const HeadParams& p);

// F = alpha * fs + (1 - alpha) * fp.
Eigen::VectorXd fuse(const Eigen::VectorXd& fs, const Eigen::VectorXd& fp,
                     double alpha);

// Softmax probabilities (max-subtracted for stability).
Eigen::VectorXd classify(const Eigen::VectorXd& f, const HeadParams& head);

// Class id in 1..C; ties go to the smallest id.
int predict_class(const Eigen::VectorXd& probs);

// -log p[true_class] with the probability clamped below at 1e-12.
// true_class is a 1-based class id.
double cross_entropy(const Eigen::VectorXd& probs, int true_class);

// Per-pixel class ids in 1..C.
struct ClassificationResult {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> class_ids;

    std::uint8_t at(int r, int c) const {
        return class_ids[static_cast<std::size_t>(r) * width + c];
    }
};

struct JointTrainResult {
    CnnParams cnn;
    HeadParams head;
    std::vector<double> loss_history;  // per-epoch mean cross-entropy
};

// Mini-batch supervised training of the CNN branch and the head. The
// superpixel branch is frozen: fs_map holds the precomputed embeddings and
// only flows forward. Deterministic per seed.
JointTrainResult train_joint(const PixelFeatureMap& fs_map,
                             const FeatureImage& features,
                             const LabelSplit& split, CnnParams cnn,
                             HeadParams head, const FusionConfig& cfg);

// Classifies every pixel of the image.
ClassificationResult predict_map(const PixelFeatureMap& fs_map,
                                 const FeatureImage& features,
                                 const CnnParams& cnn, const HeadParams& head,
                                 double alpha);

}  // namespace dbgc

#endif
