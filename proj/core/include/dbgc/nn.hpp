#ifndef DBGC_NN_HPP
#define DBGC_NN_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <dbgc/rng.hpp>

namespace dbgc {

// Parameters are stored row-major so checkpoint blobs can be written with a
// straight copy.
using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Non-owning view of one named parameter (or gradient) block. Models expose
// their state as an ordered list of these; the optimizer, the checkpoint
// writer and the finite-difference tests all walk the same list.
struct ParameterRef {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
    std::vector<int> shape;
};

inline ParameterRef ref(const std::string& name, MatrixRM& m) {
    return {name, m.data(), static_cast<std::size_t>(m.size()),
            {static_cast<int>(m.rows()), static_cast<int>(m.cols())}};
}
inline ParameterRef ref(const std::string& name, Eigen::VectorXd& v) {
    return {name, v.data(), static_cast<std::size_t>(v.size()),
            {static_cast<int>(v.size())}};
}

std::size_t total_size(const std::vector<ParameterRef>& refs);

// Adaptive-moment gradient descent with bias correction. Moment buffers are
// allocated on the first step and keyed by position, so the caller must pass
// structurally identical ref lists every step.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<ParameterRef>& params,
              const std::vector<ParameterRef>& grads);

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

// Uniform fan-based scaling on [-limit, limit] with
// limit = sqrt(6 / (fan_in + fan_out)), filled in storage order.
void glorot_fill(double* data, std::size_t size, int fan_in, int fan_out,
                 Rng& rng);

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------
// Layout: u64 little-endian manifest length, JSON manifest, then one raw
// little-endian f64 blob per parameter in manifest order. The manifest
// records the format tag, a caller-supplied config object, and the name and
// shape of every blob.

void save_checkpoint(const std::filesystem::path& path,
                     const std::string& config_json,
                     const std::vector<ParameterRef>& params);

// Config object of a checkpoint, re-serialized as JSON text.
std::string checkpoint_config(const std::filesystem::path& path);

// Fills `params` from the checkpoint; names and shapes must match the
// manifest exactly (CorruptData otherwise).
void load_checkpoint_params(const std::filesystem::path& path,
                            const std::vector<ParameterRef>& params);

}  // namespace dbgc

#endif
