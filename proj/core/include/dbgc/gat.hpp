#ifndef DBGC_GAT_HPP
#define DBGC_GAT_HPP

#include <utility>
#include <vector>

#include <dbgc/graph.hpp>
#include <dbgc/nn.hpp>

namespace dbgc {

// Adjacency in CSR form with a self-loop on every node. Neighbor lists are
// sorted ascending, so traversal order (and therefore floating-point
// accumulation order) is fixed.
struct GraphTopology {
    int n = 0;
    std::vector<int> offsets;    // n + 1 entries
    std::vector<int> neighbors;  // includes the node itself

    int degree(int i) const { return offsets[i + 1] - offsets[i]; }
};

GraphTopology make_topology(int n_nodes,
                            const std::vector<std::pair<int, int>>& edges);
inline GraphTopology make_topology(const SuperpixelGraph& g) {
    return make_topology(g.n_nodes, g.edges);
}

enum class GatActivation { Elu, Identity };

// One multi-head graph attention layer. Per head: h_i = W x_i, attention
// logit e_ij = LeakyReLU(a_src.h_i + a_dst.h_j, slope 0.2) over the
// neighborhood including the self-loop, alpha = softmax_j(e_ij), and
// out_i = activation(sum_j alpha_ij h_j). Heads are concatenated when
// `concat` is set and averaged otherwise.
struct GatLayerParams {
    int in_dim = 0;
    int out_dim = 0;  // per head
    int heads = 1;
    bool concat = true;
    GatActivation activation = GatActivation::Elu;

    std::vector<MatrixRM> w;              // heads x (out_dim x in_dim)
    std::vector<Eigen::VectorXd> a_src;   // heads x out_dim
    std::vector<Eigen::VectorXd> a_dst;   // heads x out_dim

    int output_width() const { return concat ? heads * out_dim : out_dim; }

    // Throws NumericalError when any parameter is non-finite.
    void check_finite() const;
};

GatLayerParams init_gat_layer(int in_dim, int out_dim, int heads, bool concat,
                              GatActivation activation, Rng& rng);
GatLayerParams zero_like(const GatLayerParams& p);

void append_refs(const std::string& prefix, GatLayerParams& p,
                 std::vector<ParameterRef>& out);

// Intermediate state kept for the backward pass.
struct GatLayerCache {
    MatrixRM input;                          // N x in_dim
    std::vector<MatrixRM> h;                 // per head: N x out_dim
    std::vector<std::vector<double>> alpha;  // per head: aligned to neighbors
    MatrixRM merged;                         // N x output_width, pre-activation
};

// Forward pass; fills `cache` when given.
MatrixRM gat_forward(const MatrixRM& x, const GraphTopology& topo,
                     const GatLayerParams& p, GatLayerCache* cache = nullptr);

// Accumulates parameter gradients into `grads` and returns dL/dx.
MatrixRM gat_backward(const MatrixRM& d_out, const GraphTopology& topo,
                      const GatLayerParams& p, const GatLayerCache& cache,
                      GatLayerParams& grads);

}  // namespace dbgc

#endif
