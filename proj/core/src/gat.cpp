#include <dbgc/gat.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <dbgc/error.hpp>

namespace dbgc {

GraphTopology make_topology(int n_nodes,
                            const std::vector<std::pair<int, int>>& edges) {
    if (n_nodes < 1) fail(ErrorCode::CorruptData, "topology needs nodes");
    std::vector<std::vector<int>> adj(n_nodes);
    for (int i = 0; i < n_nodes; ++i) adj[i].push_back(i);
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes || a == b) {
            fail(ErrorCode::CorruptData, "edge endpoint out of range");
        }
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    GraphTopology topo;
    topo.n = n_nodes;
    topo.offsets.resize(n_nodes + 1, 0);
    for (int i = 0; i < n_nodes; ++i) {
        std::sort(adj[i].begin(), adj[i].end());
        adj[i].erase(std::unique(adj[i].begin(), adj[i].end()), adj[i].end());
        topo.offsets[i + 1] = topo.offsets[i] + static_cast<int>(adj[i].size());
    }
    topo.neighbors.reserve(topo.offsets.back());
    for (const auto& list : adj) {
        topo.neighbors.insert(topo.neighbors.end(), list.begin(), list.end());
    }
    return topo;
}

void GatLayerParams::check_finite() const {
    for (int h = 0; h < heads; ++h) {
        if (!w[h].allFinite() || !a_src[h].allFinite() ||
            !a_dst[h].allFinite()) {
            fail(ErrorCode::NumericalError,
                 "non-finite attention layer parameter");
        }
    }
}

GatLayerParams init_gat_layer(int in_dim, int out_dim, int heads, bool concat,
                              GatActivation activation, Rng& rng) {
    GatLayerParams p;
    p.in_dim = in_dim;
    p.out_dim = out_dim;
    p.heads = heads;
    p.concat = concat;
    p.activation = activation;
    p.w.resize(heads);
    p.a_src.resize(heads);
    p.a_dst.resize(heads);
    for (int h = 0; h < heads; ++h) {
        p.w[h].resize(out_dim, in_dim);
        glorot_fill(p.w[h].data(), p.w[h].size(), in_dim, out_dim, rng);
        p.a_src[h].resize(out_dim);
        glorot_fill(p.a_src[h].data(), out_dim, out_dim, 1, rng);
        p.a_dst[h].resize(out_dim);
        glorot_fill(p.a_dst[h].data(), out_dim, out_dim, 1, rng);
    }
    return p;
}

GatLayerParams zero_like(const GatLayerParams& p) {
    GatLayerParams z = p;
    for (int h = 0; h < p.heads; ++h) {
        z.w[h].setZero();
        z.a_src[h].setZero();
        z.a_dst[h].setZero();
    }
    return z;
}

void append_refs(const std::string& prefix, GatLayerParams& p,
                 std::vector<ParameterRef>& out) {
    for (int h = 0; h < p.heads; ++h) {
        const std::string head = prefix + ".head" + std::to_string(h);
        out.push_back(ref(head + ".w", p.w[h]));
        out.push_back(ref(head + ".a_src", p.a_src[h]));
        out.push_back(ref(head + ".a_dst", p.a_dst[h]));
    }
}

namespace {

constexpr double kLeakySlope = 0.2;

double activate(double x, GatActivation act) {
    if (act == GatActivation::Identity) return x;
    return x > 0 ? x : std::expm1(x);
}

double activate_grad(double x, GatActivation act) {
    if (act == GatActivation::Identity) return 1.0;
    return x > 0 ? 1.0 : std::exp(x);
}

}  // namespace

MatrixRM gat_forward(const MatrixRM& x, const GraphTopology& topo,
                     const GatLayerParams& p, GatLayerCache* cache) {
    p.check_finite();
    if (x.rows() != topo.n || x.cols() != p.in_dim) {
        fail(ErrorCode::ShapeMismatch, "attention layer input shape");
    }
    const int n = topo.n;
    MatrixRM merged = MatrixRM::Zero(n, p.output_width());
    if (cache) {
        cache->input = x;
        cache->h.assign(p.heads, MatrixRM());
        cache->alpha.assign(p.heads, {});
    }
    std::vector<double> logits;
    for (int h = 0; h < p.heads; ++h) {
        const MatrixRM hp = x * p.w[h].transpose();  // n x out_dim
        const Eigen::VectorXd s = hp * p.a_src[h];
        const Eigen::VectorXd t = hp * p.a_dst[h];
        std::vector<double> alpha(topo.neighbors.size(), 0.0);
        MatrixRM agg = MatrixRM::Zero(n, p.out_dim);
        for (int i = 0; i < n; ++i) {
            const int lo = topo.offsets[i];
            const int hi = topo.offsets[i + 1];
            logits.resize(hi - lo);
            double peak = -std::numeric_limits<double>::infinity();
            for (int idx = lo; idx < hi; ++idx) {
                const double z = s[i] + t[topo.neighbors[idx]];
                const double e = z > 0 ? z : kLeakySlope * z;
                logits[idx - lo] = e;
                peak = std::max(peak, e);
            }
            double denom = 0.0;
            for (double& e : logits) {
                e = std::exp(e - peak);
                denom += e;
            }
            for (int idx = lo; idx < hi; ++idx) {
                const double a = logits[idx - lo] / denom;
                alpha[idx] = a;
                agg.row(i) += a * hp.row(topo.neighbors[idx]);
            }
        }
        if (p.concat) {
            merged.block(0, h * p.out_dim, n, p.out_dim) = agg;
        } else {
            merged += agg / static_cast<double>(p.heads);
        }
        if (cache) {
            cache->h[h] = hp;
            cache->alpha[h] = std::move(alpha);
        }
    }
    if (cache) cache->merged = merged;

    MatrixRM out = merged;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        out.data()[i] = activate(out.data()[i], p.activation);
    }
    return out;
}

MatrixRM gat_backward(const MatrixRM& d_out, const GraphTopology& topo,
                      const GatLayerParams& p, const GatLayerCache& cache,
                      GatLayerParams& grads) {
    const int n = topo.n;
    MatrixRM d_merged = d_out;
    for (Eigen::Index i = 0; i < d_merged.size(); ++i) {
        d_merged.data()[i] *=
            activate_grad(cache.merged.data()[i], p.activation);
    }

    MatrixRM dx = MatrixRM::Zero(n, p.in_dim);
    std::vector<double> d_alpha;
    for (int h = 0; h < p.heads; ++h) {
        const MatrixRM& hp = cache.h[h];
        const std::vector<double>& alpha = cache.alpha[h];
        const Eigen::VectorXd s = hp * p.a_src[h];
        const Eigen::VectorXd t = hp * p.a_dst[h];

        MatrixRM d_agg;
        if (p.concat) {
            d_agg = d_merged.block(0, h * p.out_dim, n, p.out_dim);
        } else {
            d_agg = d_merged / static_cast<double>(p.heads);
        }

        MatrixRM dh = MatrixRM::Zero(n, p.out_dim);
        Eigen::VectorXd ds = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd dt = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            const int lo = topo.offsets[i];
            const int hi = topo.offsets[i + 1];
            d_alpha.resize(hi - lo);
            double weighted = 0.0;
            for (int idx = lo; idx < hi; ++idx) {
                const int j = topo.neighbors[idx];
                d_alpha[idx - lo] = d_agg.row(i).dot(hp.row(j));
                weighted += alpha[idx] * d_alpha[idx - lo];
            }
            for (int idx = lo; idx < hi; ++idx) {
                const int j = topo.neighbors[idx];
                const double de = alpha[idx] * (d_alpha[idx - lo] - weighted);
                const double z = s[i] + t[j];
                const double dz = de * (z > 0 ? 1.0 : kLeakySlope);
                ds[i] += dz;
                dt[j] += dz;
                dh.row(j) += alpha[idx] * d_agg.row(i);
            }
        }
        dh += ds * p.a_src[h].transpose();
        dh += dt * p.a_dst[h].transpose();

        grads.a_src[h] += hp.transpose() * ds;
        grads.a_dst[h] += hp.transpose() * dt;
        grads.w[h] += dh.transpose() * cache.input;
        dx += dh * p.w[h];
    }
    return dx;
}

}  // namespace dbgc
