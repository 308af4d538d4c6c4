#include <dbgc/graphmae.hpp>

#include <cmath>

#include <dbgc/error.hpp>

namespace dbgc {

std::vector<ParameterRef> GraphMAEParams::refs() {
    std::vector<ParameterRef> out;
    out.push_back(ref("enc_mask_token", enc_mask_token));
    out.push_back(ref("dec_mask_token", dec_mask_token));
    for (std::size_t l = 0; l < encoder.size(); ++l) {
        append_refs("encoder.layer" + std::to_string(l), encoder[l], out);
    }
    append_refs("decoder", decoder, out);
    return out;
}

void GraphMAEParams::check_finite() const {
    if (!enc_mask_token.allFinite() || !dec_mask_token.allFinite()) {
        fail(ErrorCode::NumericalError, "non-finite mask token");
    }
    for (const auto& layer : encoder) layer.check_finite();
    decoder.check_finite();
}

GraphMAEParams init_graphmae(const GraphMAEConfig& cfg, Rng& rng) {
    if (cfg.enc_layers < 1 || cfg.heads < 1 || cfg.head_dim < 1) {
        fail(ErrorCode::InvalidConfig, "encoder shape must be positive");
    }
    GraphMAEParams p;
    p.cfg = cfg;
    p.enc_mask_token = Eigen::VectorXd::Zero(cfg.input_dim);
    p.dec_mask_token = Eigen::VectorXd::Zero(cfg.embed_dim());
    int in = cfg.input_dim;
    for (int l = 0; l < cfg.enc_layers; ++l) {
        const bool last = l == cfg.enc_layers - 1;
        p.encoder.push_back(init_gat_layer(
            in, cfg.head_dim, cfg.heads, /*concat=*/true,
            last ? GatActivation::Identity : GatActivation::Elu, rng));
        in = cfg.embed_dim();
    }
    p.decoder =
        init_gat_layer(cfg.embed_dim(), cfg.input_dim, cfg.heads,
                       /*concat=*/false, GatActivation::Identity, rng);
    return p;
}

GraphMAEParams zero_like(const GraphMAEParams& p) {
    GraphMAEParams z = p;
    z.enc_mask_token.setZero();
    z.dec_mask_token.setZero();
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        z.encoder[l] = zero_like(p.encoder[l]);
    }
    z.decoder = zero_like(p.decoder);
    return z;
}

MaskedGraph mask_nodes(const SuperpixelGraph& g, double ratio,
                       const Eigen::VectorXd& token, std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) {
        fail(ErrorCode::InvalidConfig, "mask ratio outside [0, 1]");
    }
    if (token.size() != g.node_features.cols()) {
        fail(ErrorCode::ShapeMismatch, "mask token dimension");
    }
    MaskedGraph m;
    m.base = &g;
    m.masked_features = g.node_features;
    const int count =
        static_cast<int>(std::floor(ratio * g.n_nodes + 0.5));
    if (count > 0) {
        Rng rng(seed);
        m.mask_set = rng.sample_without_replacement(g.n_nodes, count);
        for (const int i : m.mask_set) {
            m.masked_features.row(i) = token.transpose();
        }
    }
    return m;
}

namespace {
constexpr double kNormFloor = 1e-12;
}

double sce_loss(const MatrixRM& targets, const MatrixRM& recon,
                double gamma) {
    if (targets.rows() == 0) {
        fail(ErrorCode::EmptyMask, "scaled cosine error over an empty set");
    }
    if (targets.rows() != recon.rows() || targets.cols() != recon.cols()) {
        fail(ErrorCode::ShapeMismatch, "loss operand shapes differ");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        const double nx = std::max(targets.row(i).norm(), kNormFloor);
        const double nz = std::max(recon.row(i).norm(), kNormFloor);
        const double c = targets.row(i).dot(recon.row(i)) / (nx * nz);
        sum += std::pow(1.0 - c, gamma);
    }
    return sum / static_cast<double>(targets.rows());
}

MatrixRM sce_loss_grad(const MatrixRM& targets, const MatrixRM& recon,
                       double gamma) {
    if (targets.rows() == 0) {
        fail(ErrorCode::EmptyMask, "scaled cosine error over an empty set");
    }
    MatrixRM grad = MatrixRM::Zero(recon.rows(), recon.cols());
    const double inv_n = 1.0 / static_cast<double>(targets.rows());
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        const double nx = std::max(targets.row(i).norm(), kNormFloor);
        const double nz = std::max(recon.row(i).norm(), kNormFloor);
        const double dot = targets.row(i).dot(recon.row(i));
        const double c = dot / (nx * nz);
        // d cos / dz = x / (nx nz) - c z / nz^2
        const double scale = gamma * std::pow(1.0 - c, gamma - 1.0) * inv_n;
        grad.row(i) = -scale * (targets.row(i) / (nx * nz) -
                                (c / (nz * nz)) * recon.row(i));
    }
    return grad;
}

namespace {

struct ForwardState {
    MaskedGraph masked;
    std::vector<GatLayerCache> enc_caches;
    GatLayerCache dec_cache;
    MatrixRM decoder_in;
    MatrixRM recon;       // full K x input_dim decoder output
    MatrixRM target_sub;  // masked rows of the input features
    MatrixRM recon_sub;
    double loss = 0.0;
};

ForwardState run_forward(const SuperpixelGraph& g, const GraphTopology& topo,
                         const GraphMAEParams& p, double ratio,
                         std::uint64_t seed, bool keep_caches) {
    ForwardState st;
    st.masked = mask_nodes(g, ratio, p.enc_mask_token, seed);
    if (st.masked.mask_set.empty()) {
        fail(ErrorCode::EmptyMask,
             "reconstruction needs at least one masked node");
    }
    st.enc_caches.resize(keep_caches ? p.encoder.size() : 0);
    MatrixRM e = st.masked.masked_features;
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        e = gat_forward(e, topo, p.encoder[l],
                        keep_caches ? &st.enc_caches[l] : nullptr);
    }
    st.decoder_in = std::move(e);
    for (const int i : st.masked.mask_set) {
        st.decoder_in.row(i) = p.dec_mask_token.transpose();
    }
    st.recon = gat_forward(st.decoder_in, topo, p.decoder,
                           keep_caches ? &st.dec_cache : nullptr);

    const auto n_masked = static_cast<Eigen::Index>(st.masked.mask_set.size());
    st.target_sub.resize(n_masked, g.node_features.cols());
    st.recon_sub.resize(n_masked, g.node_features.cols());
    for (Eigen::Index k = 0; k < n_masked; ++k) {
        const int i = st.masked.mask_set[k];
        st.target_sub.row(k) = g.node_features.row(i);
        st.recon_sub.row(k) = st.recon.row(i);
    }
    st.loss = sce_loss(st.target_sub, st.recon_sub, p.cfg.gamma);
    return st;
}

}  // namespace

ReconstructResult forward_reconstruct(const SuperpixelGraph& g,
                                      const GraphMAEParams& p, double ratio,
                                      std::uint64_t seed) {
    const GraphTopology topo = make_topology(g);
    ForwardState st = run_forward(g, topo, p, ratio, seed, false);
    return {st.loss, std::move(st.masked.mask_set)};
}

ReconstructResult reconstruct_backward(const SuperpixelGraph& g,
                                       const GraphTopology& topo,
                                       const GraphMAEParams& p, double ratio,
                                       std::uint64_t seed,
                                       GraphMAEParams& grads) {
    ForwardState st = run_forward(g, topo, p, ratio, seed, true);

    const MatrixRM d_sub =
        sce_loss_grad(st.target_sub, st.recon_sub, p.cfg.gamma);
    MatrixRM d_recon = MatrixRM::Zero(st.recon.rows(), st.recon.cols());
    for (std::size_t k = 0; k < st.masked.mask_set.size(); ++k) {
        d_recon.row(st.masked.mask_set[k]) = d_sub.row(k);
    }

    MatrixRM d = gat_backward(d_recon, topo, p.decoder, st.dec_cache,
                              grads.decoder);
    // Masked rows fed the decoder token, not the encoder output.
    for (const int i : st.masked.mask_set) {
        grads.dec_mask_token += d.row(i).transpose();
        d.row(i).setZero();
    }
    for (std::size_t l = p.encoder.size(); l-- > 0;) {
        d = gat_backward(d, topo, p.encoder[l], st.enc_caches[l],
                         grads.encoder[l]);
    }
    for (const int i : st.masked.mask_set) {
        grads.enc_mask_token += d.row(i).transpose();
    }
    return {st.loss, std::move(st.masked.mask_set)};
}

PretrainResult pretrain(const SuperpixelGraph& g, const GraphMAEConfig& cfg) {
    Rng init_rng(derive_seed(cfg.seed, "init"));
    PretrainResult result;
    result.params = init_graphmae(cfg, init_rng);
    const GraphTopology topo = make_topology(g);
    Adam opt(cfg.lr);
    auto param_refs = result.params.refs();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        GraphMAEParams grads = zero_like(result.params);
        const auto r = reconstruct_backward(
            g, topo, result.params, cfg.mask_ratio,
            derive_seed(cfg.seed, "mask", static_cast<std::uint64_t>(epoch)),
            grads);
        if (!std::isfinite(r.loss)) {
            fail(ErrorCode::TrainingDiverged,
                 "loss became non-finite at epoch " + std::to_string(epoch));
        }
        opt.step(param_refs, grads.refs());
        result.loss_history.push_back(r.loss);
    }
    return result;
}

MatrixRM encode(const SuperpixelGraph& g, const GraphMAEParams& p) {
    const GraphTopology topo = make_topology(g);
    MatrixRM e = g.node_features;
    for (const auto& layer : p.encoder) {
        e = gat_forward(e, topo, layer);
    }
    return e;
}

PixelFeatureMap encode_and_broadcast(const SuperpixelGraph& g,
                                     const GraphMAEParams& p,
                                     const SuperpixelSegmentation& seg) {
    if (seg.k != g.n_nodes) {
        fail(ErrorCode::ShapeMismatch,
             "segmentation and graph disagree on node count");
    }
    const MatrixRM emb = encode(g, p);
    PixelFeatureMap map;
    map.height = seg.height;
    map.width = seg.width;
    map.d = static_cast<int>(emb.cols());
    map.values.resize(static_cast<std::size_t>(seg.height) * seg.width *
                      map.d);
    for (int r = 0; r < seg.height; ++r) {
        for (int c = 0; c < seg.width; ++c) {
            const auto id = seg.label(r, c);
            double* dst = map.at(r, c);
            for (int j = 0; j < map.d; ++j) {
                dst[j] = emb(id, j);
            }
        }
    }
    return map;
}

}  // namespace dbgc
