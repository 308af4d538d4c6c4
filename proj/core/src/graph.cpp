#include <dbgc/graph.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include <dbgc/error.hpp>
#include <dbgc/io.hpp>

namespace dbgc {

using json = nlohmann::json;

void SuperpixelGraph::validate() const {
    if (n_nodes < 1) fail(ErrorCode::CorruptData, "graph has no nodes");
    if (node_features.rows() != n_nodes ||
        node_features.cols() != FeatureImage::kChannels) {
        fail(ErrorCode::ShapeMismatch, "node feature table shape mismatch");
    }
    if (!node_features.allFinite()) {
        fail(ErrorCode::CorruptData, "non-finite node feature");
    }
    if (edge_weights.size() != edges.size()) {
        fail(ErrorCode::ShapeMismatch, "edge weight count mismatch");
    }
    std::pair<int, int> prev{-1, -1};
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto& [i, j] = edges[e];
        if (i < 0 || j < 0 || i >= n_nodes || j >= n_nodes) {
            fail(ErrorCode::CorruptData, "edge endpoint out of range");
        }
        if (i >= j) fail(ErrorCode::CorruptData, "edge pair not ordered");
        if (edges[e] <= prev) {
            fail(ErrorCode::CorruptData, "edge list not sorted or not unique");
        }
        prev = edges[e];
        const double w = edge_weights[e];
        if (!(w > 0.0 && w <= 1.0)) {
            fail(ErrorCode::CorruptData,
                 "edge weight " + std::to_string(w) + " outside (0, 1]");
        }
    }
}

SuperpixelGraph build_graph(const FeatureImage& features,
                            const SuperpixelSegmentation& seg,
                            std::optional<double> sigma) {
    require_same_dims(features.height, features.width, seg.height, seg.width,
                      "graph build");

    SuperpixelGraph g;
    g.n_nodes = seg.k;
    g.seg = seg;
    g.node_features =
        Eigen::MatrixXd::Zero(seg.k, FeatureImage::kChannels);

    std::vector<std::size_t> counts(seg.k, 0);
    for (int r = 0; r < seg.height; ++r) {
        for (int c = 0; c < seg.width; ++c) {
            const auto id = seg.label(r, c);
            const double* f = features.at(r, c);
            for (int ch = 0; ch < FeatureImage::kChannels; ++ch) {
                g.node_features(id, ch) += f[ch];
            }
            ++counts[id];
        }
    }
    for (int i = 0; i < seg.k; ++i) {
        g.node_features.row(i) /= static_cast<double>(counts[i]);
    }

    std::set<std::pair<int, int>> edge_set;
    for (int r = 0; r < seg.height; ++r) {
        for (int c = 0; c < seg.width; ++c) {
            const int a = static_cast<int>(seg.label(r, c));
            if (c + 1 < seg.width) {
                const int b = static_cast<int>(seg.label(r, c + 1));
                if (a != b) edge_set.insert({std::min(a, b), std::max(a, b)});
            }
            if (r + 1 < seg.height) {
                const int b = static_cast<int>(seg.label(r + 1, c));
                if (a != b) edge_set.insert({std::min(a, b), std::max(a, b)});
            }
        }
    }
    g.edges.assign(edge_set.begin(), edge_set.end());

    std::vector<double> dist(g.edges.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        dist[e] = (g.node_features.row(g.edges[e].first) -
                   g.node_features.row(g.edges[e].second))
                      .norm();
    }

    double sig;
    if (sigma.has_value()) {
        if (*sigma <= 0.0) {
            fail(ErrorCode::InvalidConfig, "sigma must be positive");
        }
        sig = *sigma;
    } else {
        sig = 0.0;
        for (const double d : dist) sig += d;
        sig = dist.empty() ? 0.0 : sig / static_cast<double>(dist.size());
    }

    g.edge_weights.resize(g.edges.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        // Identical features give weight exactly 1 even when sigma is 0.
        g.edge_weights[e] =
            dist[e] == 0.0
                ? 1.0
                : std::exp(-dist[e] * dist[e] / (2.0 * sig * sig));
    }
    g.validate();
    return g;
}

std::vector<std::vector<std::pair<int, int>>> node_to_pixel_lookup(
    const SuperpixelSegmentation& seg) {
    std::vector<std::vector<std::pair<int, int>>> lookup(seg.k);
    for (int r = 0; r < seg.height; ++r) {
        for (int c = 0; c < seg.width; ++c) {
            lookup[seg.label(r, c)].emplace_back(r, c);
        }
    }
    return lookup;
}

void save_graph_json(const std::filesystem::path& path,
                     const SuperpixelGraph& graph) {
    json j;
    j["n_nodes"] = graph.n_nodes;
    auto& edges = j["edges"] = json::array();
    for (const auto& [a, b] : graph.edges) {
        edges.push_back({a, b});
    }
    j["weights"] = graph.edge_weights;
    auto& feats = j["features"] = json::array();
    for (int i = 0; i < graph.n_nodes; ++i) {
        json row = json::array();
        for (int ch = 0; ch < FeatureImage::kChannels; ++ch) {
            row.push_back(graph.node_features(i, ch));
        }
        feats.push_back(std::move(row));
    }
    write_text_file(path, j.dump() + "\n");
}

}  // namespace dbgc
