#ifndef DBGC_GRAPH_HPP
#define DBGC_GRAPH_HPP

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include <dbgc/polsar.hpp>
#include <dbgc/slic.hpp>

namespace dbgc {

// Undirected attributed graph over superpixels. Edges are stored once as
// ordered pairs (i < j), sorted lexicographically.
struct SuperpixelGraph {
    int n_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<double> edge_weights;   // parallel to edges, each in (0, 1]
    Eigen::MatrixXd node_features;      // n_nodes x 9
    SuperpixelSegmentation seg;

    // Checks the structural invariants (edge ordering, weight range, finite
    // features). Throws CorruptData on violation.
    void validate() const;
};

// Node i averages the features of its member pixels; an edge {i, j} exists
// iff the segments share a 4-connected boundary; the weight is the Gaussian
// similarity exp(-d^2 / 2 sigma^2) of the node features. When sigma is not
// given it defaults to the mean feature distance across adjacent pairs.
SuperpixelGraph build_graph(const FeatureImage& features,
                            const SuperpixelSegmentation& seg,
                            std::optional<double> sigma = std::nullopt);

// Pixel coordinates (row, col) of every segment, row-major within each list.
std::vector<std::vector<std::pair<int, int>>> node_to_pixel_lookup(
    const SuperpixelSegmentation& seg);

// Debug/diff export: n_nodes, edges, weights, and the feature table.
void save_graph_json(const std::filesystem::path& path,
                     const SuperpixelGraph& graph);

}  // namespace dbgc

#endif
