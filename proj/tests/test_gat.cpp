#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dbgc/gat.hpp"
#include "dbgc/rng.hpp"
#include "test_util.hpp"

using namespace dbgc;
using dbgc_test::expect_error;

namespace {

using EdgeList = std::vector<std::pair<int, int>>;

double elu(double v) { return v > 0 ? v : std::expm1(v); }

// Independent reference: materializes the dense attention matrix per head.
MatrixRM dense_gat(const GatLayerParams& p, int n, const EdgeList& edges,
                   const MatrixRM& x) {
    std::vector<std::vector<int>> nb(n);
    for (int i = 0; i < n; ++i) nb[i].push_back(i);
    for (const auto& [a, b] : edges) {
        nb[a].push_back(b);
        nb[b].push_back(a);
    }
    for (auto& v : nb) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    MatrixRM merged(n, p.output_width());
    std::vector<MatrixRM> head_out(p.heads);
    for (int h = 0; h < p.heads; ++h) {
        const MatrixRM hp = x * p.w[h].transpose();
        head_out[h] = MatrixRM::Zero(n, p.out_dim);
        for (int i = 0; i < n; ++i) {
            std::vector<double> e;
            for (const int j : nb[i]) {
                const double raw =
                    p.a_src[h].dot(hp.row(i)) + p.a_dst[h].dot(hp.row(j));
                e.push_back(raw > 0 ? raw : 0.2 * raw);
            }
            const double mx = *std::max_element(e.begin(), e.end());
            double z = 0;
            for (auto& v : e) {
                v = std::exp(v - mx);
                z += v;
            }
            for (std::size_t q = 0; q < nb[i].size(); ++q)
                head_out[h].row(i) += (e[q] / z) * hp.row(nb[i][q]);
        }
    }
    if (p.concat) {
        for (int h = 0; h < p.heads; ++h)
            merged.middleCols(h * p.out_dim, p.out_dim) = head_out[h];
    } else {
        merged = MatrixRM::Zero(n, p.out_dim);
        for (int h = 0; h < p.heads; ++h) merged += head_out[h];
        merged /= p.heads;
    }
    if (p.activation == GatActivation::Elu) {
        for (int i = 0; i < merged.size(); ++i)
            merged.data()[i] = elu(merged.data()[i]);
    }
    return merged;
}

MatrixRM random_input(int n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    MatrixRM x(n, dim);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return x;
}

}  // namespace

TEST_CASE("topology is sorted CSR with self-loops") {
    const auto topo = make_topology(4, {{2, 0}, {1, 2}});
    CHECK(topo.n == 4);
    REQUIRE(topo.offsets.size() == 5);
    const std::vector<int> expected_nb = {0, 2,  1, 2,  0, 1, 2,  3};
    CHECK(topo.neighbors == expected_nb);
    CHECK(topo.degree(0) == 2);
    CHECK(topo.degree(2) == 3);
    CHECK(topo.degree(3) == 1);
}

TEST_CASE("isolated node attends only to itself") {
    Rng rng(1);
    auto p = init_gat_layer(3, 2, 2, true, GatActivation::Identity, rng);
    const auto topo = make_topology(1, {});
    const auto x = random_input(1, 3, 2);
    GatLayerCache cache;
    const auto out = gat_forward(x, topo, p, &cache);
    REQUIRE(out.rows() == 1);
    REQUIRE(out.cols() == 4);
    for (int h = 0; h < 2; ++h) {
        CHECK(cache.alpha[h].size() == 1);
        CHECK(cache.alpha[h][0] == doctest::Approx(1.0));
        const Eigen::VectorXd expect = p.w[h] * x.row(0).transpose();
        for (int d = 0; d < 2; ++d)
            CHECK(out(0, h * 2 + d) == doctest::Approx(expect(d)));
    }
}

TEST_CASE("identical features across an edge split attention evenly") {
    Rng rng(3);
    auto p = init_gat_layer(3, 4, 1, true, GatActivation::Identity, rng);
    const auto topo = make_topology(2, {{0, 1}});
    MatrixRM x(2, 3);
    x << 0.3, -0.7, 1.1, 0.3, -0.7, 1.1;
    GatLayerCache cache;
    gat_forward(x, topo, p, &cache);
    for (const double a : cache.alpha[0])
        CHECK(a == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward matches the dense oracle on small random graphs") {
    Rng graph_rng(17);
    int checked = 0;
    for (int n = 2; n <= 6; ++n) {
        // All possible undirected edges, included with probability 1/2.
        for (int trial = 0; trial < 12; ++trial) {
            EdgeList edges;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (graph_rng.below(2)) edges.emplace_back(i, j);
            const auto topo = make_topology(n, edges);
            const auto x = random_input(n, 5, 100 + trial);
            for (auto [concat, act] :
                 {std::pair{true, GatActivation::Elu},
                  {true, GatActivation::Identity},
                  {false, GatActivation::Identity}}) {
                Rng rng(200 + trial);
                auto p = init_gat_layer(5, 3, 4, concat, act, rng);
                const auto got = gat_forward(x, topo, p);
                const auto want = dense_gat(p, n, edges, x);
                REQUIRE(got.rows() == want.rows());
                REQUIRE(got.cols() == want.cols());
                CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-10);
                ++checked;
            }
        }
    }
    CHECK(checked == 5 * 12 * 3);
}

TEST_CASE("attention rows are probability distributions") {
    Rng rng(5);
    auto p = init_gat_layer(4, 3, 3, true, GatActivation::Elu, rng);
    const EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 3}};
    const auto topo = make_topology(5, edges);
    const auto x = random_input(5, 4, 6);
    GatLayerCache cache;
    gat_forward(x, topo, p, &cache);
    for (int h = 0; h < 3; ++h) {
        for (int i = 0; i < 5; ++i) {
            double sum = 0;
            for (int q = topo.offsets[i]; q < topo.offsets[i + 1]; ++q) {
                CHECK(cache.alpha[h][q] >= 0.0);
                sum += cache.alpha[h][q];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("node relabeling permutes layer outputs identically") {
    const int n = 6;
    const EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 4}};
    Rng rng(7);
    auto p = init_gat_layer(4, 3, 2, true, GatActivation::Elu, rng);
    const auto x = random_input(n, 4, 8);
    const auto out = gat_forward(x, make_topology(n, edges), p);

    const std::vector<int> perm = {3, 5, 0, 2, 4, 1};  // new id of old node i
    EdgeList pedges;
    for (const auto& [a, b] : edges) pedges.emplace_back(perm[a], perm[b]);
    MatrixRM px(n, 4);
    for (int i = 0; i < n; ++i) px.row(perm[i]) = x.row(i);
    const auto pout = gat_forward(px, make_topology(n, pedges), p);
    for (int i = 0; i < n; ++i)
        CHECK((pout.row(perm[i]) - out.row(i)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("layer gradients match central finite differences") {
    const int n = 5;
    const EdgeList edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}};
    const auto topo = make_topology(n, edges);
    Rng rng(11);
    auto p = init_gat_layer(4, 3, 2, true, GatActivation::Elu, rng);
    auto x = random_input(n, 4, 12);

    // Fixed projection makes the scalar loss sensitive to every output.
    MatrixRM proj(n, p.output_width());
    Rng prng(13);
    for (int i = 0; i < proj.size(); ++i) proj.data()[i] = prng.normal();

    const auto loss = [&](const MatrixRM& input) {
        return (gat_forward(input, topo, p).cwiseProduct(proj)).sum();
    };

    GatLayerCache cache;
    gat_forward(x, topo, p, &cache);
    auto grads = zero_like(p);
    const auto dx = gat_backward(proj, topo, p, cache, grads);

    // The attention logits must sit away from the LeakyReLU kink, or the
    // finite-difference probe would straddle it.
    for (int h = 0; h < p.heads; ++h) {
        const MatrixRM hp = x * p.w[h].transpose();
        for (int i = 0; i < n; ++i) {
            for (int q = topo.offsets[i]; q < topo.offsets[i + 1]; ++q) {
                const int j = topo.neighbors[q];
                const double raw = p.a_src[h].dot(hp.row(i)) +
                                   p.a_dst[h].dot(hp.row(j));
                REQUIRE(std::abs(raw) > 1e-4);
            }
        }
    }

    const double h_step = 1e-6;
    auto fd_check = [&](double* value, double analytic) {
        const double save = *value;
        *value = save + h_step;
        const double up = loss(x);
        *value = save - h_step;
        const double down = loss(x);
        *value = save;
        const double fd = (up - down) / (2 * h_step);
        const double denom = std::max({std::abs(fd), std::abs(analytic),
                                       1e-8});
        CHECK(std::abs(fd - analytic) / denom <= 1e-4);
    };

    for (int h = 0; h < p.heads; ++h) {
        for (int i = 0; i < p.w[h].size(); ++i)
            fd_check(p.w[h].data() + i, grads.w[h].data()[i]);
        for (int i = 0; i < p.a_src[h].size(); ++i)
            fd_check(p.a_src[h].data() + i, grads.a_src[h].data()[i]);
        for (int i = 0; i < p.a_dst[h].size(); ++i)
            fd_check(p.a_dst[h].data() + i, grads.a_dst[h].data()[i]);
    }
    for (int i = 0; i < x.size(); ++i)
        fd_check(x.data() + i, dx.data()[i]);
}

TEST_CASE("average-head gradients also match finite differences") {
    const int n = 4;
    const EdgeList edges = {{0, 1}, {1, 2}, {2, 3}};
    const auto topo = make_topology(n, edges);
    Rng rng(19);
    auto p = init_gat_layer(3, 4, 3, false, GatActivation::Identity, rng);
    auto x = random_input(n, 3, 20);
    MatrixRM proj(n, p.output_width());
    Rng prng(21);
    for (int i = 0; i < proj.size(); ++i) proj.data()[i] = prng.normal();

    GatLayerCache cache;
    gat_forward(x, topo, p, &cache);
    auto grads = zero_like(p);
    gat_backward(proj, topo, p, cache, grads);

    const double h_step = 1e-6;
    for (int h = 0; h < p.heads; ++h) {
        for (int i = 0; i < p.w[h].size(); ++i) {
            double* value = p.w[h].data() + i;
            const double save = *value;
            *value = save + h_step;
            const double up =
                (gat_forward(x, topo, p).cwiseProduct(proj)).sum();
            *value = save - h_step;
            const double down =
                (gat_forward(x, topo, p).cwiseProduct(proj)).sum();
            *value = save;
            const double fd = (up - down) / (2 * h_step);
            const double analytic = grads.w[h].data()[i];
            const double denom =
                std::max({std::abs(fd), std::abs(analytic), 1e-8});
            CHECK(std::abs(fd - analytic) / denom <= 1e-4);
        }
    }
}

TEST_CASE("non-finite parameters are rejected") {
    Rng rng(23);
    auto p = init_gat_layer(3, 2, 1, true, GatActivation::Elu, rng);
    p.w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    expect_error(ErrorCode::NumericalError, [&] { p.check_finite(); });
}

TEST_CASE("zero_like mirrors shapes with zero values") {
    Rng rng(29);
    auto p = init_gat_layer(5, 3, 2, true, GatActivation::Elu, rng);
    const auto z = zero_like(p);
    CHECK(z.heads == p.heads);
    REQUIRE(z.w.size() == p.w.size());
    for (std::size_t h = 0; h < z.w.size(); ++h) {
        CHECK(z.w[h].rows() == p.w[h].rows());
        CHECK(z.w[h].cols() == p.w[h].cols());
        CHECK(z.w[h].cwiseAbs().maxCoeff() == 0.0);
        CHECK(z.a_src[h].cwiseAbs().maxCoeff() == 0.0);
        CHECK(z.a_dst[h].cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("parameter refs enumerate every head in a stable order") {
    Rng rng(31);
    auto p = init_gat_layer(5, 3, 2, true, GatActivation::Elu, rng);
    std::vector<ParameterRef> refs;
    append_refs("enc0", p, refs);
    REQUIRE(refs.size() == 6);
    CHECK(refs[0].name == "enc0.head0.w");
    CHECK(refs[1].name == "enc0.head0.a_src");
    CHECK(refs[2].name == "enc0.head0.a_dst");
    CHECK(refs[3].name == "enc0.head1.w");
    CHECK(total_size(refs) == 2 * (3 * 5 + 3 + 3));
}
