#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "kgcot/error.hpp"
#include "kgcot/graph_encoder.hpp"
#include "oracles.hpp"

using namespace kgcot;

namespace {

Subgraph random_subgraph(int nodes, int edges, int d, std::mt19937_64& rng) {
    Subgraph g;
    std::uniform_int_distribution<int> node_dist(0, std::max(0, nodes - 1));
    std::uniform_int_distribution<int> rel_dist(0, kRelationGroups - 1);
    for (int i = 0; i < nodes; ++i) {
        g.node_ids.push_back("n" + std::to_string(i));
        g.node_origin.push_back(NodeOrigin::OneHop);
        g.score.push_back(0.0);
    }
    for (int e = 0; e < edges && nodes > 0; ++e) {
        int s = node_dist(rng), t = node_dist(rng), rel = rel_dist(rng);
        g.edges.push_back({s, t, rel});
        g.edges.push_back({t, s, rel + kRelationGroups});
    }
    g.node_init = Tensor::uniform({nodes, d}, -1, 1, rng);
    return g;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Dense scalar-loop reimplementation of the relational attention layer.
std::vector<double> dense_rgat(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                               const EdgeTypeTable& table, const RgatParams& p) {
    const int n = x.rows(), d = x.cols();
    const int de = table.weights.cols();
    auto z = oracle::matmul(x.data(), n, d, p.w.data(), d);
    auto self = oracle::matmul(x.data(), n, d, p.w_self.data(), d);
    std::vector<double> logits(edges.size());
    for (size_t e = 0; e < edges.size(); ++e) {
        double s = 0;
        for (int j = 0; j < d; ++j) s += z[edges[e].src * d + j] * p.a_src.data()[j];
        for (int j = 0; j < d; ++j) s += z[edges[e].dst * d + j] * p.a_dst.data()[j];
        std::vector<double> ze(d, 0.0);
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < de; ++k)
                ze[j] += table.weights.data()[edges[e].type * de + k] * p.w_edge.data()[k * d + j];
        for (int j = 0; j < d; ++j) s += ze[j] * p.a_edge.data()[j];
        logits[e] = s > 0 ? s : p.leaky_slope * s;
    }
    std::vector<double> out(static_cast<size_t>(n) * d, 0.0);
    for (int v = 0; v < n; ++v) {
        std::vector<size_t> incoming;
        for (size_t e = 0; e < edges.size(); ++e)
            if (edges[e].dst == v) incoming.push_back(e);
        if (!incoming.empty()) {
            double mx = -1e300;
            for (size_t e : incoming) mx = std::max(mx, logits[e]);
            double zsum = 0;
            std::vector<double> w(incoming.size());
            for (size_t i = 0; i < incoming.size(); ++i) {
                w[i] = std::exp(logits[incoming[i]] - mx);
                zsum += w[i];
            }
            for (size_t i = 0; i < incoming.size(); ++i) {
                const double alpha = w[i] / zsum;
                const int src = edges[incoming[i]].src;
                for (int j = 0; j < d; ++j) out[static_cast<size_t>(v) * d + j] += alpha * z[src * d + j];
            }
        }
        for (int j = 0; j < d; ++j) {
            double val = out[static_cast<size_t>(v) * d + j] + self[static_cast<size_t>(v) * d + j] +
                         p.bias.data()[j];
            out[static_cast<size_t>(v) * d + j] = val > 0 ? val : 0.0;
        }
    }
    return out;
}

// Dense D^{-1/2}(A+I)D^{-1/2} X W oracle with multigraph counts and rectifier.
std::vector<double> dense_gcn(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                              const GcnParams& p) {
    const int n = x.rows(), d = x.cols();
    std::vector<double> adj(static_cast<size_t>(n) * n, 0.0);
    for (const auto& e : edges) adj[static_cast<size_t>(e.dst) * n + e.src] += 1.0;
    for (int i = 0; i < n; ++i) adj[static_cast<size_t>(i) * n + i] += 1.0;
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[i] += adj[static_cast<size_t>(i) * n + j];
    std::vector<double> norm(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            norm[static_cast<size_t>(i) * n + j] =
                adj[static_cast<size_t>(i) * n + j] / std::sqrt(deg[i] * deg[j]);
    auto xw = oracle::matmul(x.data(), n, d, p.w.data(), d);
    auto ax = oracle::matmul(norm, n, n, xw, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double val = ax[static_cast<size_t>(i) * d + j] + p.bias.data()[j];
            ax[static_cast<size_t>(i) * d + j] = val > 0 ? val : 0.0;
        }
    return ax;
}

}  // namespace

TEST_CASE("collate produces the documented offsets") {
    std::mt19937_64 rng(1);
    const int d = 6;
    std::vector<Subgraph> graphs = {random_subgraph(3, 2, d, rng), random_subgraph(5, 4, d, rng),
                                    random_subgraph(2, 1, d, rng)};
    auto batch = collate(graphs, 0);
    CHECK(batch.sample_offsets == std::vector<int>{0, 3, 8});
    CHECK(batch.total() == 10);
    // no edge crosses a sample boundary
    for (const auto& e : batch.edges) {
        int si = -1, sj = -1;
        for (int s = 0; s < batch.samples(); ++s) {
            auto [b, en] = batch.sample_range(s);
            if (e.src >= b && e.src < en) si = s;
            if (e.dst >= b && e.dst < en) sj = s;
        }
        CHECK(si == sj);
    }
    // single graph collation is the identity relabeling
    auto one = collate({graphs[0]}, 0);
    CHECK(one.node_feats.data() == graphs[0].node_init.data());
    REQUIRE(one.edges.size() == graphs[0].edges.size());
    for (size_t i = 0; i < one.edges.size(); ++i) {
        CHECK(one.edges[i].src == graphs[0].edges[i].src);
        CHECK(one.edges[i].dst == graphs[0].edges[i].dst);
    }
}

TEST_CASE("collate equals explicit block-diagonal adjacency assembly") {
    std::mt19937_64 rng(2);
    const int d = 4;
    std::vector<Subgraph> graphs;
    for (int i = 0; i < 4; ++i) graphs.push_back(random_subgraph(2 + i, 3, d, rng));
    auto batch = collate(graphs, 0);

    const int total = batch.total();
    std::vector<double> super(static_cast<size_t>(total) * total, 0.0);
    for (const auto& e : batch.edges) super[static_cast<size_t>(e.dst) * total + e.src] += 1.0;

    std::vector<double> blocks(static_cast<size_t>(total) * total, 0.0);
    int offset = 0;
    for (const auto& g : graphs) {
        for (const auto& e : g.edges)
            blocks[static_cast<size_t>(e.dst + offset) * total + (e.src + offset)] += 1.0;
        offset += g.node_count();
    }
    CHECK(super == blocks);
}

TEST_CASE("collate pads short samples with masked isolated nodes") {
    std::mt19937_64 rng(3);
    const int d = 4;
    std::vector<Subgraph> graphs = {random_subgraph(2, 1, d, rng), random_subgraph(6, 3, d, rng)};
    auto batch = collate(graphs, 4);
    CHECK(batch.total() == 10);  // 2 -> 4 padded, 6 stays
    CHECK(batch.sample_offsets == std::vector<int>{0, 4});
    CHECK(batch.pad_mask == std::vector<bool>{true, true, false, false, true, true, true, true,
                                              true, true});
    for (int j = 0; j < d; ++j) {
        CHECK(batch.node_feats.at(2, j) == 0.0);
        CHECK(batch.node_feats.at(3, j) == 0.0);
    }
    // empty graph padded to the floor
    Subgraph empty;
    empty.node_init = Tensor::zeros({0, d});
    auto padded = collate({empty}, 3);
    CHECK(padded.total() == 3);
    CHECK(padded.pad_mask == std::vector<bool>{false, false, false});
}

TEST_CASE("rgat attention for one and two incoming edges") {
    const int d = 4;
    auto table = init_edge_table(3, 11, "g");
    auto params = init_graph_encoder(d, 3, 11, "g");

    Subgraph g;
    g.node_init = Tensor::from_data({3, d}, {1, 0, 0, 0, 1, 0, 0, 0, 0.5, 0.5, 0.5, 0.5});
    g.edges = {{0, 2, 1}};
    auto alpha = rgat_attention(g.node_init, g.edges, table, params.rgat);
    CHECK(alpha.data()[0] == 1.0);

    // identical features and identical types split evenly
    Subgraph g2;
    g2.node_init = Tensor::from_data({3, d}, {1, 2, 3, 4, 1, 2, 3, 4, 0, 0, 1, 1});
    g2.edges = {{0, 2, 5}, {1, 2, 5}};
    auto alpha2 = rgat_attention(g2.node_init, g2.edges, table, params.rgat);
    CHECK(alpha2.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(alpha2.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("rgat matches the dense per-destination softmax oracle") {
    std::mt19937_64 rng(21);
    const int d = 5, de = 3;
    auto table = init_edge_table(de, 13, "g");
    auto params = init_graph_encoder(d, de, 13, "g");
    auto g = random_subgraph(5, 6, d, rng);
    auto got = rgat_layer(g.node_init, g.edges, table, params.rgat);
    auto want = dense_rgat(g.node_init, g.edges, table, params.rgat);
    CHECK(max_abs_diff(got.data(), want) < 1e-10);
}

TEST_CASE("rgat rejects out-of-range edge types") {
    const int d = 4;
    auto table = init_edge_table(3, 11, "g");
    auto params = init_graph_encoder(d, 3, 11, "g");
    Subgraph g;
    g.node_init = Tensor::zeros({2, d});
    g.edges = {{0, 1, kEdgeTypes}};
    CHECK_THROWS_AS(rgat_layer(g.node_init, g.edges, table, params.rgat), ShapeError);
}

TEST_CASE("gcn isolated node and symmetry") {
    const int d = 4;
    auto params = init_graph_encoder(d, 3, 31, "g");
    std::mt19937_64 rng(8);
    Tensor x = Tensor::uniform({1, d}, -1, 1, rng);
    auto out = gcn_layer(x, {}, params.gcn);
    auto xw = oracle::matmul(x.data(), 1, d, params.gcn.w.data(), d);
    for (int j = 0; j < d; ++j) {
        double want = xw[j] + params.gcn.bias.data()[j];
        CHECK(out.data()[j] == doctest::Approx(want > 0 ? want : 0.0).epsilon(1e-12));
    }

    // two identical nodes joined both ways produce identical outputs
    Tensor x2 = Tensor::from_data({2, d}, {1, 2, 3, 4, 1, 2, 3, 4});
    std::vector<SubgraphEdge> edges = {{0, 1, 2}, {1, 0, 19}};
    auto out2 = gcn_layer(x2, edges, params.gcn);
    for (int j = 0; j < d; ++j) CHECK(out2.at(0, j) == out2.at(1, j));
}

TEST_CASE("gcn matches the dense normalized adjacency oracle") {
    std::mt19937_64 rng(33);
    const int d = 4;
    auto params = init_graph_encoder(d, 3, 77, "g");
    auto g = random_subgraph(6, 7, d, rng);
    auto got = gcn_layer(g.node_init, g.edges, params.gcn);
    auto want = dense_gcn(g.node_init, g.edges, params.gcn);
    CHECK(max_abs_diff(got.data(), want) < 1e-10);
}

TEST_CASE("batched forward equals independent per-sample forwards") {
    std::mt19937_64 rng(41);
    const int d = 6, de = 4;
    auto table = init_edge_table(de, 3, "g");
    auto params = init_graph_encoder(d, de, 3, "g");
    for (int trial = 0; trial < 5; ++trial) {
        std::uniform_int_distribution<int> count(2, 5);
        std::vector<Subgraph> graphs;
        int b = count(rng);
        for (int i = 0; i < b; ++i)
            graphs.push_back(random_subgraph(count(rng), count(rng), d, rng));
        auto batched = encode_graph(collate(graphs, 2), table, params);
        REQUIRE(static_cast<int>(batched.size()) == b);
        for (int i = 0; i < b; ++i) {
            auto solo = encode_graph(collate({graphs[i]}, 2), table, params)[0];
            CHECK(max_abs_diff(batched[i].data(), solo.data()) < 1e-9);
        }
    }
}

TEST_CASE("batch of one equals the unbatched layer calls") {
    std::mt19937_64 rng(47);
    const int d = 5;
    auto table = init_edge_table(3, 9, "g");
    auto params = init_graph_encoder(d, 3, 9, "g");
    auto g = random_subgraph(4, 5, d, rng);
    auto via_batch = encode_graph(collate({g}, 0), table, params)[0];
    auto direct = gcn_layer(rgat_layer(g.node_init, g.edges, table, params.rgat), g.edges,
                            params.gcn);
    CHECK(via_batch.data() == direct.data());
}

TEST_CASE("empty subgraph padded to a floor yields bias-only rows") {
    const int d = 4;
    auto table = init_edge_table(3, 15, "g");
    auto params = init_graph_encoder(d, 3, 15, "g");
    Subgraph empty;
    empty.node_init = Tensor::zeros({0, d});
    auto batch = collate({empty}, 2);
    auto out = encode_graph(batch, table, params)[0];
    REQUIRE(out.rows() == 2);
    // zero input, isolated: rgat gives relu(bias)=0 bias rows; both rows identical
    for (int j = 0; j < d; ++j) CHECK(out.at(0, j) == out.at(1, j));
    for (double v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("node permutation within a subgraph permutes outputs identically") {
    std::mt19937_64 rng(61);
    const int d = 5;
    auto table = init_edge_table(3, 19, "g");
    auto params = init_graph_encoder(d, 3, 19, "g");
    auto g = random_subgraph(6, 8, d, rng);

    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Subgraph h;
    h.node_ids.resize(6);
    h.node_origin.assign(6, NodeOrigin::OneHop);
    h.score.assign(6, 0.0);
    std::vector<double> feats(6 * d);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < d; ++j) feats[static_cast<size_t>(perm[i]) * d + j] = g.node_init.at(i, j);
    h.node_init = Tensor::from_data({6, d}, feats);
    for (const auto& e : g.edges) h.edges.push_back({perm[e.src], perm[e.dst], e.type});

    auto out_g = encode_graph(collate({g}, 0), table, params)[0];
    auto out_h = encode_graph(collate({h}, 0), table, params)[0];
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(out_h.at(perm[i], j) == doctest::Approx(out_g.at(i, j)).epsilon(1e-11));
}

TEST_CASE("gradient check through both graph layers") {
    std::mt19937_64 rng(71);
    const int d = 4, de = 3;
    auto table = init_edge_table(de, 23, "g");
    auto params = init_graph_encoder(d, de, 23, "g");
    auto g = random_subgraph(5, 6, d, rng);
    Tensor feats = Tensor::uniform({5, d}, -1, 1, rng, true);
    Tensor target = Tensor::uniform({5, d}, -1, 1, rng);

    auto loss_fn = [&] {
        Tensor out = gcn_layer(rgat_layer(feats, g.edges, table, params.rgat), g.edges, params.gcn);
        Tensor diff = sub(out, target);
        return mean_all(mul(diff, diff));
    };
    std::vector<Tensor> leaves = {feats,           params.rgat.w,     params.rgat.w_edge,
                                  params.rgat.a_src, params.rgat.a_dst, params.rgat.a_edge,
                                  params.rgat.w_self, params.rgat.bias,  params.gcn.w,
                                  params.gcn.bias,  table.weights};
    CHECK(grad_check(loss_fn, leaves, 1e-5) < 1e-4);
}

TEST_CASE("graph batch JSON round trip") {
    std::mt19937_64 rng(81);
    const int d = 4;
    std::vector<Subgraph> graphs = {random_subgraph(3, 2, d, rng), random_subgraph(1, 0, d, rng)};
    for (size_t g = 0; g < graphs.size(); ++g)
        for (size_t i = 0; i < graphs[g].node_ids.size(); ++i)
            graphs[g].node_ids[i] = "g" + std::to_string(g) + "n" + std::to_string(i);
    auto batch = collate(graphs, 2);
    auto text = graph_batch_to_json(batch, graphs);
    auto back = graph_batch_from_json(text, d);
    CHECK(back.sample_offsets == batch.sample_offsets);
    CHECK(back.pad_mask == batch.pad_mask);
    CHECK(back.total() == batch.total());
    REQUIRE(back.edges.size() == batch.edges.size());
    for (size_t i = 0; i < batch.edges.size(); ++i) {
        CHECK(back.edges[i].src == batch.edges[i].src);
        CHECK(back.edges[i].dst == batch.edges[i].dst);
        CHECK(back.edges[i].type == batch.edges[i].type);
    }
}
