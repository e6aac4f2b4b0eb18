#include "kgcot/graph_encoder.hpp"

#include <cmath>

#include <json.hpp>

#include "kgcot/error.hpp"

namespace kgcot {

namespace {

Tensor init_weight(int rows, int cols, std::uint64_t seed, const std::string& name) {
    auto rng = named_rng(seed, name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

}  // namespace

EdgeTypeTable init_edge_table(int d_edge, std::uint64_t seed, const std::string& prefix) {
    return {init_weight(kEdgeTypes, d_edge, seed, prefix + ".edge_table")};
}

GraphEncoderParams init_graph_encoder(int d, int d_edge, std::uint64_t seed,
                                      const std::string& prefix) {
    GraphEncoderParams p;
    p.rgat.w = init_weight(d, d, seed, prefix + ".rgat.w");
    p.rgat.w_edge = init_weight(d_edge, d, seed, prefix + ".rgat.w_edge");
    p.rgat.a_src = init_weight(d, 1, seed, prefix + ".rgat.a_src");
    p.rgat.a_dst = init_weight(d, 1, seed, prefix + ".rgat.a_dst");
    p.rgat.a_edge = init_weight(d, 1, seed, prefix + ".rgat.a_edge");
    p.rgat.w_self = init_weight(d, d, seed, prefix + ".rgat.w_self");
    p.rgat.bias = Tensor::zeros({1, d}, true);
    p.gcn.w = init_weight(d, d, seed, prefix + ".gcn.w");
    p.gcn.bias = Tensor::zeros({1, d}, true);
    return p;
}

std::pair<int, int> GraphBatch::sample_range(int i) const {
    const int begin = sample_offsets[i];
    const int end = (i + 1 < samples()) ? sample_offsets[i + 1] : total();
    return {begin, end};
}

GraphBatch collate(const std::vector<Subgraph>& graphs, int min_nodes) {
    if (graphs.empty()) throw ShapeError("collate: empty graph list");
    const int d = graphs[0].node_init.cols();
    GraphBatch batch;
    std::vector<Tensor> feature_parts;
    int offset = 0;
    for (const auto& g : graphs) {
        if (g.node_init.cols() != d) {
            throw ShapeError("collate: feature width mismatch " + shape_str(g.node_init.shape()) +
                             " vs [-x" + std::to_string(d) + "]");
        }
        if (g.node_init.rows() != g.node_count()) {
            throw ShapeError("collate: subgraph has " + std::to_string(g.node_count()) +
                             " nodes but features " + shape_str(g.node_init.shape()));
        }
        batch.sample_offsets.push_back(offset);
        const int real = g.node_count();
        const int padded = std::max(real, min_nodes);
        if (real > 0) feature_parts.push_back(g.node_init);
        if (padded > real) feature_parts.push_back(Tensor::zeros({padded - real, d}));
        for (const auto& e : g.edges) {
            batch.edges.push_back({e.src + offset, e.dst + offset, e.type});
        }
        for (int i = 0; i < padded; ++i) batch.pad_mask.push_back(i < real);
        offset += padded;
    }
    batch.node_feats = feature_parts.empty() ? Tensor::zeros({0, d}) : concat_rows(feature_parts);
    return batch;
}

std::string graph_batch_to_json(const GraphBatch& batch, const std::vector<Subgraph>& graphs) {
    nlohmann::json j;
    std::vector<std::string> nodes;
    std::vector<std::string> origins;
    std::vector<double> scores;
    std::vector<int> counts;
    for (const auto& g : graphs) {
        counts.push_back(g.node_count());
        nodes.insert(nodes.end(), g.node_ids.begin(), g.node_ids.end());
        for (auto o : g.node_origin) origins.push_back(to_string(o));
        scores.insert(scores.end(), g.score.begin(), g.score.end());
    }
    j["nodes"] = nodes;
    j["origins"] = origins;
    auto edges = nlohmann::json::array();
    for (const auto& e : batch.edges) edges.push_back({e.src, e.dst, e.type});
    j["edges"] = edges;
    j["scores"] = scores;
    j["offsets"] = batch.sample_offsets;
    j["counts"] = counts;
    j["total"] = batch.total();
    return j.dump(2);
}

GraphBatch graph_batch_from_json(const std::string& text, int d) {
    nlohmann::json j = nlohmann::json::parse(text);
    const auto offsets = j.at("offsets").get<std::vector<int>>();
    const auto counts = j.at("counts").get<std::vector<int>>();
    if (offsets.size() != counts.size()) throw ParseError("graph batch: offsets/counts mismatch");
    GraphBatch batch;
    batch.sample_offsets = offsets;
    const int total = j.at("total").get<int>();
    for (size_t i = 0; i < offsets.size(); ++i) {
        const int end = (i + 1 < offsets.size()) ? offsets[i + 1] : total;
        const int padded = end - offsets[i];
        for (int r = 0; r < padded; ++r) batch.pad_mask.push_back(r < counts[i]);
    }
    for (const auto& e : j.at("edges")) {
        batch.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
    }
    batch.node_feats = Tensor::zeros({total, d});
    return batch;
}

Tensor rgat_attention(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                      const EdgeTypeTable& table, const RgatParams& p) {
    const int n = x.rows();
    std::vector<int> src, dst, type;
    src.reserve(edges.size());
    for (const auto& e : edges) {
        src.push_back(e.src);
        dst.push_back(e.dst);
        type.push_back(e.type);
    }
    Tensor z = matmul(x, p.w);
    Tensor z_src = gather_rows(z, src);
    Tensor z_dst = gather_rows(z, dst);
    Tensor z_edge = matmul(gather_rows(table.weights, type), p.w_edge);
    Tensor logits = leaky_relu(
        add(add(matmul(z_src, p.a_src), matmul(z_dst, p.a_dst)), matmul(z_edge, p.a_edge)),
        p.leaky_slope);
    return segment_softmax(logits, dst, n);
}

Tensor rgat_layer(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                  const EdgeTypeTable& table, const RgatParams& p) {
    const int n = x.rows();
    std::vector<int> src, dst;
    src.reserve(edges.size());
    for (const auto& e : edges) {
        src.push_back(e.src);
        dst.push_back(e.dst);
    }
    Tensor z = matmul(x, p.w);
    Tensor alpha = rgat_attention(x, edges, table, p);
    Tensor attended = scatter_sum_rows(mul_colvec(gather_rows(z, src), alpha), dst, n);
    Tensor self_path = matmul(x, p.w_self);
    return relu(add_rowvec(add(attended, self_path), p.bias));
}

Tensor rgat_layer(const GraphBatch& batch, const EdgeTypeTable& table, const RgatParams& p) {
    return rgat_layer(batch.node_feats, batch.edges, table, p);
}

Tensor gcn_layer(const Tensor& x, const std::vector<SubgraphEdge>& edges, const GcnParams& p) {
    const int n = x.rows();
    // deg = self loop + incoming multiplicity; edge lists carry both
    // directions, so row and column sums of the super adjacency agree.
    std::vector<double> deg(n, 1.0);
    for (const auto& e : edges) deg[e.dst] += 1.0;

    Tensor xw = matmul(x, p.w);
    std::vector<int> src, dst;
    std::vector<double> coeff;
    src.reserve(edges.size());
    for (const auto& e : edges) {
        src.push_back(e.src);
        dst.push_back(e.dst);
        coeff.push_back(1.0 / std::sqrt(deg[e.dst] * deg[e.src]));
    }
    Tensor msg = mul_colvec(gather_rows(xw, src),
                            Tensor::from_data({static_cast<int>(coeff.size()), 1}, coeff));
    Tensor agg = scatter_sum_rows(msg, dst, n);

    std::vector<double> self_coeff(n);
    for (int i = 0; i < n; ++i) self_coeff[i] = 1.0 / deg[i];
    Tensor self_path = mul_colvec(xw, Tensor::from_data({n, 1}, self_coeff));
    return relu(add_rowvec(add(agg, self_path), p.bias));
}

Tensor gcn_layer(const GraphBatch& batch, const GcnParams& p) {
    return gcn_layer(batch.node_feats, batch.edges, p);
}

Tensor encode_graph_features(const GraphBatch& batch, const EdgeTypeTable& table,
                             const GraphEncoderParams& p) {
    for (const auto& e : batch.edges) {
        if (e.type < 0 || e.type >= kEdgeTypes) {
            throw ShapeError("encode_graph: edge type " + std::to_string(e.type) + " out of [0,34)");
        }
    }
    Tensor h = rgat_layer(batch, table, p.rgat);
    return gcn_layer(h, batch.edges, p.gcn);
}

std::vector<Tensor> encode_graph(const GraphBatch& batch, const EdgeTypeTable& table,
                                 const GraphEncoderParams& p) {
    Tensor all = encode_graph_features(batch, table, p);
    std::vector<Tensor> out;
    out.reserve(batch.samples());
    for (int i = 0; i < batch.samples(); ++i) {
        auto [begin, end] = batch.sample_range(i);
        out.push_back(rows(all, begin, end));
    }
    return out;
}

}  // namespace kgcot
