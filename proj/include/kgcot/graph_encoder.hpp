#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgcot/kb.hpp"
#include "kgcot/tensor.hpp"

namespace kgcot {

// Learned embedding per edge type, one row per direction-qualified relation
// group. First dimension is always 34.
struct EdgeTypeTable {
    Tensor weights;  // 34 x d_edge
};

EdgeTypeTable init_edge_table(int d_edge, std::uint64_t seed, const std::string& prefix);

// Disjoint per-sample graphs merged into one: features stacked, local edge
// indices shifted per sample, short samples padded with zero-feature
// isolated nodes. Equivalent to a block-diagonal super adjacency.
struct GraphBatch {
    Tensor node_feats;                // P_total x d
    std::vector<SubgraphEdge> edges;  // global node indices
    std::vector<int> sample_offsets;  // start row per sample
    std::vector<bool> pad_mask;       // true = real node
    int total() const { return node_feats.rows(); }
    int samples() const { return static_cast<int>(sample_offsets.size()); }
    // Half-open row range of one sample, padding included.
    std::pair<int, int> sample_range(int i) const;
};

GraphBatch collate(const std::vector<Subgraph>& graphs, int min_nodes);

std::string graph_batch_to_json(const GraphBatch& batch, const std::vector<Subgraph>& graphs);
// Rebuilds the structure; node features are zero until embeddings are
// attached (they are not serialized).
GraphBatch graph_batch_from_json(const std::string& text, int d);

struct RgatParams {
    Tensor w;       // d x d, shared source/destination transform
    Tensor w_edge;  // d_edge x d
    Tensor a_src, a_dst, a_edge;  // d x 1 scoring vectors
    Tensor w_self;  // d x d self path, keeps isolated nodes finite
    Tensor bias;    // 1 x d
    double leaky_slope = 0.2;
};

struct GcnParams {
    Tensor w;     // d x d
    Tensor bias;  // 1 x d
};

struct GraphEncoderParams {
    RgatParams rgat;
    GcnParams gcn;
};

GraphEncoderParams init_graph_encoder(int d, int d_edge, std::uint64_t seed,
                                      const std::string& prefix);

// Attention logit per edge from (source, destination, edge-type embedding)
// through linear maps and a leaky rectifier, softmax over each destination's
// incoming edges; messages are the transformed source features.
Tensor rgat_layer(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                  const EdgeTypeTable& table, const RgatParams& p);
Tensor rgat_layer(const GraphBatch& batch, const EdgeTypeTable& table, const RgatParams& p);

// Per-edge attention weights in edge order (softmax per destination),
// exposed for tests and the acceptance suite.
Tensor rgat_attention(const Tensor& x, const std::vector<SubgraphEdge>& edges,
                      const EdgeTypeTable& table, const RgatParams& p);

// Symmetric-normalised aggregation with self-loops over the multigraph
// adjacency, then linear map and rectifier.
Tensor gcn_layer(const Tensor& x, const std::vector<SubgraphEdge>& edges, const GcnParams& p);
Tensor gcn_layer(const GraphBatch& batch, const GcnParams& p);

// Exactly two layers: relational attention, then convolution.
Tensor encode_graph_features(const GraphBatch& batch, const EdgeTypeTable& table,
                             const GraphEncoderParams& p);
// The same, split back into per-sample blocks (padding rows included).
std::vector<Tensor> encode_graph(const GraphBatch& batch, const EdgeTypeTable& table,
                                 const GraphEncoderParams& p);

}  // namespace kgcot
