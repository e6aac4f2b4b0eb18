#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kgcot/modality.hpp"
#include "kgcot/tensor.hpp"
#include "kgcot/text.hpp"

namespace kgcot {

inline constexpr int kRelationGroups = 17;  // forward groups; doubled for direction
inline constexpr int kEdgeTypes = 2 * kRelationGroups;

struct Triple {
    int head;
    int rel;  // relation group, [0, 16]
    int tail;
};

// Immutable after load; shareable across threads.
class KnowledgeBase {
public:
    // relation_map: lines of `raw_relation<SPACE>group_id`.
    // dump: UTF-8 TSV lines `relation<TAB>head<TAB>tail`.
    // Unknown relations are dropped and counted into *skipped (optional).
    static KnowledgeBase load(const std::string& dump_path, const std::string& relation_map_path,
                              int* skipped = nullptr);
    static KnowledgeBase from_triples(
        const std::vector<std::tuple<std::string, int, std::string>>& triples);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const std::string& node_name(int id) const { return nodes_[id]; }
    int node_id(const std::string& name) const;  // -1 when absent
    const std::vector<Triple>& triples() const { return triples_; }
    // Triple indices touching a node, either endpoint.
    const std::vector<int>& incident(int node) const { return incident_[node]; }
    // Sorted unique neighbours over both edge directions.
    const std::vector<int>& neighbors(int node) const { return neighbors_[node]; }

private:
    int intern(const std::string& name);
    void index();

    std::vector<std::string> nodes_;
    std::unordered_map<std::string, int> node_ids_;
    std::vector<Triple> triples_;
    std::vector<std::vector<int>> incident_;
    std::vector<std::vector<int>> neighbors_;
};

std::unordered_map<std::string, int> load_relation_groups(const std::string& path);

enum class NodeOrigin { QuestionAnswer, OneHop, TwoHop };
std::string to_string(NodeOrigin origin);
NodeOrigin origin_from_string(const std::string& s);

struct SubgraphEdge {
    int src;   // local node index
    int dst;
    int type;  // [0, 33]: relation group, +17 for the reversed direction
};

struct Subgraph {
    std::vector<std::string> node_ids;
    std::vector<NodeOrigin> node_origin;
    std::vector<SubgraphEdge> edges;
    Tensor node_init;           // p x d; empty (0 x d) when p == 0
    std::vector<double> score;  // relevance per node

    int node_count() const { return static_cast<int>(node_ids.size()); }
};

std::string subgraph_to_json(const Subgraph& sg);
// node_init is not serialized; attach_node_embeddings() rebuilds it.
Subgraph subgraph_from_json(const std::string& text, int d);

// All KB concepts whose token sequence (n <= 4) occurs contiguously in the
// tokenized text. Ordered by first occurrence, longest match first at equal
// starts; overlapping matches all count.
std::vector<int> ground(const std::string& text, const KnowledgeBase& kb);

// Pairwise common-neighbour expansion: one tier over N_qa pairs, a second
// tier over pairs drawn from N_qa union N_1hop. Outputs sorted by node id.
struct Expansion {
    std::vector<int> one_hop;
    std::vector<int> two_hop;
};
Expansion expand(const std::vector<int>& n_qa, const KnowledgeBase& kb);

struct Candidate {
    int kb_node;
    NodeOrigin origin;
};

// Grounded nodes are always retained; the remaining budget is filled in
// descending cosine(node_init, context_embedding) order, ties broken by node
// name. Only induced edges survive.
Subgraph prune(const std::vector<Candidate>& candidates, const KnowledgeBase& kb,
               const Tensor& node_embeddings, const Tensor& context_embedding, int k_max);

// Each node is embedded by encoding a carrier sentence built from its
// incident triples and averaging encoder outputs over every occurrence span
// of the concept. Concepts with out-of-vocabulary tokens fall back to an
// averaged per-token hash embedding (counted into *fallbacks).
Tensor node_initial_embeddings(const std::vector<int>& node_ids, const KnowledgeBase& kb,
                               const TextEncoderParams& enc, const Vocabulary& vocab,
                               int max_input_len, int* fallbacks = nullptr);

// Carrier sentence and the concept's occurrence spans within it (test hook).
struct ConceptSentence {
    std::vector<std::string> tokens;
    std::vector<std::pair<int, int>> spans;  // half-open token ranges
};
ConceptSentence concept_sentence(const KnowledgeBase& kb, int node);

// ground -> expand -> embeddings -> prune, with the caption joining the
// grounding text for caption modes nodes|both.
Subgraph extract(const Sample& sample, const KnowledgeBase& kb, const TextEncoderParams& enc,
                 const Vocabulary& vocab, CaptionMode mode, int k_max, int max_input_len,
                 int* fallbacks = nullptr);

std::string grounding_text(const Sample& sample, CaptionMode mode);

// Recomputes node_init for a deserialized subgraph.
void attach_node_embeddings(Subgraph& sg, const KnowledgeBase& kb, const TextEncoderParams& enc,
                            const Vocabulary& vocab, int max_input_len);

}  // namespace kgcot
