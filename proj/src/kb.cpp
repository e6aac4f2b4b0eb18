#include "kgcot/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kgcot/error.hpp"
#include "kgcot/log.hpp"

namespace kgcot {

namespace {

std::vector<std::string> concept_tokens(const std::string& name) {
    std::vector<std::string> out;
    std::string current;
    for (char c : name) {
        if (c == '_') {
            if (!current.empty()) out.push_back(current);
            current.clear();
        } else {
            current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!current.empty()) out.push_back(current);
    return out;
}

std::string normalize_concept(const std::string& raw) {
    auto toks = concept_tokens(raw);
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += '_';
        out += toks[i];
    }
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::unordered_map<std::string, int> load_relation_groups(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("relation map: cannot open " + path);
    std::unordered_map<std::string, int> groups;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream ls(t);
        std::string relation;
        int group = -1;
        if (!(ls >> relation >> group) || group < 0 || group >= kRelationGroups) {
            throw ParseError("relation map: bad line " + std::to_string(line_no) + " in " + path);
        }
        groups[relation] = group;
    }
    if (groups.empty()) throw ParseError("relation map: no entries in " + path);
    return groups;
}

int KnowledgeBase::intern(const std::string& name) {
    auto it = node_ids_.find(name);
    if (it != node_ids_.end()) return it->second;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(name);
    node_ids_.emplace(name, id);
    return id;
}

void KnowledgeBase::index() {
    incident_.assign(nodes_.size(), {});
    std::vector<std::set<int>> nbr(nodes_.size());
    for (size_t t = 0; t < triples_.size(); ++t) {
        const Triple& tr = triples_[t];
        incident_[tr.head].push_back(static_cast<int>(t));
        if (tr.tail != tr.head) incident_[tr.tail].push_back(static_cast<int>(t));
        nbr[tr.head].insert(tr.tail);
        nbr[tr.tail].insert(tr.head);
    }
    neighbors_.resize(nodes_.size());
    for (size_t n = 0; n < nodes_.size(); ++n)
        neighbors_[n].assign(nbr[n].begin(), nbr[n].end());
}

KnowledgeBase KnowledgeBase::load(const std::string& dump_path,
                                  const std::string& relation_map_path, int* skipped) {
    auto groups = load_relation_groups(relation_map_path);
    std::ifstream in(dump_path);
    if (!in) throw ParseError("kb dump: cannot open " + dump_path);

    KnowledgeBase kb;
    std::string line;
    int line_no = 0;
    int lines_seen = 0;
    int dropped = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++lines_seen;
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string field;
        while (std::getline(ls, field, '\t')) fields.push_back(field);
        if (fields.size() != 3) {
            throw ParseError("kb dump: line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected 3 (" + dump_path + ")");
        }
        const std::string relation = trim(fields[0]);
        const std::string head = normalize_concept(trim(fields[1]));
        const std::string tail = normalize_concept(trim(fields[2]));
        if (relation.empty() || head.empty() || tail.empty()) {
            throw ParseError("kb dump: empty field at line " + std::to_string(line_no));
        }
        auto it = groups.find(relation);
        if (it == groups.end()) {
            ++dropped;
            continue;
        }
        kb.triples_.push_back({kb.intern(head), it->second, kb.intern(tail)});
    }
    if (lines_seen == 0) throw ParseError("kb dump: " + dump_path + " is empty");
    if (dropped > 0) {
        log::warn("kb dump: dropped " + std::to_string(dropped) + " triples with unknown relations");
    }
    if (skipped) *skipped = dropped;
    kb.index();
    return kb;
}

KnowledgeBase KnowledgeBase::from_triples(
    const std::vector<std::tuple<std::string, int, std::string>>& triples) {
    KnowledgeBase kb;
    for (const auto& [head, rel, tail] : triples) {
        if (rel < 0 || rel >= kRelationGroups) {
            throw ParseError("kb: relation group " + std::to_string(rel) + " out of [0,17)");
        }
        kb.triples_.push_back({kb.intern(normalize_concept(head)), rel,
                               kb.intern(normalize_concept(tail))});
    }
    kb.index();
    return kb;
}

int KnowledgeBase::node_id(const std::string& name) const {
    auto it = node_ids_.find(name);
    return it == node_ids_.end() ? -1 : it->second;
}

std::string to_string(NodeOrigin origin) {
    switch (origin) {
        case NodeOrigin::QuestionAnswer: return "question_answer";
        case NodeOrigin::OneHop: return "one_hop";
        case NodeOrigin::TwoHop: return "two_hop";
    }
    return "question_answer";
}

NodeOrigin origin_from_string(const std::string& s) {
    if (s == "question_answer") return NodeOrigin::QuestionAnswer;
    if (s == "one_hop") return NodeOrigin::OneHop;
    if (s == "two_hop") return NodeOrigin::TwoHop;
    throw ParseError("unknown node origin '" + s + "'");
}

std::string subgraph_to_json(const Subgraph& sg) {
    nlohmann::json j;
    j["nodes"] = sg.node_ids;
    std::vector<std::string> origins;
    origins.reserve(sg.node_origin.size());
    for (auto o : sg.node_origin) origins.push_back(to_string(o));
    j["origins"] = origins;
    auto edges = nlohmann::json::array();
    for (const auto& e : sg.edges) edges.push_back({e.src, e.dst, e.type});
    j["edges"] = edges;
    j["scores"] = sg.score;
    return j.dump(2);
}

Subgraph subgraph_from_json(const std::string& text, int d) {
    nlohmann::json j = nlohmann::json::parse(text);
    Subgraph sg;
    sg.node_ids = j.at("nodes").get<std::vector<std::string>>();
    for (const auto& o : j.at("origins")) sg.node_origin.push_back(origin_from_string(o));
    for (const auto& e : j.at("edges")) {
        SubgraphEdge edge{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()};
        if (edge.type < 0 || edge.type >= kEdgeTypes) {
            throw ParseError("subgraph: edge type " + std::to_string(edge.type) + " out of [0,34)");
        }
        sg.edges.push_back(edge);
    }
    sg.score = j.at("scores").get<std::vector<double>>();
    if (sg.node_ids.size() != sg.node_origin.size() || sg.node_ids.size() != sg.score.size()) {
        throw ParseError("subgraph: inconsistent field lengths");
    }
    sg.node_init = Tensor::zeros({sg.node_count(), d});
    return sg;
}

std::vector<int> ground(const std::string& text, const KnowledgeBase& kb) {
    const auto tokens = tokenize(text);
    std::vector<int> found;
    std::set<int> seen;
    for (size_t i = 0; i < tokens.size(); ++i) {
        for (int n = 4; n >= 1; --n) {
            if (i + n > tokens.size()) continue;
            std::string joined;
            for (int t = 0; t < n; ++t) {
                if (t) joined += '_';
                joined += tokens[i + t];
            }
            int id = kb.node_id(joined);
            if (id >= 0 && seen.insert(id).second) found.push_back(id);
        }
    }
    return found;
}

namespace {

std::set<int> pairwise_common_neighbors(const std::vector<int>& base, const KnowledgeBase& kb,
                                        const std::set<int>& exclude) {
    std::set<int> out;
    for (size_t a = 0; a < base.size(); ++a) {
        const auto& na = kb.neighbors(base[a]);
        for (size_t b = a + 1; b < base.size(); ++b) {
            const auto& nb = kb.neighbors(base[b]);
            std::vector<int> common;
            std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                                  std::back_inserter(common));
            for (int x : common)
                if (!exclude.count(x)) out.insert(x);
        }
    }
    return out;
}

}  // namespace

Expansion expand(const std::vector<int>& n_qa, const KnowledgeBase& kb) {
    std::set<int> qa_set(n_qa.begin(), n_qa.end());
    std::set<int> one = pairwise_common_neighbors(n_qa, kb, qa_set);

    std::vector<int> base(n_qa.begin(), n_qa.end());
    base.insert(base.end(), one.begin(), one.end());
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());

    std::set<int> exclude = qa_set;
    exclude.insert(one.begin(), one.end());
    std::set<int> two = pairwise_common_neighbors(base, kb, exclude);

    return {std::vector<int>(one.begin(), one.end()), std::vector<int>(two.begin(), two.end())};
}

namespace {

double cosine(const double* a, const double* b, int d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < d; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

Subgraph prune(const std::vector<Candidate>& candidates, const KnowledgeBase& kb,
               const Tensor& node_embeddings, const Tensor& context_embedding, int k_max) {
    const int p = static_cast<int>(candidates.size());
    const int d = node_embeddings.cols();
    if (node_embeddings.rows() != p) {
        throw ShapeError("prune: " + std::to_string(p) + " candidates but embeddings " +
                         shape_str(node_embeddings.shape()));
    }
    std::vector<double> scores(p);
    for (int i = 0; i < p; ++i) {
        scores[i] = cosine(node_embeddings.data().data() + static_cast<size_t>(i) * d,
                           context_embedding.data().data(), d);
    }

    std::vector<int> grounded, others;
    for (int i = 0; i < p; ++i) {
        (candidates[i].origin == NodeOrigin::QuestionAnswer ? grounded : others).push_back(i);
    }
    if (static_cast<int>(grounded.size()) > k_max) {
        throw BudgetError("prune: " + std::to_string(grounded.size()) +
                          " grounded nodes exceed node budget " + std::to_string(k_max));
    }
    std::sort(others.begin(), others.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return kb.node_name(candidates[a].kb_node) < kb.node_name(candidates[b].kb_node);
    });
    const int budget = k_max - static_cast<int>(grounded.size());
    if (static_cast<int>(others.size()) > budget) others.resize(budget);

    std::vector<int> kept = grounded;
    kept.insert(kept.end(), others.begin(), others.end());

    Subgraph sg;
    std::unordered_map<int, int> local;  // kb node -> local index
    std::vector<int> emb_rows;
    for (int ci : kept) {
        local.emplace(candidates[ci].kb_node, sg.node_count());
        sg.node_ids.push_back(kb.node_name(candidates[ci].kb_node));
        sg.node_origin.push_back(candidates[ci].origin);
        sg.score.push_back(scores[ci]);
        emb_rows.push_back(ci);
    }
    sg.node_init = emb_rows.empty() ? Tensor::zeros({0, d}) : gather_rows(node_embeddings, emb_rows).detach();

    for (const auto& t : kb.triples()) {
        auto hi = local.find(t.head);
        auto ti = local.find(t.tail);
        if (hi == local.end() || ti == local.end()) continue;
        sg.edges.push_back({hi->second, ti->second, t.rel});
        sg.edges.push_back({ti->second, hi->second, t.rel + kRelationGroups});
    }
    return sg;
}

ConceptSentence concept_sentence(const KnowledgeBase& kb, int node) {
    constexpr int kMaxTriples = 3;
    const auto own = concept_tokens(kb.node_name(node));
    ConceptSentence cs;
    int used = 0;
    for (int ti : kb.incident(node)) {
        if (used >= kMaxTriples) break;
        const Triple& t = kb.triples()[ti];
        for (const auto& tok : concept_tokens(kb.node_name(t.head))) cs.tokens.push_back(tok);
        cs.tokens.push_back("rel" + std::to_string(t.rel));
        for (const auto& tok : concept_tokens(kb.node_name(t.tail))) cs.tokens.push_back(tok);
        ++used;
    }
    if (used == 0) cs.tokens = own;

    for (size_t i = 0; i + own.size() <= cs.tokens.size(); ++i) {
        bool match = true;
        for (size_t t = 0; t < own.size(); ++t) {
            if (cs.tokens[i + t] != own[t]) {
                match = false;
                break;
            }
        }
        if (match) cs.spans.emplace_back(static_cast<int>(i), static_cast<int>(i + own.size()));
    }
    return cs;
}

namespace {

std::vector<double> hash_embedding(const std::string& token, int d) {
    auto rng = named_rng(fnv1a("hash_embed"), token);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(d);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace

Tensor node_initial_embeddings(const std::vector<int>& node_ids, const KnowledgeBase& kb,
                               const TextEncoderParams& enc, const Vocabulary& vocab,
                               int max_input_len, int* fallbacks) {
    NoGradGuard ng;
    const int d = enc.d;
    std::vector<double> out;
    out.reserve(node_ids.size() * static_cast<size_t>(d));
    int fell_back = 0;
    for (int node : node_ids) {
        const auto own = concept_tokens(kb.node_name(node));
        bool in_vocab = !own.empty();
        for (const auto& tok : own) in_vocab = in_vocab && vocab.contains(tok);

        std::vector<double> emb(d, 0.0);
        if (in_vocab) {
            ConceptSentence cs = concept_sentence(kb, node);
            if (static_cast<int>(cs.tokens.size()) > max_input_len) {
                cs.tokens.resize(max_input_len);
                std::erase_if(cs.spans, [&](const auto& sp) { return sp.second > max_input_len; });
            }
            if (!cs.spans.empty()) {
                Tensor h = encode_text(vocab.encode(cs.tokens), enc, max_input_len);
                for (const auto& [b, e] : cs.spans) {
                    for (int j = 0; j < d; ++j) {
                        double s = 0.0;
                        for (int r = b; r < e; ++r) s += h.at(r, j);
                        emb[j] += s / (e - b);
                    }
                }
                for (auto& v : emb) v /= static_cast<double>(cs.spans.size());
            } else {
                in_vocab = false;
            }
        }
        if (!in_vocab) {
            ++fell_back;
            log::warn("node embedding fallback for concept '" + kb.node_name(node) + "'");
            for (const auto& tok : own) {
                auto h = hash_embedding(tok, d);
                for (int j = 0; j < d; ++j) emb[j] += h[j];
            }
            if (!own.empty())
                for (auto& v : emb) v /= static_cast<double>(own.size());
        }
        out.insert(out.end(), emb.begin(), emb.end());
    }
    if (fallbacks) *fallbacks = fell_back;
    return Tensor::from_data({static_cast<int>(node_ids.size()), d}, std::move(out));
}

std::string grounding_text(const Sample& sample, CaptionMode mode) {
    std::string text = sample.question + " " + sample.context;
    for (const auto& c : sample.choices) text += " " + c;
    if (caption_in_grounding(mode) && sample.caption) text += " " + *sample.caption;
    return text;
}

Subgraph extract(const Sample& sample, const KnowledgeBase& kb, const TextEncoderParams& enc,
                 const Vocabulary& vocab, CaptionMode mode, int k_max, int max_input_len,
                 int* fallbacks) {
    NoGradGuard ng;
    const std::string text = grounding_text(sample, mode);
    const auto qa = ground(text, kb);
    const auto tiers = expand(qa, kb);

    std::vector<Candidate> candidates;
    for (int n : qa) candidates.push_back({n, NodeOrigin::QuestionAnswer});
    for (int n : tiers.one_hop) candidates.push_back({n, NodeOrigin::OneHop});
    for (int n : tiers.two_hop) candidates.push_back({n, NodeOrigin::TwoHop});

    if (candidates.empty()) {
        Subgraph sg;
        sg.node_init = Tensor::zeros({0, enc.d});
        if (fallbacks) *fallbacks = 0;
        return sg;
    }

    std::vector<int> ids;
    ids.reserve(candidates.size());
    for (const auto& c : candidates) ids.push_back(c.kb_node);
    Tensor embs = node_initial_embeddings(ids, kb, enc, vocab, max_input_len, fallbacks);

    Tensor ctx = mean_rows(encode_text(vocab.encode(tokenize(text)), enc, max_input_len));
    return prune(candidates, kb, embs, ctx, k_max);
}

void attach_node_embeddings(Subgraph& sg, const KnowledgeBase& kb, const TextEncoderParams& enc,
                            const Vocabulary& vocab, int max_input_len) {
    std::vector<int> ids;
    ids.reserve(sg.node_ids.size());
    for (const auto& name : sg.node_ids) {
        int id = kb.node_id(name);
        if (id < 0) throw ParseError("subgraph: node '" + name + "' not present in knowledge base");
        ids.push_back(id);
    }
    sg.node_init = ids.empty() ? Tensor::zeros({0, enc.d})
                               : node_initial_embeddings(ids, kb, enc, vocab, max_input_len);
}

}  // namespace kgcot
