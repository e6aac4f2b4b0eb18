#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "kgcot/dataset.hpp"
#include "kgcot/error.hpp"
#include "kgcot/fusion.hpp"
#include "kgcot/graph_encoder.hpp"
#include "kgcot/kb.hpp"
#include "kgcot/metrics.hpp"
#include "kgcot/pipeline.hpp"
#include "kgcot/tensor.hpp"
#include "kgcot/text.hpp"

namespace py = pybind11;
using namespace kgcot;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_data({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))},
                             std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    py::array_t<double> out({t.rows(), t.cols()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<SubgraphEdge> edges_from_tuples(const std::vector<std::tuple<int, int, int>>& edges) {
    std::vector<SubgraphEdge> out;
    out.reserve(edges.size());
    for (const auto& [s, d, t] : edges) out.push_back({s, d, t});
    return out;
}

// Grounding + expansion + pruning behind one handle: the vocabulary and the
// embedding encoder are built once from a corpus of texts.
class Extractor {
public:
    Extractor(const KnowledgeBase& kb, const std::vector<std::string>& corpus, int d,
              std::uint64_t seed, int max_input_len)
        : kb_(kb), d_(d), max_input_len_(max_input_len) {
        for (const auto& text : corpus) vocab_.add_all(tokenize(text));
        enc_ = init_text_encoder(vocab_.size(), d, 2, d % 4 == 0 ? 4 : 1, seed, "enc");
    }

    py::dict extract_sample(const std::string& question, const std::string& context,
                            const std::vector<std::string>& choices,
                            const std::optional<std::string>& caption, const std::string& mode,
                            int k_max) {
        Sample s;
        s.id = "py";
        s.question = question;
        s.context = context;
        s.choices = choices.size() >= 2 ? choices : std::vector<std::string>{"a", "b"};
        if (caption) s.caption = *caption;
        s.rationale = "-";
        Subgraph sg = extract(s, kb_, enc_, vocab_, caption_mode_from_string(mode), k_max,
                              max_input_len_);
        py::dict out;
        out["nodes"] = sg.node_ids;
        std::vector<std::string> origins;
        for (auto o : sg.node_origin) origins.push_back(to_string(o));
        out["origins"] = origins;
        std::vector<std::tuple<int, int, int>> edges;
        for (const auto& e : sg.edges) edges.emplace_back(e.src, e.dst, e.type);
        out["edges"] = edges;
        out["scores"] = sg.score;
        out["node_init"] = array_from_tensor(sg.node_init);
        return out;
    }

private:
    const KnowledgeBase& kb_;
    Vocabulary vocab_;
    TextEncoderParams enc_;
    int d_;
    int max_input_len_;
};

// Two graph layers over explicit (features, edges) graphs; exposes the
// block-diagonal batching path for inspection from python.
class GraphEncoder {
public:
    GraphEncoder(int d, int d_edge, std::uint64_t seed)
        : table_(init_edge_table(d_edge, seed, "graph")),
          params_(init_graph_encoder(d, d_edge, seed, "graph")),
          d_(d) {}

    std::vector<py::array_t<double>> encode(
        const std::vector<std::pair<NpArray, std::vector<std::tuple<int, int, int>>>>& graphs,
        int min_nodes) {
        std::vector<Subgraph> subgraphs;
        for (const auto& [feats, edges] : graphs) {
            Subgraph g;
            g.node_init = tensor_from_array(feats);
            for (int i = 0; i < g.node_init.rows(); ++i) {
                g.node_ids.push_back("n" + std::to_string(i));
                g.node_origin.push_back(NodeOrigin::OneHop);
                g.score.push_back(0.0);
            }
            g.edges = edges_from_tuples(edges);
            subgraphs.push_back(std::move(g));
        }
        NoGradGuard ng;
        auto encoded = encode_graph(collate(subgraphs, min_nodes), table_, params_);
        std::vector<py::array_t<double>> out;
        for (const auto& t : encoded) out.push_back(array_from_tensor(t));
        return out;
    }

private:
    EdgeTypeTable table_;
    GraphEncoderParams params_;
    int d_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "knowledge-grounded multimodal two-stage reasoning core";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<BudgetError>(m, "BudgetError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("tokenize", &tokenize, py::arg("text"));
    m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"));
    m.def(
        "accuracy",
        [](const std::vector<int>& p, const std::vector<int>& r) { return accuracy(p, r); },
        py::arg("predictions"), py::arg("references"));

    m.def(
        "matmul",
        [](const NpArray& a, const NpArray& b) {
            return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "softmax_rows",
        [](const NpArray& x) { return array_from_tensor(softmax_rows(tensor_from_array(x))); },
        py::arg("x"));
    m.def(
        "sigmoid",
        [](const NpArray& x) { return array_from_tensor(sigmoid(tensor_from_array(x))); },
        py::arg("x"));

    m.def(
        "cross_attend",
        [](const NpArray& h_lang, const NpArray& h_other,
           const std::optional<std::vector<bool>>& valid) {
            auto att = valid ? cross_attend(tensor_from_array(h_lang), tensor_from_array(h_other),
                                            &*valid)
                             : cross_attend(tensor_from_array(h_lang), tensor_from_array(h_other));
            return py::make_tuple(array_from_tensor(att.output), array_from_tensor(att.weights),
                                  att.empty);
        },
        py::arg("h_lang"), py::arg("h_other"), py::arg("valid") = py::none(),
        "Returns (output, weights, empty).");

    m.def(
        "fuse",
        [](int variant, const NpArray& h_lang, const NpArray& h_img_attn, const NpArray& h_kg_attn,
           const std::vector<NpArray>& weights) {
            FusionParams p;
            p.variant = fusion_variant_from_int(variant);
            for (const auto& w : weights) p.w.push_back(tensor_from_array(w));
            if (static_cast<int>(p.w.size()) != FusionParams::matrix_count(p.variant)) {
                throw ConfigError("fusion variant " + std::to_string(variant) + " expects " +
                                  std::to_string(FusionParams::matrix_count(p.variant)) +
                                  " weight matrices");
            }
            auto r = fuse(tensor_from_array(h_lang),
                          {tensor_from_array(h_img_attn), tensor_from_array(h_kg_attn)}, p);
            py::dict out;
            out["fused"] = array_from_tensor(r.fused);
            if (r.alpha.defined()) {
                out["alpha"] = array_from_tensor(r.alpha);
                out["beta"] = array_from_tensor(r.beta);
                out["gamma"] = array_from_tensor(r.gamma);
            }
            if (r.lambda_a.defined()) {
                out["lambda_a"] = array_from_tensor(r.lambda_a);
                out["lambda_b"] = array_from_tensor(r.lambda_b);
            }
            return out;
        },
        py::arg("variant"), py::arg("h_lang"), py::arg("h_img_attn"), py::arg("h_kg_attn"),
        py::arg("weights"));

    m.def("fusion_param_count", [](int variant, int d) {
        return static_cast<std::int64_t>(FusionParams::matrix_count(fusion_variant_from_int(variant))) *
               d * d;
    });

    py::class_<KnowledgeBase>(m, "KnowledgeBase")
        .def_static("load", [](const std::string& dump, const std::string& relation_map) {
            return KnowledgeBase::load(dump, relation_map);
        })
        .def_property_readonly("num_nodes", &KnowledgeBase::node_count)
        .def_property_readonly("num_triples",
                               [](const KnowledgeBase& kb) { return kb.triples().size(); })
        .def("node_names",
             [](const KnowledgeBase& kb) {
                 std::vector<std::string> names;
                 for (int i = 0; i < kb.node_count(); ++i) names.push_back(kb.node_name(i));
                 return names;
             })
        .def("ground",
             [](const KnowledgeBase& kb, const std::string& text) {
                 std::vector<std::string> names;
                 for (int id : ground(text, kb)) names.push_back(kb.node_name(id));
                 return names;
             })
        .def("expand", [](const KnowledgeBase& kb, const std::vector<std::string>& names) {
            std::vector<int> ids;
            for (const auto& name : names) {
                const int id = kb.node_id(name);
                if (id < 0) throw ParseError("unknown concept '" + name + "'");
                ids.push_back(id);
            }
            auto tiers = expand(ids, kb);
            std::vector<std::string> one, two;
            for (int id : tiers.one_hop) one.push_back(kb.node_name(id));
            for (int id : tiers.two_hop) two.push_back(kb.node_name(id));
            return py::make_tuple(one, two);
        });

    py::class_<Extractor>(m, "Extractor")
        .def(py::init<const KnowledgeBase&, const std::vector<std::string>&, int, std::uint64_t,
                      int>(),
             py::arg("kb"), py::arg("corpus"), py::arg("d") = 32, py::arg("seed") = 7,
             py::arg("max_input_len") = 256, py::keep_alive<1, 2>())
        .def("extract", &Extractor::extract_sample, py::arg("question"), py::arg("context") = "",
             py::arg("choices") = std::vector<std::string>{}, py::arg("caption") = py::none(),
             py::arg("mode") = "none", py::arg("k_max") = 200);

    py::class_<GraphEncoder>(m, "GraphEncoder")
        .def(py::init<int, int, std::uint64_t>(), py::arg("d"), py::arg("d_edge") = 16,
             py::arg("seed") = 7)
        .def("encode", &GraphEncoder::encode, py::arg("graphs"), py::arg("min_nodes") = 0);

    m.attr("NUM_EDGE_TYPES") = kEdgeTypes;
    m.attr("NUM_RELATION_GROUPS") = kRelationGroups;
}
