// Acceptance suite: one numbered criterion per check, one pass/fail line
// each. Run with no arguments for the full gate or with criterion numbers
// for a subset (`acceptance 3 7`).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "kgcot/commands.hpp"
#include "kgcot/dataset.hpp"
#include "kgcot/log.hpp"
#include "kgcot/pipeline.hpp"
#include "oracles.hpp"

using namespace kgcot;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = KGCOT_FIXTURE_DIR;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool condition, const std::string& message) {
        if (!condition && ok) {
            ok = false;
            detail = message;
        }
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---- criterion 1: gate normalization ---------------------------------------

void criterion_gates(Check& c) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> n_dist(1, 6), d_dist(2, 16);
    for (int draw = 0; draw < 1000; ++draw) {
        const int n = n_dist(rng), d = d_dist(rng);
        Tensor h_lang = Tensor::uniform({n, d}, -3, 3, rng);
        AttendedModalities att{Tensor::uniform({n, d}, -3, 3, rng),
                               Tensor::uniform({n, d}, -3, 3, rng)};
        auto p1 = init_fusion(FusionVariant::Fusion1, d, 9000 + draw, "fusion");
        auto r1 = fuse1(h_lang, att, p1);
        auto p3 = init_fusion(FusionVariant::Fusion3, d, 9000 + draw, "fusion");
        auto r3 = fuse3(h_lang, att, p3);
        for (std::int64_t i = 0; i < r1.fused.size(); ++i) {
            const double s1 = r1.alpha.data()[i] + r1.beta.data()[i] + r1.gamma.data()[i];
            const double s3 = r3.alpha.data()[i] + r3.beta.data()[i] + r3.gamma.data()[i];
            c.require(std::abs(s1 - 1.0) < 1e-9, "fusion1 gate sum off by " + fmt(s1 - 1.0));
            c.require(std::abs(s3 - 1.0) < 1e-9, "fusion3 gate sum off by " + fmt(s3 - 1.0));
        }
        auto p2 = init_fusion(FusionVariant::Fusion2, d, 9000 + draw, "fusion");
        auto r2 = fuse2(h_lang, att, p2);
        for (const Tensor* lambda : {&r2.lambda_a, &r2.lambda_b}) {
            for (double v : lambda->data()) {
                c.require(v > 0.0 && v < 1.0, "fusion2 lambda outside (0,1): " + fmt(v));
            }
        }
        if (!c.ok) return;
    }
    c.detail = "1000 draws, fusion1/3 gates sum to 1 within 1e-9, fusion2 lambdas in (0,1)";
}

// ---- criterion 2: cross-attention vs dense oracle --------------------------

void criterion_cross_attention(Check& c) {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> nk(1, 16), dd(1, 32);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = nk(rng), k = nk(rng), d = dd(rng);
        Tensor h_lang = Tensor::uniform({n, d}, -2, 2, rng);
        Tensor other = Tensor::uniform({k, d}, -2, 2, rng);
        auto att = cross_attend(h_lang, other);
        auto want = oracle::cross_attention(h_lang.data(), n, other.data(), k, d);
        for (size_t i = 0; i < want.size(); ++i) {
            c.require(std::abs(att.output.data()[i] - want[i]) < 1e-10,
                      "output mismatch " + fmt(att.output.data()[i] - want[i]));
        }
        for (int i = 0; i < n; ++i) {
            double sum = 0;
            for (int j = 0; j < k; ++j) sum += att.weights.at(i, j);
            c.require(std::abs(sum - 1.0) < 1e-9, "attention row sums to " + fmt(sum));
        }
        if (!c.ok) return;
    }
    c.detail = "100 random shapes within 1e-10 of the scalar-loop oracle, rows sum to 1";
}

// ---- criterion 3: batching equivalence --------------------------------------

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
        const int s = node_dist(rng), t = node_dist(rng), rel = rel_dist(rng);
        g.edges.push_back({s, t, rel});
        g.edges.push_back({t, s, rel + kRelationGroups});
    }
    g.node_init = Tensor::uniform({nodes, d}, -1, 1, rng);
    return g;
}

void criterion_batching(Check& c) {
    std::mt19937_64 rng(303);
    const int d = 16, d_edge = 8;
    std::uniform_int_distribution<int> batch_dist(2, 6), node_dist(0, 8), edge_dist(0, 12),
        pad_dist(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
        auto table = init_edge_table(d_edge, 500 + trial, "graph");
        auto params = init_graph_encoder(d, d_edge, 500 + trial, "graph");
        const int b = batch_dist(rng);
        const int min_nodes = pad_dist(rng);
        std::vector<Subgraph> graphs;
        for (int i = 0; i < b; ++i)
            graphs.push_back(random_subgraph(node_dist(rng), edge_dist(rng), d, rng));
        auto batched = encode_graph(collate(graphs, min_nodes), table, params);
        for (int i = 0; i < b; ++i) {
            auto solo = encode_graph(collate({graphs[i]}, min_nodes), table, params)[0];
            c.require(batched[i].shape() == solo.shape(), "per-sample shape mismatch");
            if (!c.ok) return;
            for (std::int64_t j = 0; j < solo.size(); ++j) {
                c.require(std::abs(batched[i].data()[j] - solo.data()[j]) < 1e-9,
                          "batched vs independent forward differ by " +
                              fmt(batched[i].data()[j] - solo.data()[j]));
            }
        }
        if (!c.ok) return;
    }
    c.detail = "50 batches of 2-6 graphs match independent forwards within 1e-9";
}

// ---- criterion 4: end-to-end gradient fidelity -------------------------------

void criterion_gradients(Check& c) {
    auto samples = load_dataset(kFixtures + "/dataset_small.json", kFixtures + "/features");
    samples.resize(2);
    auto kb = KnowledgeBase::load(kFixtures + "/kb_small.tsv", kFixtures + "/relation_groups.txt");
    auto vocab = build_vocabulary(samples);

    for (int variant : {1, 2, 3}) {
        ModelConfig mc;
        mc.d = 16;
        mc.d_edge = 8;
        mc.heads = 2;
        mc.enc_layers = 1;
        mc.dec_layers = 1;
        mc.vocab_size = vocab.size();
        mc.image_rows = 8;
        mc.image_dim = 16;
        mc.max_input_len = 128;
        mc.fusion = variant;
        ModelParams params = ModelParams::init(mc, 404 + variant);
        PipelineSettings settings;
        settings.min_nodes = 2;

        std::vector<Subgraph> graphs;
        for (const auto& s : samples)
            graphs.push_back(extract(s, kb, params.encoder, vocab, CaptionMode::None, 200, 128));

        auto loss_fn = [&] {
            Tensor total = forward(samples[0], graphs[0], params, Stage::Rationale, settings, vocab);
            total = add(total, forward(samples[1], graphs[1], params, Stage::Answer, settings, vocab));
            return scale(total, 0.5);
        };
        std::vector<Tensor> leaves;
        for (auto& [name, t] : params.named_tensors()) leaves.push_back(t);
        const double err = grad_check(loss_fn, leaves, 1e-5, 6, 777 + variant);
        c.require(err < 1e-4, "fusion" + std::to_string(variant) +
                                  " max relative gradient error " + fmt(err));
        if (!c.ok) return;
        c.detail += (c.detail.empty() ? "" : "; ") + std::string("fusion") +
                    std::to_string(variant) + " err " + fmt(err);
    }
    c.detail = "2-sample d=16 end-to-end central differences, all variants (" + c.detail + ")";
}

// ---- criterion 5: extraction oracles ----------------------------------------

void criterion_extraction(Check& c) {
    auto kb = KnowledgeBase::load(kFixtures + "/kb_small.tsv", kFixtures + "/relation_groups.txt");
    auto samples = load_dataset(kFixtures + "/dataset_small.json", kFixtures + "/features");
    c.require(kb.triples().size() == 50, "fixture KB must have 50 triples");
    c.require(samples.size() == 10, "fixture dataset must have 10 samples");
    auto vocab = build_vocabulary(samples);
    auto enc = init_text_encoder(vocab.size(), 16, 2, 4, 505, "enc");

    std::set<std::string> concepts;
    std::map<int, std::set<int>> nbr;
    for (int i = 0; i < kb.node_count(); ++i) concepts.insert(kb.node_name(i));
    for (const auto& t : kb.triples()) {
        nbr[t.head].insert(t.tail);
        nbr[t.tail].insert(t.head);
    }

    for (const auto& s : samples) {
        for (auto mode : {CaptionMode::None, CaptionMode::Nodes}) {
            const std::string text = grounding_text(s, mode);
            // ground vs exhaustive n-gram scan
            auto got = ground(text, kb);
            auto want = oracle::ngram_scan(tokenize(text), concepts);
            c.require(got.size() == want.size(), s.id + ": ground count mismatch");
            for (size_t i = 0; i < got.size() && c.ok; ++i)
                c.require(kb.node_name(got[i]) == want[i], s.id + ": ground order mismatch");
            if (!c.ok) return;

            // expand vs brute-force pairwise set intersection
            auto tiers = expand(got, kb);
            std::set<int> qa(got.begin(), got.end());
            auto one = oracle::common_neighbor_expand(qa, nbr, qa);
            std::set<int> base = qa;
            base.insert(one.begin(), one.end());
            auto two = oracle::common_neighbor_expand(base, nbr, base);
            c.require(std::set<int>(tiers.one_hop.begin(), tiers.one_hop.end()) == one,
                      s.id + ": one-hop tier mismatch");
            c.require(std::set<int>(tiers.two_hop.begin(), tiers.two_hop.end()) == two,
                      s.id + ": two-hop tier mismatch");
            if (!c.ok) return;

            // prune vs full sort-then-take oracle at a budget that bites
            std::vector<Candidate> candidates;
            for (int n : got) candidates.push_back({n, NodeOrigin::QuestionAnswer});
            for (int n : tiers.one_hop) candidates.push_back({n, NodeOrigin::OneHop});
            for (int n : tiers.two_hop) candidates.push_back({n, NodeOrigin::TwoHop});
            if (candidates.empty()) continue;
            std::vector<int> ids;
            for (const auto& cand : candidates) ids.push_back(cand.kb_node);
            Tensor embs = node_initial_embeddings(ids, kb, enc, vocab, 128);
            Tensor ctx = mean_rows(encode_text(vocab.encode(tokenize(text)), enc, 128));
            for (int k_max : {200, static_cast<int>(got.size()) + 1}) {
                auto sg = prune(candidates, kb, embs, ctx, k_max);
                c.require(sg.node_count() <= k_max, s.id + ": budget exceeded");
                auto cosine = [&](int row) {
                    double dot = 0, na = 0, nb = 0;
                    for (int j = 0; j < embs.cols(); ++j) {
                        dot += embs.at(row, j) * ctx.at(0, j);
                        na += embs.at(row, j) * embs.at(row, j);
                        nb += ctx.at(0, j) * ctx.at(0, j);
                    }
                    return (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
                };
                std::vector<int> rest;
                for (size_t i = 0; i < candidates.size(); ++i)
                    if (candidates[i].origin != NodeOrigin::QuestionAnswer)
                        rest.push_back(static_cast<int>(i));
                std::sort(rest.begin(), rest.end(), [&](int a, int b) {
                    const double sa = cosine(a), sb = cosine(b);
                    if (sa != sb) return sa > sb;
                    return kb.node_name(candidates[a].kb_node) < kb.node_name(candidates[b].kb_node);
                });
                std::set<std::string> expect;
                for (int n : got) expect.insert(kb.node_name(n));
                const int budget = k_max - static_cast<int>(got.size());
                for (int i = 0; i < budget && i < static_cast<int>(rest.size()); ++i)
                    expect.insert(kb.node_name(candidates[rest[i]].kb_node));
                std::set<std::string> actual(sg.node_ids.begin(), sg.node_ids.end());
                c.require(actual == expect, s.id + ": prune selection differs from sort oracle");
                if (!c.ok) return;

                // two-hop path property: a pair of earlier-tier candidates
                // adjacent to the node forms the length-2 bridge
                for (int i = 0; i < sg.node_count(); ++i) {
                    if (sg.node_origin[i] != NodeOrigin::TwoHop) continue;
                    const int x = kb.node_id(sg.node_ids[i]);
                    int adjacent_earlier = 0;
                    for (const auto& cand : candidates) {
                        if (cand.origin == NodeOrigin::TwoHop) continue;
                        if (nbr[x].count(cand.kb_node)) ++adjacent_earlier;
                    }
                    c.require(adjacent_earlier >= 2,
                              s.id + ": two-hop node " + sg.node_ids[i] + " lacks a bridge");
                }
            }
        }
    }
    if (c.ok) c.detail = "ground/expand/prune match oracles on 10 samples x 2 caption modes";
}

// ---- criterion 6: fusion parameter ordering -----------------------------------

void criterion_param_ordering(Check& c) {
    for (int d : {4, 8, 16, 64, 256, 768}) {
        auto p1 = init_fusion(FusionVariant::Fusion1, d, 1, "fusion");
        auto p2 = init_fusion(FusionVariant::Fusion2, d, 1, "fusion");
        auto p3 = init_fusion(FusionVariant::Fusion3, d, 1, "fusion");
        const std::int64_t dd = static_cast<std::int64_t>(d) * d;
        c.require(count_params(p1) == 9 * dd, "fusion1 count at d=" + std::to_string(d));
        c.require(count_params(p2) == 4 * dd, "fusion2 count at d=" + std::to_string(d));
        c.require(count_params(p3) == 3 * dd, "fusion3 count at d=" + std::to_string(d));
        c.require(count_params(p1) > count_params(p2) && count_params(p2) > count_params(p3),
                  "ordering violated at d=" + std::to_string(d));
    }
    if (c.ok) c.detail = "9d^2 > 4d^2 > 3d^2 verified at d in {4,8,16,64,256,768}";
}

// ---- criterion 7: trainability ------------------------------------------------

struct ToyCorpus {
    KnowledgeBase kb;
    std::vector<Sample> train;
    Vocabulary vocab;
    ModelConfig config;
    PipelineSettings settings;
    std::vector<Subgraph> graphs;
    ModelParams init;

    ToyCorpus() {
        kb = KnowledgeBase::load(kFixtures + "/kb_small.tsv", kFixtures + "/relation_groups.txt");
        auto all = load_dataset(kFixtures + "/toy_train.json", kFixtures + "/features");
        train = split_of(all, "train");
        vocab = build_vocabulary(train);
        config.d = 64;
        config.d_edge = 16;
        config.heads = 4;
        config.enc_layers = 2;
        config.dec_layers = 2;
        config.vocab_size = vocab.size();
        config.image_rows = 8;
        config.image_dim = 16;
        config.max_input_len = 128;
        config.max_rationale_len = 16;
        config.max_answer_len = 16;
        config.fusion = 1;
        init = ModelParams::init(config, 4242);
        for (const auto& s : train)
            graphs.push_back(extract(s, kb, init.encoder, vocab, CaptionMode::None, 200, 128));
    }
};

void criterion_trainability(Check& c) {
    ToyCorpus toy;
    c.require(toy.train.size() == 20, "toy corpus must have 20 training samples");

    TrainConfig tc;
    tc.lr = 2e-3;
    tc.weight_decay = 0.01;
    tc.epochs = 300;
    tc.seed = 1234;
    tc.stop_at_dev_accuracy = 1.0;

    auto rat = train_stage(toy.train, toy.graphs, toy.train, toy.graphs, toy.init,
                           Stage::Rationale, toy.vocab, toy.settings, tc);
    double rat_best = 0.0;
    int rat_epochs = 0;
    for (const auto& m : rat.history) {
        if (m.split != "dev") continue;
        rat_best = std::max(rat_best, m.accuracy);
        rat_epochs = m.epoch;
    }
    c.require(rat_best == 1.0, "rationale exact-match peaked at " + fmt(rat_best) + " after " +
                                   std::to_string(rat_epochs) + " epochs");
    if (!c.ok) return;

    auto ans = train_stage(toy.train, toy.graphs, toy.train, toy.graphs, toy.init, Stage::Answer,
                           toy.vocab, toy.settings, tc);
    double ans_best = 0.0;
    int ans_epochs = 0;
    for (const auto& m : ans.history) {
        if (m.split != "dev") continue;
        ans_best = std::max(ans_best, m.accuracy);
        ans_epochs = m.epoch;
    }
    c.require(ans_best == 1.0, "answer accuracy peaked at " + fmt(ans_best) + " after " +
                                   std::to_string(ans_epochs) + " epochs");
    if (!c.ok) return;

    // the assembled pipeline: generated rationale feeds the answer stage
    int hits = 0, exact = 0;
    for (size_t i = 0; i < toy.train.size(); ++i) {
        auto r = two_stage_infer(toy.train[i], toy.graphs[i], rat.best, ans.best, toy.settings,
                                 toy.vocab);
        hits += r.answer_index == toy.train[i].answer_index;
        exact += r.rationale == join_tokens(tokenize(toy.train[i].rationale));
    }
    c.require(hits == 20, "two-stage answer accuracy " + std::to_string(hits) + "/20");
    c.require(exact == 20, "two-stage rationale exact match " + std::to_string(exact) + "/20");
    if (!c.ok) return;

    // random-init chance level on balanced k=4 fixtures, 99% binomial interval
    const int n_eval = 120;
    std::vector<Sample> eval_samples;
    std::mt19937_64 rng(555);
    const char* animals[] = {"dog", "cat", "cow", "duck", "frog",
                             "bird", "horse", "sheep", "lion", "bee"};
    std::map<std::string, std::string> sound = {
        {"dog", "woof"},   {"cat", "meow"},  {"cow", "moo"},   {"duck", "quack"},
        {"frog", "croak"}, {"bird", "tweet"}, {"horse", "neigh"}, {"sheep", "baa"},
        {"lion", "roar"},  {"bee", "buzz"}};
    std::vector<std::string> pool;
    for (auto& [a, s] : sound) pool.push_back(s);
    for (int i = 0; i < n_eval; ++i) {
        const std::string animal = animals[i % 10];
        Sample s;
        s.id = "chance" + std::to_string(i);
        s.question = "what sound does a " + animal + " make ?";
        s.context = "the " + animal + " is a small animal .";
        std::vector<std::string> others;
        for (const auto& cand : pool)
            if (cand != sound[animal]) others.push_back(cand);
        std::shuffle(others.begin(), others.end(), rng);
        s.choices = {others[0], others[1], others[2]};
        s.answer_index = i % 4;
        s.choices.insert(s.choices.begin() + s.answer_index, sound[animal]);
        s.rationale = "a " + animal + " says " + sound[animal] + " .";
        s.split = "test";
        eval_samples.push_back(std::move(s));
    }
    ModelParams random_params = ModelParams::init(toy.config, 999);
    int chance_hits = 0;
    for (auto& s : eval_samples) {
        Subgraph sg = extract(s, toy.kb, random_params.encoder, toy.vocab, CaptionMode::None, 200,
                              128);
        auto r = two_stage_infer(s, sg, random_params, random_params, toy.settings, toy.vocab);
        chance_hits += r.answer_index == s.answer_index;
    }
    const double chance = static_cast<double>(chance_hits) / n_eval;
    const double half_width = 2.5758 * std::sqrt(0.25 * 0.75 / n_eval);
    c.require(std::abs(chance - 0.25) <= half_width,
              "random-init accuracy " + fmt(chance) + " outside 0.25 +/- " + fmt(half_width));
    if (c.ok) {
        c.detail = "overfit in " + std::to_string(rat_epochs) + "/" + std::to_string(ans_epochs) +
                   " epochs (rationale/answer); random-init accuracy " + fmt(chance) +
                   " within 0.25 +/- " + fmt(half_width);
    }
}

// ---- criterion 8: ROUGE-L oracle ----------------------------------------------

void criterion_rouge(Check& c) {
    c.require(rouge_l("the cat sat", "the cat") == 0.8, "hand case must equal 0.8 exactly");
    std::mt19937_64 rng(808);
    std::vector<std::string> words = {"red", "blue", "green", "sun", "rain", "cloud"};
    std::uniform_int_distribution<int> len(0, 20), pick(0, 5);
    for (int trial = 0; trial < 200 && c.ok; ++trial) {
        std::vector<std::string> cand, ref;
        for (int i = len(rng); i > 0; --i) cand.push_back(words[pick(rng)]);
        for (int i = len(rng); i > 0; --i) ref.push_back(words[pick(rng)]);
        std::string cand_s, ref_s;
        for (const auto& w : cand) cand_s += w + " ";
        for (const auto& w : ref) ref_s += w + " ";
        const double got = rouge_l(cand_s, ref_s);
        const double want = oracle::rouge_l_f1(cand, ref);
        c.require(got == want, "pair " + std::to_string(trial) + ": " + fmt(got) + " vs " + fmt(want));
    }
    if (c.ok) c.detail = "200 random pairs equal the DP oracle exactly; hand case 0.8";
}

// ---- criterion 9: determinism of command artifacts ------------------------------

void criterion_determinism(Check& c) {
    RunConfig config;
    config.dataset = kFixtures + "/dataset_small.json";
    config.kb = kFixtures + "/kb_small.tsv";
    config.relation_map = kFixtures + "/relation_groups.txt";
    config.features_dir = kFixtures + "/features";
    config.output_dir = (fs::temp_directory_path() / "kgcot_acceptance_det").string();
    config.d = 16;
    config.d_edge = 4;
    config.heads = 2;
    config.enc_layers = 1;
    config.dec_layers = 1;
    config.image_rows = 8;
    config.image_dim = 16;
    config.max_input_len = 128;
    config.max_rationale_len = 32;
    config.max_answer_len = 16;
    config.lr = 2e-3;
    config.epochs = 2;
    config.seed = 77;

    auto run_all = [&] {
        std::map<std::string, std::string> bytes;
        fs::remove_all(config.output_dir);
        if (cmd_extract_graph(config) != 0) return bytes;
        if (cmd_train(config, Stage::Rationale) != 0) return bytes;
        for (const auto& entry : fs::recursive_directory_iterator(config.output_dir)) {
            if (!entry.is_regular_file()) continue;
            std::ifstream in(entry.path(), std::ios::binary);
            bytes[entry.path().string()] = std::string((std::istreambuf_iterator<char>(in)),
                                                       std::istreambuf_iterator<char>());
        }
        return bytes;
    };
    auto first = run_all();
    auto second = run_all();
    c.require(!first.empty(), "first run produced no artifacts");
    c.require(first.size() == second.size(), "artifact sets differ in size");
    for (const auto& [path, data] : first) {
        auto it = second.find(path);
        c.require(it != second.end() && it->second == data, "artifact differs: " + path);
        if (!c.ok) break;
    }
    fs::remove_all(config.output_dir);
    if (c.ok) {
        c.detail = "extract-graph + train rerun byte-identical across " +
                   std::to_string(first.size()) + " artifacts";
    }
}

// ---- criterion 10: caption-mode monotonicity -------------------------------------

void criterion_caption_monotonicity(Check& c) {
    auto kb = KnowledgeBase::load(kFixtures + "/kb_small.tsv", kFixtures + "/relation_groups.txt");
    auto samples = load_dataset(kFixtures + "/dataset_small.json", kFixtures + "/features");
    int captioned = 0;
    for (const auto& s : samples) {
        if (!s.caption) continue;
        // only samples whose captions introduce fresh KB concepts
        auto base = ground(grounding_text(s, CaptionMode::None), kb);
        auto with_caption = ground(grounding_text(s, CaptionMode::Nodes), kb);
        std::set<int> base_set(base.begin(), base.end());
        std::set<int> cap_set(with_caption.begin(), with_caption.end());
        bool fresh = false;
        for (int n : ground(*s.caption, kb)) fresh = fresh || !base_set.count(n);
        if (!fresh) continue;
        ++captioned;
        for (int n : base_set)
            c.require(cap_set.count(n) == 1, s.id + ": caption mode dropped a grounded node");
        c.require(cap_set.size() > base_set.size(), s.id + ": caption added no nodes");
        if (!c.ok) return;
    }
    c.require(captioned >= 5, "expected at least 5 fixture samples with fresh caption concepts");
    if (c.ok) {
        c.detail = std::to_string(captioned) +
                   " captioned samples give strict grounded-node supersets";
    }
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "gate normalization", criterion_gates},
        {2, "cross-attention correctness", criterion_cross_attention},
        {3, "batching equivalence", criterion_batching},
        {4, "gradient fidelity", criterion_gradients},
        {5, "extraction oracle", criterion_extraction},
        {6, "fusion parameter ordering", criterion_param_ordering},
        {7, "trainability", criterion_trainability},
        {8, "rouge-l oracle", criterion_rouge},
        {9, "artifact determinism", criterion_determinism},
        {10, "caption-mode monotonicity", criterion_caption_monotonicity},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    log::set_warn_handler([](const std::string&) {});
    int failures = 0;
    for (const auto& crit : criteria) {
        if (!wanted.empty() && !wanted.count(crit.id)) continue;
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            crit.run(check);
        } catch (const std::exception& e) {
            check.ok = false;
            check.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2d (%s): %s [%.1fs]\n", check.ok ? "PASS" : "FAIL", crit.id,
                    crit.name.c_str(), check.detail.c_str(), seconds);
        std::fflush(stdout);
        failures += !check.ok;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
