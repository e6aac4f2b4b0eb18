#include "kgcot/commands.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "kgcot/dataset.hpp"
#include "kgcot/error.hpp"
#include "kgcot/graph_encoder.hpp"
#include "kgcot/log.hpp"

namespace kgcot {

namespace fs = std::filesystem;

namespace {

struct Workspace {
    KnowledgeBase kb;
    int kb_skipped = 0;
    std::vector<Sample> samples;
    Vocabulary vocab;

    explicit Workspace(const RunConfig& config) {
        kb = KnowledgeBase::load(config.kb, config.relation_map, &kb_skipped);
        samples = load_dataset(config.dataset, config.features_dir);
        vocab = build_vocabulary(split_of(samples, "train"));
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Subgraphs for the given samples, rebuilt from extract-graph output with
// node embeddings from the seed-initialized encoder (the same embeddings
// extraction used).
std::vector<Subgraph> load_subgraphs(const RunConfig& config, const std::vector<Sample>& samples,
                                     const Workspace& ws, const TextEncoderParams& encoder) {
    std::vector<Subgraph> graphs;
    graphs.reserve(samples.size());
    for (const auto& s : samples) {
        const std::string path = config.subgraph_path(s.id);
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("missing subgraph for sample '" + s.id + "' at " + path +
                              "; run `extract-graph` with this config first");
        }
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        Subgraph sg = subgraph_from_json(text, config.d);
        attach_node_embeddings(sg, ws.kb, encoder, ws.vocab, config.max_input_len);
        graphs.push_back(std::move(sg));
    }
    return graphs;
}

nlohmann::json metrics_to_json(const std::vector<EpochMetrics>& history) {
    auto arr = nlohmann::json::array();
    for (const auto& m : history) {
        arr.push_back({{"epoch", m.epoch},
                       {"split", m.split},
                       {"accuracy", m.accuracy},
                       {"rougeL", m.rougeL},
                       {"loss", m.loss}});
    }
    return arr;
}

}  // namespace

int cmd_extract_graph(const RunConfig& config) {
    config.validate();
    Workspace ws(config);
    fs::create_directories(config.subgraph_dir());

    ModelParams init = ModelParams::init(config.model_config(ws.vocab.size()), config.seed);
    const CaptionMode mode = caption_mode_from_string(config.caption_mode);

    std::map<int, int> histogram;
    int grounded_hits = 0;
    int fallbacks_total = 0;
    std::vector<Subgraph> extracted;
    auto errors = nlohmann::json::array();
    for (const auto& sample : ws.samples) {
        try {
            int fallbacks = 0;
            Subgraph sg = extract(sample, ws.kb, init.encoder, ws.vocab, mode, config.k_max,
                                  config.max_input_len, &fallbacks);
            fallbacks_total += fallbacks;
            histogram[sg.node_count()]++;
            if (sg.node_count() > 0) ++grounded_hits;
            write_text(config.subgraph_path(sample.id), subgraph_to_json(sg) + "\n");
            extracted.push_back(std::move(sg));
        } catch (const std::exception& e) {
            errors.push_back({{"id", sample.id}, {"error", e.what()}});
            log::warn("extract-graph: sample '" + sample.id + "': " + e.what());
        }
    }
    if (!extracted.empty()) {
        write_text(config.output_dir + "/graph_batch.json",
                   graph_batch_to_json(collate(extracted, config.min_nodes), extracted) + "\n");
    }

    nlohmann::json hist_json;
    for (const auto& [count, n] : histogram) hist_json[std::to_string(count)] = n;
    nlohmann::json stats = {
        {"config", config.to_json()},
        {"samples", ws.samples.size()},
        {"written", ws.samples.size() - errors.size()},
        {"grounding_hit_rate",
         ws.samples.empty() ? 0.0 : static_cast<double>(grounded_hits) / ws.samples.size()},
        {"node_count_histogram", hist_json},
        {"embedding_fallbacks", fallbacks_total},
        {"kb_skipped_triples", ws.kb_skipped},
        {"errors", errors}};
    write_json(config.output_dir + "/extract_stats.json", stats);
    return errors.empty() ? 0 : 1;
}

int cmd_train(const RunConfig& config, Stage stage) {
    config.validate();
    Workspace ws(config);
    fs::create_directories(config.output_dir);

    std::vector<Sample> train = stratified_fraction(split_of(ws.samples, "train"),
                                                    config.train_fraction);
    std::vector<Sample> dev = split_of(ws.samples, "dev");
    if (train.empty()) throw ConfigError("train: empty training split");

    ModelParams initial = ModelParams::init(config.model_config(ws.vocab.size()), config.seed);
    std::vector<Subgraph> train_graphs = load_subgraphs(config, train, ws, initial.encoder);
    std::vector<Subgraph> dev_graphs = load_subgraphs(config, dev, ws, initial.encoder);

    TrainResult result = train_stage(train, train_graphs, dev, dev_graphs, initial, stage,
                                     ws.vocab, config.pipeline_settings(), config.train_config());

    save_checkpoint(config.checkpoint_path(stage), result.best, config.seed, config.to_json());
    nlohmann::json report = {{"config", config.to_json()},
                             {"stage", to_string(stage)},
                             {"train_samples", train.size()},
                             {"dev_samples", dev.size()},
                             {"best_epoch", result.best_epoch},
                             {"epochs", metrics_to_json(result.history)}};
    write_json(config.output_dir + "/metrics_" + to_string(stage) + ".json", report);
    return 0;
}

int cmd_eval(const RunConfig& config) {
    config.validate();
    Workspace ws(config);
    fs::create_directories(config.output_dir);

    std::vector<Sample> test = split_of(ws.samples, "test");
    if (test.empty()) throw ConfigError("eval: empty test split");

    Checkpoint rat = load_checkpoint(config.checkpoint_path(Stage::Rationale));
    Checkpoint ans = load_checkpoint(config.checkpoint_path(Stage::Answer));

    ModelParams embed_init = ModelParams::init(config.model_config(ws.vocab.size()), config.seed);
    std::vector<Subgraph> graphs = load_subgraphs(config, test, ws, embed_init.encoder);

    const PipelineSettings settings = config.pipeline_settings();
    struct GroupStat {
        int hits = 0;
        int total = 0;
    };
    std::map<std::string, GroupStat> by_subject, by_context, by_grade;
    auto bump = [](std::map<std::string, GroupStat>& groups, const std::string& raw, bool hit) {
        const std::string key = raw.empty() ? "untagged" : raw;
        groups[key].total++;
        groups[key].hits += hit;
    };

    auto predictions = nlohmann::json::array();
    std::vector<int> predicted, reference;
    double rouge_sum = 0.0;
    auto errors = nlohmann::json::array();
    for (size_t i = 0; i < test.size(); ++i) {
        const Sample& s = test[i];
        try {
            TwoStageResult r = two_stage_infer(s, graphs[i], rat.params, ans.params, settings,
                                               ws.vocab);
            const bool hit = r.answer_index == s.answer_index;
            predicted.push_back(r.answer_index);
            reference.push_back(s.answer_index);
            rouge_sum += rouge_l(r.rationale, s.rationale);
            bump(by_subject, s.subject, hit);
            bump(by_context, s.context_type, hit);
            bump(by_grade, s.grade_band, hit);
            predictions.push_back({{"id", s.id},
                                   {"predicted", r.answer_index},
                                   {"reference", s.answer_index},
                                   {"fallback", r.fallback_used},
                                   {"rationale", r.rationale}});
        } catch (const std::exception& e) {
            errors.push_back({{"id", s.id}, {"error", e.what()}});
            log::warn("eval: sample '" + s.id + "': " + e.what());
        }
    }

    auto groups_json = [](const std::map<std::string, GroupStat>& groups) {
        nlohmann::json j;
        for (const auto& [key, stat] : groups) {
            j[key] = {{"accuracy", stat.total ? static_cast<double>(stat.hits) / stat.total : 0.0},
                      {"samples", stat.total}};
        }
        return j;
    };
    nlohmann::json report = {
        {"config", config.to_json()},
        {"samples", predicted.size()},
        {"accuracy", predicted.empty() ? 0.0 : accuracy(predicted, reference)},
        {"rougeL", predicted.empty() ? 0.0 : rouge_sum / predicted.size()},
        {"groups",
         {{"subject", groups_json(by_subject)},
          {"context_type", groups_json(by_context)},
          {"grade_band", groups_json(by_grade)}}},
        {"predictions", predictions},
        {"errors", errors}};
    write_json(config.output_dir + "/eval_report.json", report);
    return errors.empty() ? 0 : 1;
}

int cmd_compare_fusions(const RunConfig& config) {
    config.validate();
    Workspace ws(config);
    fs::create_directories(config.output_dir);

    std::vector<Sample> train = stratified_fraction(split_of(ws.samples, "train"),
                                                    config.train_fraction);
    std::vector<Sample> dev = split_of(ws.samples, "dev");
    if (train.empty() || dev.empty()) throw ConfigError("compare-fusions: needs train and dev splits");

    std::ostringstream csv;
    csv << "variant,param_count,epoch,dev_accuracy\n";
    nlohmann::json variants = nlohmann::json::array();
    for (int variant : {1, 2, 3}) {
        RunConfig vc = config;
        vc.fusion = variant;
        ModelParams initial = ModelParams::init(vc.model_config(ws.vocab.size()), vc.seed);
        std::vector<Subgraph> train_graphs = load_subgraphs(vc, train, ws, initial.encoder);
        std::vector<Subgraph> dev_graphs = load_subgraphs(vc, dev, ws, initial.encoder);
        TrainResult result = train_stage(train, train_graphs, dev, dev_graphs, initial,
                                         Stage::Answer, ws.vocab, vc.pipeline_settings(),
                                         vc.train_config());
        const std::int64_t fusion_params = count_params(initial.fusion);
        for (const auto& m : result.history) {
            if (m.split != "dev") continue;
            csv << variant << "," << fusion_params << "," << m.epoch << "," << m.accuracy << "\n";
        }
        variants.push_back({{"variant", variant},
                            {"param_count", fusion_params},
                            {"best_epoch", result.best_epoch},
                            {"history", metrics_to_json(result.history)}});
    }
    write_text(config.output_dir + "/fusion_compare.csv", csv.str());
    write_json(config.output_dir + "/fusion_compare.json",
               {{"config", config.to_json()}, {"variants", variants}});
    return 0;
}

}  // namespace kgcot
