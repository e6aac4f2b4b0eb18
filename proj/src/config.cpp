#include "kgcot/config.hpp"

#include <fstream>

#include "kgcot/error.hpp"

namespace kgcot {

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dataset", c.dataset);
    get("kb", c.kb);
    get("relation_map", c.relation_map);
    get("features_dir", c.features_dir);
    get("output_dir", c.output_dir);
    get("d", c.d);
    get("d_edge", c.d_edge);
    get("heads", c.heads);
    get("enc_layers", c.enc_layers);
    get("dec_layers", c.dec_layers);
    get("image_rows", c.image_rows);
    get("image_dim", c.image_dim);
    get("k_max", c.k_max);
    get("min_nodes", c.min_nodes);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("epochs", c.epochs);
    get("seed", c.seed);
    get("max_input_len", c.max_input_len);
    get("max_rationale_len", c.max_rationale_len);
    get("max_answer_len", c.max_answer_len);
    get("fusion", c.fusion);
    get("caption_mode", c.caption_mode);
    get("train_fraction", c.train_fraction);
    c.validate();
    return c;
}

nlohmann::json RunConfig::to_json() const {
    return {{"dataset", dataset},
            {"kb", kb},
            {"relation_map", relation_map},
            {"features_dir", features_dir},
            {"output_dir", output_dir},
            {"d", d},
            {"d_edge", d_edge},
            {"heads", heads},
            {"enc_layers", enc_layers},
            {"dec_layers", dec_layers},
            {"image_rows", image_rows},
            {"image_dim", image_dim},
            {"k_max", k_max},
            {"min_nodes", min_nodes},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"epochs", epochs},
            {"seed", seed},
            {"max_input_len", max_input_len},
            {"max_rationale_len", max_rationale_len},
            {"max_answer_len", max_answer_len},
            {"fusion", fusion},
            {"caption_mode", caption_mode},
            {"train_fraction", train_fraction}};
}

void RunConfig::validate() const {
    auto positive = [](int value, const char* name) {
        if (value <= 0) {
            throw ConfigError(std::string("config: ") + name + " must be positive, got " +
                              std::to_string(value));
        }
    };
    positive(d, "d");
    positive(d_edge, "d_edge");
    positive(heads, "heads");
    positive(enc_layers, "enc_layers");
    positive(dec_layers, "dec_layers");
    positive(image_rows, "image_rows");
    positive(image_dim, "image_dim");
    positive(k_max, "k_max");
    positive(max_input_len, "max_input_len");
    positive(max_rationale_len, "max_rationale_len");
    positive(max_answer_len, "max_answer_len");
    if (d % heads != 0) throw ConfigError("config: d must be divisible by heads");
    if (min_nodes < 0) throw ConfigError("config: min_nodes must be >= 0");
    if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (lr < 0.0) throw ConfigError("config: lr must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
    if (train_fraction <= 0.0 || train_fraction > 1.0) {
        throw ConfigError("config: train_fraction must be in (0, 1]");
    }
    fusion_variant_from_int(fusion);
    caption_mode_from_string(caption_mode);
}

ModelConfig RunConfig::model_config(int vocab_size) const {
    ModelConfig m;
    m.d = d;
    m.d_edge = d_edge;
    m.heads = heads;
    m.enc_layers = enc_layers;
    m.dec_layers = dec_layers;
    m.vocab_size = vocab_size;
    m.image_rows = image_rows;
    m.image_dim = image_dim;
    m.max_input_len = max_input_len;
    m.max_rationale_len = max_rationale_len;
    m.max_answer_len = max_answer_len;
    m.fusion = fusion;
    return m;
}

PipelineSettings RunConfig::pipeline_settings() const {
    return {caption_mode_from_string(caption_mode), min_nodes};
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.weight_decay = weight_decay;
    t.epochs = epochs;
    t.seed = seed;
    return t;
}

}  // namespace kgcot
