#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "kgcot/model.hpp"
#include "kgcot/pipeline.hpp"

namespace kgcot {

// One human-readable JSON file drives every command; CLI flags override
// single fields. The full config is echoed into every output artifact.
struct RunConfig {
    // paths
    std::string dataset;
    std::string kb;
    std::string relation_map;
    std::string features_dir;
    std::string output_dir = "out";

    // model dimensions
    int d = 64;
    int d_edge = 16;
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int image_rows = 100;
    int image_dim = 256;

    // extraction and batching
    int k_max = 200;
    int min_nodes = 0;

    // trainer
    double lr = 5e-5;
    double weight_decay = 0.01;
    int epochs = 20;
    std::uint64_t seed = 7;
    int max_input_len = 512;
    int max_rationale_len = 512;
    int max_answer_len = 64;

    int fusion = 1;
    std::string caption_mode = "none";
    double train_fraction = 1.0;

    static RunConfig load(const std::string& path);
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    ModelConfig model_config(int vocab_size) const;
    PipelineSettings pipeline_settings() const;
    TrainConfig train_config() const;

    std::string subgraph_dir() const { return output_dir + "/subgraphs"; }
    std::string subgraph_path(const std::string& sample_id) const {
        return subgraph_dir() + "/" + sample_id + ".json";
    }
    std::string checkpoint_path(Stage stage) const {
        return output_dir + "/checkpoint_" + to_string(stage) + ".json";
    }
};

}  // namespace kgcot
