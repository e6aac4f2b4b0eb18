#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgcot/fusion.hpp"
#include "kgcot/graph_encoder.hpp"
#include "kgcot/modality.hpp"
#include "kgcot/tensor.hpp"

namespace kgcot {

struct DecoderBlockParams {
    AttentionParams self_attn;
    AttentionParams cross_attn;
    FeedForwardParams ff;
    LayerNormParams ln1, ln2, ln3;
};

// Structural hyperparameters; echoed into checkpoints.
struct ModelConfig {
    int d = 64;
    int d_edge = 16;
    int heads = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int vocab_size = 0;
    int image_rows = 100;  // zero-feature placeholder shape for absent images
    int image_dim = 256;
    int max_input_len = 512;
    int max_rationale_len = 512;
    int max_answer_len = 64;
    int fusion = 1;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

// Every learnable weight of one stage model. The rationale and answer stages
// hold two independent instances cloned from one initialization.
struct ModelParams {
    ModelConfig config;
    TextEncoderParams encoder;  // owns the shared token embedding
    Tensor w_img;               // d_img x d
    GraphEncoderParams graph;
    EdgeTypeTable edge_table;
    FusionParams fusion;
    std::vector<DecoderBlockParams> decoder_blocks;
    LayerNormParams dec_final_ln;
    Tensor out_proj;  // d x |V|
    Tensor out_bias;  // 1 x |V|

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    // Stable name -> tensor listing (init order); drives the optimizer,
    // checkpoints and cross-variant comparisons.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;

    ModelParams clone() const;
};

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed,
                     const nlohmann::json& config_echo);

struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    nlohmann::json config_echo;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace kgcot
