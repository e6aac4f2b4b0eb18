#include "kgcot/model.hpp"

#include <cmath>
#include <fstream>

#include "kgcot/error.hpp"

namespace kgcot {

namespace {

Tensor init_weight(int rows, int cols, std::uint64_t seed, const std::string& name) {
    auto rng = named_rng(seed, name);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

LayerNormParams init_layer_norm(int d) {
    return {Tensor::from_data({1, d}, std::vector<double>(d, 1.0), true),
            Tensor::zeros({1, d}, true)};
}

AttentionParams init_attention(int d, std::uint64_t seed, const std::string& base) {
    return {init_weight(d, d, seed, base + ".wq"), init_weight(d, d, seed, base + ".wk"),
            init_weight(d, d, seed, base + ".wv"), init_weight(d, d, seed, base + ".wo"),
            Tensor::zeros({1, d}, true), Tensor::zeros({1, d}, true),
            Tensor::zeros({1, d}, true), Tensor::zeros({1, d}, true)};
}

FeedForwardParams init_ff(int d, std::uint64_t seed, const std::string& base) {
    return {init_weight(d, 4 * d, seed, base + ".ff1"), Tensor::zeros({1, 4 * d}, true),
            init_weight(4 * d, d, seed, base + ".ff2"), Tensor::zeros({1, d}, true)};
}

void add_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& base,
                   const AttentionParams& p) {
    out.emplace_back(base + ".wq", p.wq);
    out.emplace_back(base + ".wk", p.wk);
    out.emplace_back(base + ".wv", p.wv);
    out.emplace_back(base + ".wo", p.wo);
    out.emplace_back(base + ".bq", p.bq);
    out.emplace_back(base + ".bk", p.bk);
    out.emplace_back(base + ".bv", p.bv);
    out.emplace_back(base + ".bo", p.bo);
}

void add_ff(std::vector<std::pair<std::string, Tensor>>& out, const std::string& base,
            const FeedForwardParams& p) {
    out.emplace_back(base + ".ff1", p.w1);
    out.emplace_back(base + ".ff1_bias", p.b1);
    out.emplace_back(base + ".ff2", p.w2);
    out.emplace_back(base + ".ff2_bias", p.b2);
}

void add_ln(std::vector<std::pair<std::string, Tensor>>& out, const std::string& base,
            const LayerNormParams& p) {
    out.emplace_back(base + ".gain", p.gain);
    out.emplace_back(base + ".bias", p.bias);
}

}  // namespace

nlohmann::json ModelConfig::to_json() const {
    return {{"d", d},
            {"d_edge", d_edge},
            {"heads", heads},
            {"enc_layers", enc_layers},
            {"dec_layers", dec_layers},
            {"vocab_size", vocab_size},
            {"image_rows", image_rows},
            {"image_dim", image_dim},
            {"max_input_len", max_input_len},
            {"max_rationale_len", max_rationale_len},
            {"max_answer_len", max_answer_len},
            {"fusion", fusion}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.at("d");
    c.d_edge = j.at("d_edge");
    c.heads = j.at("heads");
    c.enc_layers = j.at("enc_layers");
    c.dec_layers = j.at("dec_layers");
    c.vocab_size = j.at("vocab_size");
    c.image_rows = j.at("image_rows");
    c.image_dim = j.at("image_dim");
    c.max_input_len = j.at("max_input_len");
    c.max_rationale_len = j.at("max_rationale_len");
    c.max_answer_len = j.at("max_answer_len");
    c.fusion = j.at("fusion");
    return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    if (config.vocab_size <= 4) throw ConfigError("model init: vocab_size must exceed reserved ids");
    if (config.d % config.heads != 0) {
        throw ConfigError("model init: d=" + std::to_string(config.d) + " not divisible by heads=" +
                          std::to_string(config.heads));
    }
    ModelParams mp;
    mp.config = config;
    mp.encoder = init_text_encoder(config.vocab_size, config.d, config.enc_layers, config.heads,
                                   seed, "enc");
    mp.w_img = init_weight(config.image_dim, config.d, seed, "w_img");
    mp.graph = init_graph_encoder(config.d, config.d_edge, seed, "graph");
    mp.edge_table = init_edge_table(config.d_edge, seed, "graph");
    mp.fusion = init_fusion(fusion_variant_from_int(config.fusion), config.d, seed, "fusion");
    for (int l = 0; l < config.dec_layers; ++l) {
        const std::string base = "dec.block" + std::to_string(l);
        DecoderBlockParams block;
        block.self_attn = init_attention(config.d, seed, base + ".self");
        block.cross_attn = init_attention(config.d, seed, base + ".cross");
        block.ff = init_ff(config.d, seed, base);
        block.ln1 = init_layer_norm(config.d);
        block.ln2 = init_layer_norm(config.d);
        block.ln3 = init_layer_norm(config.d);
        mp.decoder_blocks.push_back(std::move(block));
    }
    mp.dec_final_ln = init_layer_norm(config.d);
    mp.out_proj = init_weight(config.d, config.vocab_size, seed, "out_proj");
    mp.out_bias = Tensor::zeros({1, config.vocab_size}, true);
    return mp;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("enc.tok_embed", encoder.tok_embed);
    for (size_t l = 0; l < encoder.blocks.size(); ++l) {
        const std::string base = "enc.block" + std::to_string(l);
        const auto& b = encoder.blocks[l];
        add_attention(out, base, b.attn);
        add_ff(out, base, b.ff);
        add_ln(out, base + ".ln1", b.ln1);
        add_ln(out, base + ".ln2", b.ln2);
    }
    add_ln(out, "enc.final_ln", encoder.final_ln);
    out.emplace_back("w_img", w_img);
    out.emplace_back("graph.rgat.w", graph.rgat.w);
    out.emplace_back("graph.rgat.w_edge", graph.rgat.w_edge);
    out.emplace_back("graph.rgat.a_src", graph.rgat.a_src);
    out.emplace_back("graph.rgat.a_dst", graph.rgat.a_dst);
    out.emplace_back("graph.rgat.a_edge", graph.rgat.a_edge);
    out.emplace_back("graph.rgat.w_self", graph.rgat.w_self);
    out.emplace_back("graph.rgat.bias", graph.rgat.bias);
    out.emplace_back("graph.gcn.w", graph.gcn.w);
    out.emplace_back("graph.gcn.bias", graph.gcn.bias);
    out.emplace_back("graph.edge_table", edge_table.weights);
    for (size_t i = 0; i < fusion.w.size(); ++i) {
        out.emplace_back("fusion.w" + std::to_string(i + 1), fusion.w[i]);
    }
    for (size_t l = 0; l < decoder_blocks.size(); ++l) {
        const std::string base = "dec.block" + std::to_string(l);
        const auto& b = decoder_blocks[l];
        add_attention(out, base + ".self", b.self_attn);
        add_attention(out, base + ".cross", b.cross_attn);
        add_ff(out, base, b.ff);
        add_ln(out, base + ".ln1", b.ln1);
        add_ln(out, base + ".ln2", b.ln2);
        add_ln(out, base + ".ln3", b.ln3);
    }
    add_ln(out, "dec.final_ln", dec_final_ln);
    out.emplace_back("out_proj", out_proj);
    out.emplace_back("out_bias", out_bias);
    return out;
}

ModelParams ModelParams::clone() const {
    ModelParams copy = *this;
    auto deep = [](Tensor& t) { t = t.clone(); };
    deep(copy.encoder.tok_embed);
    for (auto& b : copy.encoder.blocks) {
        for (Tensor* t : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo, &b.attn.bq, &b.attn.bk,
                          &b.attn.bv, &b.attn.bo, &b.ff.w1, &b.ff.b1, &b.ff.w2, &b.ff.b2,
                          &b.ln1.gain, &b.ln1.bias, &b.ln2.gain, &b.ln2.bias})
            deep(*t);
    }
    deep(copy.encoder.final_ln.gain);
    deep(copy.encoder.final_ln.bias);
    deep(copy.w_img);
    for (Tensor* t : {&copy.graph.rgat.w, &copy.graph.rgat.w_edge, &copy.graph.rgat.a_src,
                      &copy.graph.rgat.a_dst, &copy.graph.rgat.a_edge, &copy.graph.rgat.w_self,
                      &copy.graph.rgat.bias, &copy.graph.gcn.w, &copy.graph.gcn.bias,
                      &copy.edge_table.weights})
        deep(*t);
    for (auto& w : copy.fusion.w) deep(w);
    for (auto& b : copy.decoder_blocks) {
        for (Tensor* t :
             {&b.self_attn.wq, &b.self_attn.wk, &b.self_attn.wv, &b.self_attn.wo, &b.self_attn.bq,
              &b.self_attn.bk, &b.self_attn.bv, &b.self_attn.bo, &b.cross_attn.wq, &b.cross_attn.wk,
              &b.cross_attn.wv, &b.cross_attn.wo, &b.cross_attn.bq, &b.cross_attn.bk,
              &b.cross_attn.bv, &b.cross_attn.bo, &b.ff.w1, &b.ff.b1, &b.ff.w2, &b.ff.b2,
              &b.ln1.gain, &b.ln1.bias, &b.ln2.gain, &b.ln2.bias, &b.ln3.gain, &b.ln3.bias})
            deep(*t);
    }
    deep(copy.dec_final_ln.gain);
    deep(copy.dec_final_ln.bias);
    deep(copy.out_proj);
    deep(copy.out_bias);
    return copy;
}

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed,
                     const nlohmann::json& config_echo) {
    nlohmann::json j;
    j["format"] = "kgcot-checkpoint-v1";
    j["seed"] = seed;
    j["model"] = params.config.to_json();
    j["config"] = config_echo;
    nlohmann::json tensors;
    for (const auto& [name, t] : params.named_tensors()) {
        tensors[name] = {{"shape", t.shape()}, {"data", t.data()}};
    }
    j["tensors"] = tensors;
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot write " + path);
    out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "kgcot-checkpoint-v1") {
        throw ParseError("checkpoint: unrecognized format in " + path);
    }
    Checkpoint ckpt;
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.config_echo = j.value("config", nlohmann::json::object());
    ckpt.params = ModelParams::init(ModelConfig::from_json(j.at("model")), ckpt.seed);
    const auto& tensors = j.at("tensors");
    for (auto& [name, t] : ckpt.params.named_tensors()) {
        if (!tensors.contains(name)) throw ParseError("checkpoint: missing tensor '" + name + "'");
        const auto& entry = tensors.at(name);
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != t.shape()) {
            throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                             ", expected " + shape_str(t.shape()));
        }
        auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != t.data().size()) {
            throw ShapeError("checkpoint: tensor '" + name + "' data length mismatch");
        }
        Tensor handle = t;
        handle.data_mut() = std::move(data);
    }
    return ckpt;
}

}  // namespace kgcot
