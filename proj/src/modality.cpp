#include "kgcot/modality.hpp"

#include <cmath>

#include "kgcot/error.hpp"
#include "kgcot/log.hpp"

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

Tensor zero_bias(int d) { return Tensor::zeros({1, d}, true); }

}  // namespace

TextEncoderParams init_text_encoder(int vocab_size, int d, int layers, int heads,
                                    std::uint64_t seed, const std::string& prefix) {
    TextEncoderParams enc;
    enc.d = d;
    enc.heads = heads;
    enc.tok_embed = init_weight(vocab_size, d, seed, prefix + ".tok_embed");
    for (int l = 0; l < layers; ++l) {
        const std::string base = prefix + ".block" + std::to_string(l);
        EncoderBlockParams block;
        block.attn = {init_weight(d, d, seed, base + ".wq"), init_weight(d, d, seed, base + ".wk"),
                      init_weight(d, d, seed, base + ".wv"), init_weight(d, d, seed, base + ".wo"),
                      zero_bias(d), zero_bias(d), zero_bias(d), zero_bias(d)};
        block.ff = {init_weight(d, 4 * d, seed, base + ".ff1"), zero_bias(4 * d),
                    init_weight(4 * d, d, seed, base + ".ff2"), zero_bias(d)};
        block.ln1 = init_layer_norm(d);
        block.ln2 = init_layer_norm(d);
        enc.blocks.push_back(std::move(block));
    }
    enc.final_ln = init_layer_norm(d);
    return enc;
}

Tensor sinusoidal_positions(int n, int d) {
    std::vector<double> data(static_cast<size_t>(n) * d);
    for (int pos = 0; pos < n; ++pos) {
        for (int i = 0; i < d; ++i) {
            const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / d);
            data[static_cast<size_t>(pos) * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from_data({n, d}, std::move(data));
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads, bool causal) {
    const int d = q_in.cols();
    if (d % heads != 0) {
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
    }
    const int dh = d / heads;
    Tensor q = add_rowvec(matmul(q_in, p.wq), p.bq);
    Tensor k = add_rowvec(matmul(kv_in, p.wk), p.bk);
    Tensor v = add_rowvec(matmul(kv_in, p.wv), p.bv);

    Tensor causal_mask;
    if (causal) {
        const int n = q_in.rows();
        std::vector<double> mask(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) mask[static_cast<size_t>(i) * n + j] = -1e9;
        causal_mask = Tensor::from_data({n, n}, std::move(mask));
    }

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = cols(q, h * dh, (h + 1) * dh);
        Tensor kh = cols(k, h * dh, (h + 1) * dh);
        Tensor vh = cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (causal) scores = add(scores, causal_mask);
        head_outputs.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor merged = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
    return add_rowvec(matmul(merged, p.wo), p.bo);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
    return add_rowvec(matmul(relu(add_rowvec(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

Tensor encode_text(const std::vector<int>& ids, const TextEncoderParams& enc, int max_input_len) {
    if (ids.empty()) throw ShapeError("encode_text: empty token sequence");
    std::vector<int> clipped = ids;
    if (static_cast<int>(clipped.size()) > max_input_len) {
        log::warn("encode_text: input of " + std::to_string(clipped.size()) +
                  " tokens truncated to " + std::to_string(max_input_len));
        clipped.resize(max_input_len);
    }
    Tensor h = gather_rows(enc.tok_embed, clipped);
    h = add(h, sinusoidal_positions(static_cast<int>(clipped.size()), enc.d));
    for (const auto& block : enc.blocks) {
        Tensor normed = layer_norm_rows(h, block.ln1.gain, block.ln1.bias);
        h = add(h, multi_head_attention(normed, normed, block.attn, enc.heads, false));
        h = add(h, feed_forward(layer_norm_rows(h, block.ln2.gain, block.ln2.bias), block.ff));
    }
    return layer_norm_rows(h, enc.final_ln.gain, enc.final_ln.bias);
}

ImageFeatures ImageFeatures::zero(int m, int d_img) {
    return {Tensor::zeros({m, d_img}), "zero"};
}

void ImageFeatures::validate() const {
    const int m = patches.rows(), d = patches.cols();
    if (source_tag == "detr" && (m != 100 || d != 256)) {
        throw ShapeError("image features: detr requires (100, 256), got " + shape_str(patches.shape()));
    }
    if (source_tag == "clip" && (m != 49 || d != 2048)) {
        throw ShapeError("image features: clip requires (49, 2048), got " + shape_str(patches.shape()));
    }
    if (source_tag != "detr" && source_tag != "clip" && source_tag != "zero") {
        throw ShapeError("image features: unknown source_tag '" + source_tag + "'");
    }
    if (source_tag == "zero") {
        for (double v : patches.data()) {
            if (v != 0.0) throw ShapeError("image features: zero tag with nonzero data");
        }
    }
}

Tensor encode_image(const ImageFeatures& img, const Tensor& w_img) {
    if (img.patches.cols() != w_img.rows()) {
        throw ShapeError("encode_image: " + img.source_tag + " features " +
                         shape_str(img.patches.shape()) + " do not match projection " +
                         shape_str(w_img.shape()));
    }
    return matmul(img.patches, w_img);
}

std::string to_string(Stage stage) { return stage == Stage::Rationale ? "rationale" : "answer"; }

Stage stage_from_string(const std::string& s) {
    if (s == "rationale") return Stage::Rationale;
    if (s == "answer") return Stage::Answer;
    throw ConfigError("unknown stage '" + s + "' (expected rationale|answer)");
}

std::string to_string(CaptionMode mode) {
    switch (mode) {
        case CaptionMode::None: return "none";
        case CaptionMode::Context: return "context";
        case CaptionMode::Nodes: return "nodes";
        case CaptionMode::Both: return "both";
    }
    return "none";
}

CaptionMode caption_mode_from_string(const std::string& s) {
    if (s == "none") return CaptionMode::None;
    if (s == "context") return CaptionMode::Context;
    if (s == "nodes") return CaptionMode::Nodes;
    if (s == "both") return CaptionMode::Both;
    throw ConfigError("unknown caption mode '" + s + "' (expected none|context|nodes|both)");
}

bool caption_in_context(CaptionMode mode) {
    return mode == CaptionMode::Context || mode == CaptionMode::Both;
}

bool caption_in_grounding(CaptionMode mode) {
    return mode == CaptionMode::Nodes || mode == CaptionMode::Both;
}

std::string choice_letter(int index) { return std::string(1, static_cast<char>('a' + index)); }

std::vector<std::string> build_language_input(const Sample& sample, Stage stage, CaptionMode mode,
                                              const std::optional<std::string>& rationale_override) {
    std::vector<std::string> tokens = {"question", ":"};
    auto append = [&tokens](const std::vector<std::string>& more) {
        tokens.insert(tokens.end(), more.begin(), more.end());
    };
    append(tokenize(sample.question));
    tokens.push_back("context");
    tokens.push_back(":");
    append(tokenize(sample.context));
    if (caption_in_context(mode) && sample.caption) append(tokenize(*sample.caption));
    tokens.push_back("options");
    tokens.push_back(":");
    for (size_t i = 0; i < sample.choices.size(); ++i) {
        tokens.push_back("(");
        tokens.push_back(choice_letter(static_cast<int>(i)));
        tokens.push_back(")");
        append(tokenize(sample.choices[i]));
    }
    if (stage == Stage::Answer) {
        const std::string& rationale = rationale_override ? *rationale_override : sample.rationale;
        if (!rationale_override && sample.rationale.empty()) {
            throw ConfigError("build_language_input: answer stage requires a rationale for sample '" +
                              sample.id + "'");
        }
        tokens.push_back("rationale");
        tokens.push_back(":");
        append(tokenize(rationale));
    }
    return tokens;
}

void Sample::validate() const {
    if (choices.size() < 2) {
        throw ConfigError("sample '" + id + "': needs at least 2 choices, has " +
                          std::to_string(choices.size()));
    }
    if (answer_index < 0 || answer_index >= static_cast<int>(choices.size())) {
        throw ConfigError("sample '" + id + "': answer_index " + std::to_string(answer_index) +
                          " out of range for " + std::to_string(choices.size()) + " choices");
    }
    if (image) image->validate();
}

}  // namespace kgcot
