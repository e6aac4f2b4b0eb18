#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgcot/tensor.hpp"
#include "kgcot/text.hpp"

namespace kgcot {

// ---- shared transformer building blocks --------------------------------

struct LayerNormParams {
    Tensor gain;  // 1 x d
    Tensor bias;  // 1 x d
};

struct AttentionParams {
    Tensor wq, wk, wv, wo;  // d x d
    Tensor bq, bk, bv, bo;  // 1 x d
};

struct FeedForwardParams {
    Tensor w1, b1;  // d x 4d, 1 x 4d
    Tensor w2, b2;  // 4d x d, 1 x d
};

struct EncoderBlockParams {
    AttentionParams attn;
    FeedForwardParams ff;
    LayerNormParams ln1, ln2;
};

// Toy pre-norm transformer encoder. Token embeddings are shared with the
// decoder via the owning model.
struct TextEncoderParams {
    Tensor tok_embed;  // |V| x d
    std::vector<EncoderBlockParams> blocks;
    LayerNormParams final_ln;
    int d = 0;
    int heads = 0;
};

TextEncoderParams init_text_encoder(int vocab_size, int d, int layers, int heads,
                                    std::uint64_t seed, const std::string& name_prefix);

// Fixed sin/cos table, no gradient.
Tensor sinusoidal_positions(int n, int d);

// Multi-head scaled dot-product attention; queries from q_in, keys/values
// from kv_in. `causal` masks future positions (self-attention in decoders).
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                            const AttentionParams& p, int heads, bool causal);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p);

// ---- modality encodings --------------------------------------------------

struct ImageFeatures {
    Tensor patches;          // m x d_img
    std::string source_tag;  // detr | clip | zero

    static ImageFeatures zero(int m, int d_img);
    void validate() const;  // enforces the tag/shape pairing
};

// Token ids -> H_lang (n x d). Inputs longer than max_input_len are tail
// truncated with a warning, matching the trainer's behaviour.
Tensor encode_text(const std::vector<int>& ids, const TextEncoderParams& enc,
                   int max_input_len);

// H_img = patches . W_img; a pure projection, the upstream vision encoder
// output is consumed as data.
Tensor encode_image(const ImageFeatures& img, const Tensor& w_img);

// ---- language input construction ------------------------------------------

enum class Stage { Rationale, Answer };
enum class CaptionMode { None, Context, Nodes, Both };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);
std::string to_string(CaptionMode mode);
CaptionMode caption_mode_from_string(const std::string& s);
bool caption_in_context(CaptionMode mode);
bool caption_in_grounding(CaptionMode mode);

struct Sample;

// [q; c; choices] for the rationale stage, plus "; r" for the answer stage,
// with literal section markers. `rationale_override` carries the generated
// rationale at inference time; training uses the reference.
std::vector<std::string> build_language_input(
    const Sample& sample, Stage stage, CaptionMode mode,
    const std::optional<std::string>& rationale_override = std::nullopt);

std::string choice_letter(int index);

struct Sample {
    std::string id;
    std::string question;
    std::string context;
    std::vector<std::string> choices;
    std::optional<ImageFeatures> image;
    std::optional<std::string> caption;
    std::string rationale;  // reference
    int answer_index = 0;
    std::string split;  // train | dev | test
    // Group tags used by evaluation reports; empty means untagged.
    std::string topic, subject, context_type, grade_band;
    std::string image_ref;  // features file stem, resolved by the loader

    void validate() const;  // k >= 2, answer_index in range
};

}  // namespace kgcot
