#include "kgcot/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>

#include "kgcot/error.hpp"
#include "kgcot/graph_encoder.hpp"

namespace kgcot {

EncodedModalities encode_modalities(const Sample& sample, const Subgraph& subgraph,
                                    const ModelParams& params, Stage stage,
                                    const PipelineSettings& settings, const Vocabulary& vocab,
                                    const std::optional<std::string>& rationale_override) {
    EncodedModalities enc;
    const auto input_tokens =
        build_language_input(sample, stage, settings.caption_mode, rationale_override);
    enc.h_lang = encode_text(vocab.encode(input_tokens), params.encoder, params.config.max_input_len);

    const ImageFeatures img = sample.image
                                  ? *sample.image
                                  : ImageFeatures::zero(params.config.image_rows, params.config.image_dim);
    enc.h_img = encode_image(img, params.w_img);

    GraphBatch batch = collate({subgraph}, settings.min_nodes);
    enc.kg_mask = batch.pad_mask;
    enc.h_kg = encode_graph(batch, params.edge_table, params.graph)[0];
    return enc;
}

Tensor fuse_modalities(const EncodedModalities& enc, const ModelParams& params) {
    CrossAttention att_img = cross_attend(enc.h_lang, enc.h_img);
    CrossAttention att_kg = cross_attend(enc.h_lang, enc.h_kg, &enc.kg_mask);
    return fuse(enc.h_lang, {att_img.output, att_kg.output}, params.fusion).fused;
}

Tensor decode_logits(const std::vector<int>& decoder_input, const Tensor& memory,
                     const ModelParams& params) {
    if (decoder_input.empty()) throw ShapeError("decode_logits: empty decoder input");
    const auto& cfg = params.config;
    Tensor h = gather_rows(params.encoder.tok_embed, decoder_input);
    h = add(h, sinusoidal_positions(static_cast<int>(decoder_input.size()), cfg.d));
    for (const auto& block : params.decoder_blocks) {
        Tensor n1 = layer_norm_rows(h, block.ln1.gain, block.ln1.bias);
        h = add(h, multi_head_attention(n1, n1, block.self_attn, cfg.heads, true));
        Tensor n2 = layer_norm_rows(h, block.ln2.gain, block.ln2.bias);
        h = add(h, multi_head_attention(n2, memory, block.cross_attn, cfg.heads, false));
        Tensor n3 = layer_norm_rows(h, block.ln3.gain, block.ln3.bias);
        h = add(h, feed_forward(n3, block.ff));
    }
    h = layer_norm_rows(h, params.dec_final_ln.gain, params.dec_final_ln.bias);
    return add_rowvec(matmul(h, params.out_proj), params.out_bias);
}

std::string answer_text(int answer_index) {
    return "the answer is (" + choice_letter(answer_index) + ")";
}

std::vector<int> stage_target_ids(const Sample& sample, Stage stage, const Vocabulary& vocab,
                                  const ModelConfig& config) {
    const std::string reference =
        stage == Stage::Rationale ? sample.rationale : answer_text(sample.answer_index);
    std::vector<int> ids = vocab.encode(tokenize(reference));
    const int cap = stage == Stage::Rationale ? config.max_rationale_len : config.max_answer_len;
    if (static_cast<int>(ids.size()) >= cap) ids.resize(cap - 1);
    ids.push_back(Vocabulary::kEnd);
    return ids;
}

namespace {

Tensor loss_from_memory(const Tensor& memory, const std::vector<int>& target_ids,
                        const ModelParams& params) {
    if (target_ids.empty()) throw ShapeError("sequence_loss: empty target");
    std::vector<int> decoder_input = {Vocabulary::kBegin};
    decoder_input.insert(decoder_input.end(), target_ids.begin(), target_ids.end() - 1);
    Tensor logits = decode_logits(decoder_input, memory, params);
    return nll_mean(log_softmax_rows(logits), target_ids);
}

}  // namespace

Tensor sequence_loss(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                     Stage stage, const std::vector<int>& target_ids,
                     const PipelineSettings& settings, const Vocabulary& vocab,
                     const std::optional<std::string>& rationale_override) {
    EncodedModalities enc =
        encode_modalities(sample, subgraph, params, stage, settings, vocab, rationale_override);
    return loss_from_memory(fuse_modalities(enc, params), target_ids, params);
}

Tensor forward(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
               Stage stage, const PipelineSettings& settings, const Vocabulary& vocab) {
    return sequence_loss(sample, subgraph, params, stage,
                         stage_target_ids(sample, stage, vocab, params.config), settings, vocab);
}

double sequence_log_prob(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                         Stage stage, const std::vector<int>& ids,
                         const PipelineSettings& settings, const Vocabulary& vocab,
                         const std::optional<std::string>& rationale_override) {
    NoGradGuard ng;
    Tensor mean_nll = sequence_loss(sample, subgraph, params, stage, ids, settings, vocab,
                                    rationale_override);
    return -mean_nll.item() * static_cast<double>(ids.size());
}

DecodeOutput generate(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                      Stage stage, const PipelineSettings& settings, const Vocabulary& vocab,
                      const std::optional<std::string>& rationale_override,
                      std::optional<int> max_len_override) {
    NoGradGuard ng;
    const auto& cfg = params.config;
    const int max_len = max_len_override.value_or(
        stage == Stage::Rationale ? cfg.max_rationale_len : cfg.max_answer_len);

    EncodedModalities enc =
        encode_modalities(sample, subgraph, params, stage, settings, vocab, rationale_override);
    Tensor memory = fuse_modalities(enc, params);

    DecodeOutput out;
    std::vector<int> decoder_input = {Vocabulary::kBegin};
    for (int step = 0; step < max_len; ++step) {
        Tensor logits = decode_logits(decoder_input, memory, params);
        Tensor log_probs = log_softmax_rows(rows(logits, logits.rows() - 1, logits.rows()));
        int best = 0;
        double best_lp = log_probs.data()[0];
        for (int v = 1; v < log_probs.cols(); ++v) {
            if (log_probs.data()[v] > best_lp) {
                best_lp = log_probs.data()[v];
                best = v;
            }
        }
        out.ids.push_back(best);
        out.step_log_probs.push_back(best_lp);
        decoder_input.push_back(best);
        if (best == Vocabulary::kEnd) break;
    }
    out.text = vocab.decode(out.ids);
    return out;
}

AnswerParse parse_answer_text(const std::string& text, const std::vector<std::string>& choices) {
    static const std::regex pattern(R"(the\s+answer\s+is\s*\(\s*([a-zA-Z])\s*\))",
                                    std::regex::icase);
    std::smatch match;
    if (std::regex_search(text, match, pattern)) {
        const char letter =
            static_cast<char>(std::tolower(static_cast<unsigned char>(match[1].str()[0])));
        const int index = letter - 'a';
        if (index >= 0 && index < static_cast<int>(choices.size())) return {index, false};
    }
    // Fallback: choice sharing the most tokens with the generated text.
    std::set<std::string> text_tokens;
    for (const auto& t : tokenize(text)) text_tokens.insert(t);
    int best = 0;
    int best_overlap = -1;
    for (size_t i = 0; i < choices.size(); ++i) {
        std::set<std::string> choice_tokens;
        for (const auto& t : tokenize(choices[i])) choice_tokens.insert(t);
        int overlap = 0;
        for (const auto& t : choice_tokens) overlap += text_tokens.count(t);
        if (overlap > best_overlap) {
            best_overlap = overlap;
            best = static_cast<int>(i);
        }
    }
    return {best, true};
}

TwoStageResult two_stage_infer(const Sample& sample, const Subgraph& subgraph,
                               const ModelParams& params_rat, const ModelParams& params_ans,
                               const PipelineSettings& settings, const Vocabulary& vocab) {
    TwoStageResult result;
    result.rationale = generate(sample, subgraph, params_rat, Stage::Rationale, settings, vocab).text;
    DecodeOutput answer = generate(sample, subgraph, params_ans, Stage::Answer, settings, vocab,
                                   result.rationale);
    result.answer_text = answer.text;
    AnswerParse parse = parse_answer_text(answer.text, sample.choices);
    result.answer_index = parse.index;
    result.fallback_used = parse.fallback;
    return result;
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, double lr, double weight_decay)
    : lr_(lr), weight_decay_(weight_decay) {
    slots_.reserve(params.size());
    for (auto& [name, tensor] : params) {
        slots_.push_back({tensor, std::vector<double>(tensor.size(), 0.0),
                          std::vector<double>(tensor.size(), 0.0)});
    }
}

void AdamW::step() {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (auto& slot : slots_) {
        auto& data = slot.tensor.data_mut();
        const auto& grad = slot.tensor.grad();
        for (size_t i = 0; i < data.size(); ++i) {
            slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * grad[i];
            slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            data[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps) + weight_decay_ * data[i]);
        }
    }
}

EpochMetrics evaluate_stage(const std::vector<Sample>& samples,
                            const std::vector<Subgraph>& graphs, const ModelParams& params,
                            Stage stage, const Vocabulary& vocab,
                            const PipelineSettings& settings, int epoch, const std::string& split) {
    NoGradGuard ng;
    EpochMetrics m;
    m.epoch = epoch;
    m.split = split;
    if (samples.empty()) return m;
    double loss_sum = 0.0, rouge_sum = 0.0;
    int hits = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        const Subgraph& g = graphs[i];
        loss_sum += forward(s, g, params, stage, settings, vocab).item();
        DecodeOutput gen = generate(s, g, params, stage, settings, vocab);
        if (stage == Stage::Rationale) {
            const std::string reference = join_tokens(tokenize(s.rationale));
            rouge_sum += rouge_l(gen.text, reference);
            hits += gen.text == reference;
        } else {
            rouge_sum += rouge_l(gen.text, answer_text(s.answer_index));
            hits += parse_answer_text(gen.text, s.choices).index == s.answer_index;
        }
    }
    m.loss = loss_sum / samples.size();
    m.rougeL = rouge_sum / samples.size();
    m.accuracy = static_cast<double>(hits) / samples.size();
    return m;
}

TrainResult train_stage(const std::vector<Sample>& train, const std::vector<Subgraph>& train_graphs,
                        const std::vector<Sample>& dev, const std::vector<Subgraph>& dev_graphs,
                        const ModelParams& initial, Stage stage, const Vocabulary& vocab,
                        const PipelineSettings& settings, const TrainConfig& config) {
    if (train.empty()) throw ConfigError("train_stage: empty training set");
    if (train.size() != train_graphs.size() || dev.size() != dev_graphs.size()) {
        throw ConfigError("train_stage: samples and subgraphs misaligned");
    }
    ModelParams params = initial.clone();
    AdamW optimizer(params.named_tensors(), config.lr, config.weight_decay);
    std::mt19937_64 order_rng(config.seed ^ fnv1a("data_order." + to_string(stage)));

    TrainResult result;
    result.best = params.clone();
    result.best_epoch = 0;
    double best_metric = -1.0;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double train_loss = 0.0;
        for (size_t idx : order) {
            Tensor loss = forward(train[idx], train_graphs[idx], params, stage, settings, vocab);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw NumericError("train_stage: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", sample '" + train[idx].id + "'");
            }
            train_loss += value;
            loss.backward();
            optimizer.step();
        }
        EpochMetrics train_m;
        train_m.epoch = epoch;
        train_m.split = "train";
        train_m.loss = train_loss / train.size();
        result.history.push_back(train_m);

        EpochMetrics dev_m =
            evaluate_stage(dev, dev_graphs, params, stage, vocab, settings, epoch, "dev");
        result.history.push_back(dev_m);
        if (dev_m.accuracy > best_metric) {
            best_metric = dev_m.accuracy;
            result.best = params.clone();
            result.best_epoch = epoch;
        }
        if (config.stop_at_dev_accuracy && dev_m.accuracy >= *config.stop_at_dev_accuracy) break;
    }
    if (config.epochs == 0) result.best = params.clone();
    return result;
}

}  // namespace kgcot
