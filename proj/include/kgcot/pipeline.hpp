#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgcot/kb.hpp"
#include "kgcot/metrics.hpp"
#include "kgcot/modality.hpp"
#include "kgcot/model.hpp"

namespace kgcot {

struct PipelineSettings {
    CaptionMode caption_mode = CaptionMode::None;
    int min_nodes = 0;  // graph padding floor at collation
};

// The (H_lang, H_img, H_kg) triple with the graph validity mask.
struct EncodedModalities {
    Tensor h_lang;
    Tensor h_img;
    Tensor h_kg;
    std::vector<bool> kg_mask;
};

EncodedModalities encode_modalities(const Sample& sample, const Subgraph& subgraph,
                                    const ModelParams& params, Stage stage,
                                    const PipelineSettings& settings, const Vocabulary& vocab,
                                    const std::optional<std::string>& rationale_override = {});

// Cross-attend, fuse with the configured variant, and expose H_fuse.
Tensor fuse_modalities(const EncodedModalities& enc, const ModelParams& params);

// Teacher-forced decoder logits for the given target prefix ids over H_fuse.
Tensor decode_logits(const std::vector<int>& decoder_input, const Tensor& memory,
                     const ModelParams& params);

// Reference target ids for a stage: tokenized text plus the end marker.
std::vector<int> stage_target_ids(const Sample& sample, Stage stage, const Vocabulary& vocab,
                                  const ModelConfig& config);
std::string answer_text(int answer_index);

// Mean token negative log-likelihood of `target_ids` under teacher forcing.
Tensor sequence_loss(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                     Stage stage, const std::vector<int>& target_ids,
                     const PipelineSettings& settings, const Vocabulary& vocab,
                     const std::optional<std::string>& rationale_override = {});

// Convenience: loss against the sample's own reference for the stage.
Tensor forward(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
               Stage stage, const PipelineSettings& settings, const Vocabulary& vocab);

// Total log-probability of a fixed sequence (factorization checks).
double sequence_log_prob(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                         Stage stage, const std::vector<int>& ids,
                         const PipelineSettings& settings, const Vocabulary& vocab,
                         const std::optional<std::string>& rationale_override = {});

struct DecodeOutput {
    std::vector<int> ids;  // generated ids, end marker included when emitted
    std::string text;
    std::vector<double> step_log_probs;
};

// Greedy decoding, stage-specific length cap (512 rationale / 64 answer).
DecodeOutput generate(const Sample& sample, const Subgraph& subgraph, const ModelParams& params,
                      Stage stage, const PipelineSettings& settings, const Vocabulary& vocab,
                      const std::optional<std::string>& rationale_override = {},
                      std::optional<int> max_len_override = {});

// "the answer is (x)" extraction with a token-overlap fallback.
struct AnswerParse {
    int index = 0;
    bool fallback = false;
};
AnswerParse parse_answer_text(const std::string& text, const std::vector<std::string>& choices);

struct TwoStageResult {
    std::string rationale;
    int answer_index = 0;
    bool fallback_used = false;
    std::string answer_text;
};

// Algorithm: generate r with the rationale model, append it to the language
// input, generate the answer text with the answer model, map it to a choice.
TwoStageResult two_stage_infer(const Sample& sample, const Subgraph& subgraph,
                               const ModelParams& params_rat, const ModelParams& params_ans,
                               const PipelineSettings& settings, const Vocabulary& vocab);

struct TrainConfig {
    double lr = 5e-5;
    double weight_decay = 0.01;
    int epochs = 20;
    std::uint64_t seed = 0;
    // Stop after the dev pass that reaches this accuracy.
    std::optional<double> stop_at_dev_accuracy;
};

struct EpochMetrics {
    int epoch = 0;
    std::string split;
    double accuracy = 0.0;
    double rougeL = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    ModelParams best;
    std::vector<EpochMetrics> history;
    int best_epoch = 0;
};

// Decoupled-weight-decay Adam over a model's named tensors.
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor>> params, double lr, double weight_decay);
    void step();
    double lr() const { return lr_; }

private:
    struct Slot {
        Tensor tensor;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double lr_, weight_decay_;
    int t_ = 0;
};

// Single-stage trainer: per-sample steps (batch size 1), dev evaluation
// after every epoch, checkpoint of the best dev accuracy.
TrainResult train_stage(const std::vector<Sample>& train, const std::vector<Subgraph>& train_graphs,
                        const std::vector<Sample>& dev, const std::vector<Subgraph>& dev_graphs,
                        const ModelParams& initial, Stage stage, const Vocabulary& vocab,
                        const PipelineSettings& settings, const TrainConfig& config);

// Dev-set metrics for one stage: teacher-forced loss, ROUGE-L of greedy
// generations against the stage reference, and accuracy (parsed answers for
// the answer stage, exact match for the rationale stage).
EpochMetrics evaluate_stage(const std::vector<Sample>& samples,
                            const std::vector<Subgraph>& graphs, const ModelParams& params,
                            Stage stage, const Vocabulary& vocab,
                            const PipelineSettings& settings, int epoch, const std::string& split);

}  // namespace kgcot
