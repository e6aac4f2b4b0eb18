#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kgcot/commands.hpp"

namespace {

struct Overrides {
    std::optional<int> fusion;
    std::optional<std::string> caption_mode;
    std::optional<int> k_max;
    std::optional<double> train_fraction;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;

    void apply(kgcot::RunConfig& config) const {
        if (fusion) config.fusion = *fusion;
        if (caption_mode) config.caption_mode = *caption_mode;
        if (k_max) config.k_max = *k_max;
        if (train_fraction) config.train_fraction = *train_fraction;
        if (seed) config.seed = *seed;
        if (output_dir) config.output_dir = *output_dir;
        config.validate();
    }
};

void add_common(CLI::App* cmd, std::string& config_path, Overrides& ov) {
    cmd->add_option("--config", config_path, "run configuration JSON")->required();
    cmd->add_option("--fusion", ov.fusion, "fusion variant {1|2|3}");
    cmd->add_option("--caption-mode", ov.caption_mode, "caption use {none|context|nodes|both}");
    cmd->add_option("--k-max", ov.k_max, "node budget per subgraph");
    cmd->add_option("--train-fraction", ov.train_fraction, "stratified train subset in (0,1]");
    cmd->add_option("--seed", ov.seed, "seed for init, data order and padding");
    cmd->add_option("--output-dir", ov.output_dir, "artifact directory override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-grounded multimodal two-stage reasoning (desk scale)"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    std::string stage_name = "rationale";

    auto* extract = app.add_subcommand("extract-graph", "extract one subgraph per sample");
    add_common(extract, config_path, ov);

    auto* train = app.add_subcommand("train", "train one stage");
    add_common(train, config_path, ov);
    train->add_option("--stage", stage_name, "stage {rationale|answer}")->required();

    auto* eval = app.add_subcommand("eval", "two-stage inference over the test split");
    add_common(eval, config_path, ov);

    auto* compare = app.add_subcommand("compare-fusions", "train all fusion variants");
    add_common(compare, config_path, ov);

    CLI11_PARSE(app, argc, argv);

    try {
        kgcot::RunConfig config = kgcot::RunConfig::load(config_path);
        ov.apply(config);
        if (extract->parsed()) return kgcot::cmd_extract_graph(config);
        if (train->parsed()) return kgcot::cmd_train(config, kgcot::stage_from_string(stage_name));
        if (eval->parsed()) return kgcot::cmd_eval(config);
        if (compare->parsed()) return kgcot::cmd_compare_fusions(config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
