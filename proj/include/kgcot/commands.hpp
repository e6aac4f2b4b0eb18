#pragma once

#include "kgcot/config.hpp"
#include "kgcot/modality.hpp"

namespace kgcot {

// Command bodies shared by the CLI binary and the test suites. Each writes
// its artifacts under config.output_dir. Exit status 0 only when every
// sample was processed without a per-sample error.

// One subgraph JSON per sample plus extraction statistics.
int cmd_extract_graph(const RunConfig& config);

// Trains one stage over the (optionally fractional) train split, evaluating
// on dev after each epoch; writes the best checkpoint and per-epoch metrics.
int cmd_train(const RunConfig& config, Stage stage);

// Two-stage inference over the test split with per-group accuracies.
int cmd_eval(const RunConfig& config);

// Trains the answer stage under all three fusion variants with identical
// seeds and data; emits a per-epoch dev-accuracy CSV.
int cmd_compare_fusions(const RunConfig& config);

}  // namespace kgcot
