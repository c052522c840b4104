#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sarc/checkpoint.hpp"
#include "sarc/metrics.hpp"
#include "sarc/optimizer.hpp"

namespace sarc {

// Everything one training run needs: architecture, optimizer settings, loop
// control parameters, and input/output locations.
struct RunConfig {
    ModelConfig model;  // vocab_size is filled in from the training data
    AdamHyper adam;
    int epochs = 20;
    int patience = 5;           // 0 disables early stopping
    int batch_size = 32;
    double val_fraction = 0.10;  // stratified share of the training file held out for validation
    bool use_pretrained = false;
    std::uint64_t seed = 0;
    std::string data_train;
    std::string data_test;
    std::string embeddings;
    std::string out_dir = ".";

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;  // NaN when there is no validation split
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int best_epoch = 0;  // 1-based; the epoch whose weights the checkpoint holds
    double best_val_loss = 0.0;
    bool stopped_early = false;
    ModelParams<float> best_params;
    AdamState<float> best_adam;
    Vocabulary vocab;
    double embedding_coverage = -1.0;  // fraction of vocab found in the embedding file; -1 if unused
    std::string checkpoint_path;
    std::string vocab_path;
    std::string log_text;  // the aligned text log, as written to train_log.txt
};

// Trains per the configuration: loads and encodes the training file, carves a
// stratified validation split, runs Adam with early stopping, and writes the
// best-validation checkpoint, vocabulary, and logs under out_dir.
TrainResult train(const RunConfig& config);

// Metrics of a parameter set over encoded examples, evaluated in file order.
MetricsReport evaluate_params(const ModelParams<float>& params, const std::vector<EncodedExample>& examples,
                              int batch_size);

struct EvalResult {
    MetricsReport metrics;
    std::string report_text;
    std::string report_json;
    std::vector<std::string> warnings;
};

// Loads a checkpoint plus its vocabulary, refuses on a vocabulary-hash
// mismatch, and evaluates the supplied dataset file.
EvalResult evaluate_checkpoint(const std::string& checkpoint_path, const std::string& vocab_path,
                               const std::string& data_path, int batch_size);

EvalResult evaluate_on_file(const ModelParams<float>& params, const Vocabulary& vocab,
                            const std::string& data_path, int batch_size);

// One row of the ablation sweep: which stages are active, under a stable slug
// used for the row's output directory.
struct AblationRowSpec {
    std::string slug;
    std::string label;
    bool use_cnn = false;
    bool use_gru = false;
    bool use_lstm = false;
    bool use_attention = false;
    bool use_pretrained = false;
};

// The standard five-row sweep: BiLSTM alone, +GRU, +attention, +pre-trained
// embeddings, +CNN (the full stack).
std::vector<AblationRowSpec> standard_ablation_rows();

struct AblationRowResult {
    AblationRowSpec spec;
    bool skipped = false;
    std::string skip_reason;
    MetricsReport metrics;
};

struct AblationResult {
    std::vector<AblationRowResult> rows;
    std::string table_text;   // aligned columns
    std::string table_jsonl;  // one structured record per row
};

// Trains and evaluates every row with the shared base configuration and seed.
// A row whose configuration is invalid is skipped with a warning in the output.
AblationResult ablate(const RunConfig& base, const std::vector<AblationRowSpec>& rows);

std::string format_metrics_text(const MetricsReport& m);
std::string format_metrics_json(const MetricsReport& m);

}  // namespace sarc
