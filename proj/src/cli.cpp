#include "sarc/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sarc/gradcheck.hpp"
#include "sarc/trainer.hpp"

namespace sarc {

namespace {

void require_known_keys(const nlohmann::json& obj, const std::vector<std::string>& allowed,
                        const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
void read_key(const nlohmann::json& obj, const std::string& key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": key \"" + key + "\" has the wrong type");
    }
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read config file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    const std::string where = "config file " + path;
    if (!j.is_object()) throw ConfigError(where + ": top level must be an object");
    require_known_keys(j, {"model", "adam", "epochs", "patience", "batch_size", "val_fraction",
                           "use_pretrained", "seed", "data_train", "data_test", "embeddings", "out_dir"},
                       where);
    RunConfig cfg;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (!m.is_object()) throw ConfigError(where + ": \"model\" must be an object");
        require_known_keys(m, {"embed_dim", "max_len", "conv_filters", "conv_width", "gru_hidden",
                               "lstm_hidden", "heads", "num_classes", "biases_enabled", "use_cnn", "use_gru",
                               "use_lstm", "use_attention"},
                           where + " (model)");
        read_key(m, "embed_dim", cfg.model.embed_dim, where);
        read_key(m, "max_len", cfg.model.max_len, where);
        read_key(m, "conv_filters", cfg.model.conv_filters, where);
        read_key(m, "conv_width", cfg.model.conv_width, where);
        read_key(m, "gru_hidden", cfg.model.gru_hidden, where);
        read_key(m, "lstm_hidden", cfg.model.lstm_hidden, where);
        read_key(m, "heads", cfg.model.heads, where);
        read_key(m, "num_classes", cfg.model.num_classes, where);
        read_key(m, "biases_enabled", cfg.model.biases_enabled, where);
        read_key(m, "use_cnn", cfg.model.use_cnn, where);
        read_key(m, "use_gru", cfg.model.use_gru, where);
        read_key(m, "use_lstm", cfg.model.use_lstm, where);
        read_key(m, "use_attention", cfg.model.use_attention, where);
    }
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        if (!a.is_object()) throw ConfigError(where + ": \"adam\" must be an object");
        require_known_keys(a, {"alpha", "beta1", "beta2", "eps", "weight_decay"}, where + " (adam)");
        read_key(a, "alpha", cfg.adam.alpha, where);
        read_key(a, "beta1", cfg.adam.beta1, where);
        read_key(a, "beta2", cfg.adam.beta2, where);
        read_key(a, "eps", cfg.adam.eps, where);
        read_key(a, "weight_decay", cfg.adam.weight_decay, where);
    }
    read_key(j, "epochs", cfg.epochs, where);
    read_key(j, "patience", cfg.patience, where);
    read_key(j, "batch_size", cfg.batch_size, where);
    read_key(j, "val_fraction", cfg.val_fraction, where);
    read_key(j, "use_pretrained", cfg.use_pretrained, where);
    read_key(j, "seed", cfg.seed, where);
    read_key(j, "data_train", cfg.data_train, where);
    read_key(j, "data_test", cfg.data_test, where);
    read_key(j, "embeddings", cfg.embeddings, where);
    read_key(j, "out_dir", cfg.out_dir, where);
    return cfg;
}

struct CommonOpts {
    std::string config_path, data_train, data_test, embeddings, out_dir;
    std::uint64_t seed = 0;
    int epochs = 0, patience = 0, batch_size = 0, heads = 0;
    double val_fraction = 0.0;
    bool no_cnn = false, no_gru = false, no_lstm = false, no_attention = false;
    bool no_pretrained = false, pretrained = false;
};

void add_common_options(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration file");
    cmd->add_option("--seed", o.seed, "Master seed for init, splits, and shuffles");
    cmd->add_option("--data-train", o.data_train, "Training dataset (CSV or JSONL)");
    cmd->add_option("--data-test", o.data_test, "Test dataset (CSV or JSONL)");
    cmd->add_option("--embeddings", o.embeddings, "Pre-trained embedding text file");
    cmd->add_option("--out-dir", o.out_dir, "Directory for checkpoints and logs");
    cmd->add_option("--epochs", o.epochs, "Training epochs");
    cmd->add_option("--patience", o.patience, "Early-stopping patience (0 disables)");
    cmd->add_option("--batch-size", o.batch_size, "Examples per optimizer step");
    cmd->add_option("--val-fraction", o.val_fraction, "Stratified validation share of the training file");
    cmd->add_option("--heads", o.heads, "Attention heads");
    cmd->add_flag("--no-cnn", o.no_cnn, "Drop the convolution stage");
    cmd->add_flag("--no-gru", o.no_gru, "Drop the GRU stage");
    cmd->add_flag("--no-lstm", o.no_lstm, "Drop the BiLSTM stage");
    cmd->add_flag("--no-attention", o.no_attention, "Drop the attention stage");
    cmd->add_flag("--no-pretrained", o.no_pretrained, "Random embedding init");
    cmd->add_flag("--pretrained", o.pretrained, "Initialize embeddings from --embeddings");
}

RunConfig build_run_config(const CLI::App* cmd, const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : parse_config_file(o.config_path);
    if (cmd->count("--seed")) cfg.seed = o.seed;
    if (cmd->count("--data-train")) cfg.data_train = o.data_train;
    if (cmd->count("--data-test")) cfg.data_test = o.data_test;
    if (cmd->count("--embeddings")) cfg.embeddings = o.embeddings;
    if (cmd->count("--out-dir")) cfg.out_dir = o.out_dir;
    if (cmd->count("--epochs")) cfg.epochs = o.epochs;
    if (cmd->count("--patience")) cfg.patience = o.patience;
    if (cmd->count("--batch-size")) cfg.batch_size = o.batch_size;
    if (cmd->count("--val-fraction")) cfg.val_fraction = o.val_fraction;
    if (cmd->count("--heads")) cfg.model.heads = o.heads;
    if (o.no_cnn) cfg.model.use_cnn = false;
    if (o.no_gru) cfg.model.use_gru = false;
    if (o.no_lstm) cfg.model.use_lstm = false;
    if (o.no_attention) cfg.model.use_attention = false;
    if (o.pretrained) cfg.use_pretrained = true;
    if (o.no_pretrained) cfg.use_pretrained = false;
    return cfg;
}

std::string default_vocab_path(const std::string& checkpoint_path, const std::string& given) {
    if (!given.empty()) return given;
    return (std::filesystem::path(checkpoint_path).parent_path() / "vocab.txt").string();
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << w << "\n";
}

int run_train(const CLI::App* cmd, const CommonOpts& o) {
    RunConfig cfg = build_run_config(cmd, o);
    TrainResult tr = train(cfg);
    std::cout << tr.log_text;
    std::cout << "checkpoint " << tr.checkpoint_path << "\n";
    std::cout << "vocabulary " << tr.vocab_path << "\n";
    if (!cfg.data_test.empty()) {
        EvalResult er = evaluate_on_file(tr.best_params, tr.vocab, cfg.data_test, cfg.batch_size);
        print_warnings(er.warnings);
        std::cout << "test metrics\n" << er.report_text;
        std::ofstream txt(std::filesystem::path(cfg.out_dir) / "test_metrics.txt", std::ios::binary);
        txt << er.report_text;
        std::ofstream js(std::filesystem::path(cfg.out_dir) / "test_metrics.json", std::ios::binary);
        js << er.report_json << "\n";
    }
    return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& vocab, const std::string& data,
                 int batch_size) {
    EvalResult er = evaluate_checkpoint(checkpoint, default_vocab_path(checkpoint, vocab), data, batch_size);
    print_warnings(er.warnings);
    std::cout << er.report_text;
    return 0;
}

int run_predict(const std::string& checkpoint, const std::string& vocab_path, std::vector<std::string> texts,
                const std::string& input_path) {
    if (!input_path.empty()) {
        std::ifstream f(input_path);
        if (!f) throw IoError("cannot read input file: " + input_path);
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            texts.push_back(line);
        }
    }
    if (texts.empty()) throw ConfigError("predict needs at least one --text or an --input file");
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    Vocabulary vocab = Vocabulary::load(default_vocab_path(checkpoint, vocab_path));
    if (vocab.content_hash() != loaded.vocab_hash)
        throw DataError("vocabulary file does not match the checkpoint (content hash mismatch)");
    auto predictions = predict(loaded.params, vocab, texts);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        nlohmann::json rec{{"text", texts[i]}};
        if (predictions[i].unclassifiable) {
            rec["unclassifiable"] = true;
        } else {
            rec["label"] = predictions[i].label;
            rec["p_sarcastic"] = predictions[i].p_sarcastic;
            rec["p_non_sarcastic"] = predictions[i].p_non_sarcastic;
        }
        std::cout << rec.dump() << "\n";
    }
    return 0;
}

int run_ablate(const CLI::App* cmd, const CommonOpts& o) {
    RunConfig cfg = build_run_config(cmd, o);
    AblationResult ar = ablate(cfg, standard_ablation_rows());
    std::cout << ar.table_text;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream txt(std::filesystem::path(cfg.out_dir) / "ablation.txt", std::ios::binary);
    txt << ar.table_text;
    std::ofstream js(std::filesystem::path(cfg.out_dir) / "ablation.jsonl", std::ios::binary);
    js << ar.table_jsonl;
    return 0;
}

struct GradcheckOpts {
    int embed_dim = 8, hidden = 8, conv_filters = 8, conv_width = 3, heads = 2;
    int max_len = 5, vocab_size = 16, batch = 2;
    std::uint64_t seed = 7;
    double tol = 1e-4, step = 1e-4;
    bool biases = false;
};

int run_gradcheck(const GradcheckOpts& o) {
    ModelConfig cfg;
    cfg.vocab_size = o.vocab_size;
    cfg.embed_dim = o.embed_dim;
    cfg.max_len = o.max_len;
    cfg.conv_filters = o.conv_filters;
    cfg.conv_width = o.conv_width;
    cfg.gru_hidden = o.hidden;
    cfg.lstm_hidden = o.hidden;
    cfg.heads = o.heads;
    cfg.biases_enabled = o.biases;
    cfg.seed = o.seed;
    auto report = gradcheck_model(cfg, o.batch, o.seed ^ 0xD47A5EEDULL, static_cast<long double>(o.tol),
                                  static_cast<long double>(o.step));
    for (const auto& g : report.groups) {
        char line[160];
        std::snprintf(line, sizeof(line), "group %-22s  max_rel_err %.3Le  %s", g.name.c_str(), g.max_rel_err,
                      g.pass ? "pass" : "FAIL");
        std::cout << line << "\n";
    }
    char summary[96];
    std::snprintf(summary, sizeof(summary), "gradcheck %s  tolerance %.1Le", report.pass ? "PASS" : "FAIL",
                  report.tolerance);
    std::cout << summary << "\n";
    return report.pass ? 0 : 3;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Sarcasm-detection toolkit: train, evaluate, predict, ablate, gradcheck"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write the best checkpoint");
    add_common_options(train_cmd, train_opts);

    std::string eval_checkpoint, eval_vocab, eval_data;
    int eval_batch = 32;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "Vocabulary file (default: vocab.txt next to the checkpoint)");
    eval_cmd->add_option("--data-test", eval_data, "Dataset to score")->required();
    eval_cmd->add_option("--batch-size", eval_batch, "Examples per forward pass");

    std::string pred_checkpoint, pred_vocab, pred_input;
    std::vector<std::string> pred_texts;
    CLI::App* pred_cmd = app.add_subcommand("predict", "Classify raw headline texts");
    pred_cmd->add_option("--checkpoint", pred_checkpoint, "Checkpoint file")->required();
    pred_cmd->add_option("--vocab", pred_vocab, "Vocabulary file (default: vocab.txt next to the checkpoint)");
    pred_cmd->add_option("--text", pred_texts, "Headline to classify (repeatable)");
    pred_cmd->add_option("--input", pred_input, "File with one headline per line");

    CommonOpts ablate_opts;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train and score the standard ablation rows");
    add_common_options(ablate_cmd, ablate_opts);

    GradcheckOpts gc;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    gc_cmd->add_option("--embed-dim", gc.embed_dim, "Embedding width");
    gc_cmd->add_option("--hidden", gc.hidden, "GRU and LSTM hidden width");
    gc_cmd->add_option("--conv-filters", gc.conv_filters, "Convolution filters");
    gc_cmd->add_option("--conv-width", gc.conv_width, "Convolution window (odd)");
    gc_cmd->add_option("--heads", gc.heads, "Attention heads");
    gc_cmd->add_option("--max-len", gc.max_len, "Sequence length");
    gc_cmd->add_option("--vocab-size", gc.vocab_size, "Synthetic vocabulary size");
    gc_cmd->add_option("--batch", gc.batch, "Synthetic batch size");
    gc_cmd->add_option("--seed", gc.seed, "Seed for weights and the synthetic batch");
    gc_cmd->add_option("--tolerance", gc.tol, "Max relative error allowed");
    gc_cmd->add_option("--step", gc.step, "Finite-difference step");
    gc_cmd->add_flag("--biases", gc.biases, "Include bias parameters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return run_train(train_cmd, train_opts);
        if (*eval_cmd) return run_evaluate(eval_checkpoint, eval_vocab, eval_data, eval_batch);
        if (*pred_cmd) return run_predict(pred_checkpoint, pred_vocab, pred_texts, pred_input);
        if (*ablate_cmd) return run_ablate(ablate_cmd, ablate_opts);
        if (*gc_cmd) return run_gradcheck(gc);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace sarc
