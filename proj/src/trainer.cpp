#include "sarc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace sarc {

namespace {

std::string fmt(double v, int decimals = 6) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::vector<EncodedExample> encode_subset(const std::vector<RawExample>& all, const std::vector<int>& idx,
                                          const Vocabulary& vocab, int max_len, EncodeStats* stats) {
    std::vector<RawExample> subset;
    subset.reserve(idx.size());
    for (int i : idx) subset.push_back(all[i]);
    return encode_corpus(subset, vocab, max_len, stats);
}

ModelParams<float> clone_params(const ModelParams<float>& src) {
    ModelParams<float> dst = build_model<float>(src.config);
    auto s = src.named();
    auto d = dst.named();
    for (std::size_t i = 0; i < s.size(); ++i) d[i].tensor->data = s[i].tensor->data;
    return dst;
}

// Mean loss and accuracy of `params` over `examples`, without touching the
// autodiff graph.
std::pair<double, double> eval_loss_acc(const ModelParams<float>& params,
                                        const std::vector<EncodedExample>& examples, int batch_size) {
    NoGradGuard no_grad;
    double loss_sum = 0.0;
    long long correct = 0;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const std::size_t end = std::min(examples.size(), start + batch_size);
        std::vector<EncodedExample> batch(examples.begin() + start, examples.begin() + end);
        std::vector<int> labels(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = batch[i].label;
        auto logits = forward(params, batch);
        auto loss = cross_entropy(logits, labels);
        loss_sum += static_cast<double>(loss->data[0]) * static_cast<double>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const int pred = logits->at(static_cast<int>(i), 1) > logits->at(static_cast<int>(i), 0) ? 1 : 0;
            correct += pred == labels[i] ? 1 : 0;
        }
    }
    return {loss_sum / static_cast<double>(examples.size()),
            static_cast<double>(correct) / static_cast<double>(examples.size())};
}

}  // namespace

void RunConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must lie in [0, 1)");
    if (patience > 0 && val_fraction == 0.0)
        throw ConfigError("early stopping (patience > 0) needs a validation split (val_fraction > 0)");
    if (data_train.empty()) throw ConfigError("a training data path is required");
    if (use_pretrained && embeddings.empty())
        throw ConfigError("use_pretrained requires an embedding file path");
    adam.validate();
    // The model configuration is validated once vocab_size is known.
}

TrainResult train(const RunConfig& config) {
    config.validate();
    TrainResult res;
    std::vector<std::string> log_lines;
    auto log = [&log_lines](const std::string& s) { log_lines.push_back(s); };

    DatasetLoad data = load_dataset(config.data_train, DatasetFormat::auto_detect);
    if (auto warn = count_mismatch_warning(data, kExpectedTrainCounts, "train")) log(*warn);
    log("data  examples=" + std::to_string(data.examples.size()) + "  sarcastic=" +
        std::to_string(data.n_sarcastic) + "  non_sarcastic=" + std::to_string(data.n_non_sarcastic));

    res.vocab = Vocabulary::build(data.examples);
    log("vocab  size=" + std::to_string(res.vocab.size()));

    ModelConfig mc = config.model;
    mc.vocab_size = res.vocab.size();
    mc.seed = config.seed;
    mc.validate();

    TrainValSplit split = stratified_split(data.examples, config.val_fraction, config.seed);
    EncodeStats train_stats, val_stats;
    auto train_ex = encode_subset(data.examples, split.train_idx, res.vocab, mc.max_len, &train_stats);
    auto val_ex = encode_subset(data.examples, split.val_idx, res.vocab, mc.max_len, &val_stats);
    if (train_ex.empty()) throw DataError("no usable training examples after preprocessing");
    log("split  train=" + std::to_string(train_ex.size()) + "  val=" + std::to_string(val_ex.size()) +
        "  rejected=" + std::to_string(train_stats.rejected + val_stats.rejected));

    ModelParams<float> params = build_model<float>(mc);
    if (config.use_pretrained) {
        auto source = EmbeddingSource::load(config.embeddings, mc.embed_dim);
        auto init = init_embeddings<float>(res.vocab, source, config.seed);
        params.embedding.table->data = init.params.table->data;
        res.embedding_coverage = init.coverage;
        log("embeddings  coverage=" + fmt(init.coverage) + "  found=" + std::to_string(init.found) +
            "  missing=" + std::to_string(init.missing));
    }
    auto named = params.named();
    log("model  parameters=" + std::to_string(params.parameter_count()));

    AdamState<float> adam = AdamState<float>::init(named);
    EarlyStopState stopper;
    stopper.patience = config.patience;
    double best_val = std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        auto batches = make_batches(static_cast<int>(train_ex.size()), config.batch_size, true, config.seed, epoch);
        double loss_sum = 0.0;
        for (const auto& batch_ids : batches) {
            std::vector<EncodedExample> batch;
            std::vector<int> labels;
            batch.reserve(batch_ids.size());
            labels.reserve(batch_ids.size());
            for (int i : batch_ids) {
                batch.push_back(train_ex[i]);
                labels.push_back(train_ex[i].label);
            }
            zero_all_grads(named);
            auto logits = forward(params, batch);
            auto loss = cross_entropy(logits, labels);
            const double loss_value = static_cast<double>(loss->data[0]);
            if (!std::isfinite(loss_value))
                throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
            auto tape = GradTape<float>::record(loss);
            tape.backward();
            adam_step(named, adam, config.adam);
            tape.release();
            loss_sum += loss_value * static_cast<double>(batch.size());
        }

        EpochLog el;
        el.epoch = epoch;
        el.train_loss = loss_sum / static_cast<double>(train_ex.size());
        char line[160];
        if (!val_ex.empty()) {
            auto [vloss, vacc] = eval_loss_acc(params, val_ex, config.batch_size);
            el.val_loss = vloss;
            el.val_acc = vacc;
            std::snprintf(line, sizeof(line), "epoch %4d  train_loss %s  val_loss %s  val_acc %s", epoch,
                          fmt(el.train_loss).c_str(), fmt(vloss).c_str(), fmt(vacc).c_str());
            log(line);
            if (vloss < best_val) {
                best_val = vloss;
                res.best_epoch = epoch;
                res.best_params = clone_params(params);
                res.best_adam = adam;
                have_best = true;
            }
            res.epochs.push_back(el);
            if (config.patience > 0 && early_stop_update(stopper, vloss) == StopDecision::stop) {
                res.stopped_early = true;
                log("early_stop  at_epoch=" + std::to_string(epoch));
                break;
            }
        } else {
            el.val_loss = std::numeric_limits<double>::quiet_NaN();
            el.val_acc = std::numeric_limits<double>::quiet_NaN();
            std::snprintf(line, sizeof(line), "epoch %4d  train_loss %s  val_loss -  val_acc -", epoch,
                          fmt(el.train_loss).c_str());
            log(line);
            res.epochs.push_back(el);
        }
    }

    if (!have_best) {  // no validation split: keep the final weights
        res.best_epoch = res.epochs.back().epoch;
        res.best_params = clone_params(params);
        res.best_adam = adam;
        res.best_val_loss = std::numeric_limits<double>::quiet_NaN();
        log("best  epoch=" + std::to_string(res.best_epoch) + "  val_loss=-");
    } else {
        res.best_val_loss = best_val;
        log("best  epoch=" + std::to_string(res.best_epoch) + "  val_loss=" + fmt(best_val));
    }

    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    res.vocab_path = (fs::path(config.out_dir) / "vocab.txt").string();
    res.checkpoint_path = (fs::path(config.out_dir) / "checkpoint.sarc").string();
    res.vocab.save(res.vocab_path);
    save_checkpoint(res.checkpoint_path, res.best_params, res.best_adam, res.vocab.content_hash());

    std::string text;
    for (const auto& l : log_lines) text += l + "\n";
    res.log_text = std::move(text);
    std::ofstream log_file(fs::path(config.out_dir) / "train_log.txt", std::ios::binary);
    if (!log_file) throw IoError("cannot write training log under " + config.out_dir);
    log_file << res.log_text;

    std::ofstream jsonl(fs::path(config.out_dir) / "train_log.jsonl", std::ios::binary);
    if (!jsonl) throw IoError("cannot write training log under " + config.out_dir);
    for (const auto& el : res.epochs) {
        nlohmann::json rec{{"event", "epoch"}, {"epoch", el.epoch}, {"train_loss", el.train_loss}};
        if (!std::isnan(el.val_loss)) {
            rec["val_loss"] = el.val_loss;
            rec["val_acc"] = el.val_acc;
        }
        jsonl << rec.dump() << "\n";
    }
    nlohmann::json summary{{"event", "best"}, {"epoch", res.best_epoch}, {"stopped_early", res.stopped_early}};
    if (!std::isnan(res.best_val_loss)) summary["val_loss"] = res.best_val_loss;
    jsonl << summary.dump() << "\n";
    return res;
}

MetricsReport evaluate_params(const ModelParams<float>& params, const std::vector<EncodedExample>& examples,
                              int batch_size) {
    if (examples.empty()) throw ContractError("evaluate on an empty example list");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    NoGradGuard no_grad;
    ConfusionCounts cm;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const std::size_t end = std::min(examples.size(), start + batch_size);
        std::vector<EncodedExample> batch(examples.begin() + start, examples.begin() + end);
        auto logits = forward(params, batch);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const int pred = logits->at(static_cast<int>(i), 1) > logits->at(static_cast<int>(i), 0) ? 1 : 0;
            cm.add(batch[i].label, pred);
        }
    }
    return compute_metrics(cm);
}

EvalResult evaluate_on_file(const ModelParams<float>& params, const Vocabulary& vocab,
                            const std::string& data_path, int batch_size) {
    EvalResult out;
    DatasetLoad data = load_dataset(data_path, DatasetFormat::auto_detect);
    if (auto warn = count_mismatch_warning(data, kExpectedTestCounts, "test")) out.warnings.push_back(*warn);
    EncodeStats stats;
    auto examples = encode_corpus(data.examples, vocab, params.config.max_len, &stats);
    if (examples.empty()) throw DataError("no usable examples after preprocessing: " + data_path);
    if (stats.rejected > 0)
        out.warnings.push_back("warning: " + std::to_string(stats.rejected) +
                               " example(s) were empty after preprocessing and were skipped");
    out.metrics = evaluate_params(params, examples, batch_size);
    out.report_text = format_metrics_text(out.metrics);
    out.report_json = format_metrics_json(out.metrics);
    return out;
}

EvalResult evaluate_checkpoint(const std::string& checkpoint_path, const std::string& vocab_path,
                               const std::string& data_path, int batch_size) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
    Vocabulary vocab = Vocabulary::load(vocab_path);
    if (vocab.content_hash() != loaded.vocab_hash)
        throw DataError("vocabulary file " + vocab_path +
                        " does not match the checkpoint (content hash mismatch); use the vocabulary saved "
                        "alongside the checkpoint");
    return evaluate_on_file(loaded.params, vocab, data_path, batch_size);
}

std::vector<AblationRowSpec> standard_ablation_rows() {
    return {
        {"lstm", "lstm", false, false, true, false, false},
        {"lstm_gru", "lstm+gru", false, true, true, false, false},
        {"lstm_gru_attn", "lstm+gru+attention", false, true, true, true, false},
        {"lstm_gru_attn_pre", "lstm+gru+attention+pretrained", false, true, true, true, true},
        {"full", "cnn+gru+lstm+attention+pretrained", true, true, true, true, true},
    };
}

AblationResult ablate(const RunConfig& base, const std::vector<AblationRowSpec>& rows) {
    if (base.data_test.empty()) throw ConfigError("ablation needs a data_test path to score each row");
    AblationResult out;
    for (const auto& row : rows) {
        RunConfig cfg = base;
        cfg.model.use_cnn = row.use_cnn;
        cfg.model.use_gru = row.use_gru;
        cfg.model.use_lstm = row.use_lstm;
        cfg.model.use_attention = row.use_attention;
        cfg.use_pretrained = row.use_pretrained;
        cfg.out_dir = (std::filesystem::path(base.out_dir) / row.slug).string();
        AblationRowResult r;
        r.spec = row;
        try {
            cfg.validate();
            ModelConfig probe = cfg.model;
            probe.vocab_size = 2;  // invariants that don't depend on data fail before training starts
            probe.validate();
            TrainResult tr = train(cfg);
            EvalResult er = evaluate_on_file(tr.best_params, tr.vocab, cfg.data_test, cfg.batch_size);
            r.metrics = er.metrics;
        } catch (const ConfigError& e) {
            r.skipped = true;
            r.skip_reason = e.what();
        }
        out.rows.push_back(std::move(r));
    }

    std::ostringstream text;
    std::ostringstream jsonl;
    char line[256];
    std::snprintf(line, sizeof(line), "%-34s  %8s  %8s  %8s  %8s", "configuration", "accuracy", "macro_f1",
                  "f1_0", "f1_1");
    text << line << "\n";
    for (const auto& r : out.rows) {
        nlohmann::json rec{{"configuration", r.spec.label}, {"slug", r.spec.slug}};
        if (r.skipped) {
            std::snprintf(line, sizeof(line), "%-34s  skipped: %s", r.spec.label.c_str(), r.skip_reason.c_str());
            rec["skipped"] = true;
            rec["reason"] = r.skip_reason;
        } else {
            std::snprintf(line, sizeof(line), "%-34s  %8.4f  %8.4f  %8.4f  %8.4f", r.spec.label.c_str(),
                          r.metrics.accuracy, r.metrics.macro_f1, r.metrics.per_class[0].f1,
                          r.metrics.per_class[1].f1);
            rec["accuracy"] = r.metrics.accuracy;
            rec["macro_f1"] = r.metrics.macro_f1;
            rec["f1_per_class"] = {r.metrics.per_class[0].f1, r.metrics.per_class[1].f1};
        }
        text << line << "\n";
        jsonl << rec.dump() << "\n";
    }
    out.table_text = text.str();
    out.table_jsonl = jsonl.str();
    return out;
}

std::string format_metrics_text(const MetricsReport& m) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "accuracy  %.4f\nmacro_f1  %.4f\n", m.accuracy, m.macro_f1);
    os << line;
    for (int k = 0; k < 2; ++k) {
        std::snprintf(line, sizeof(line), "class %d   precision %.4f  recall %.4f  f1 %.4f\n", k,
                      m.per_class[k].precision, m.per_class[k].recall, m.per_class[k].f1);
        os << line;
    }
    std::snprintf(line, sizeof(line),
                  "confusion actual0(pred0 %lld, pred1 %lld)  actual1(pred0 %lld, pred1 %lld)\n",
                  m.confusion.at(0, 0), m.confusion.at(0, 1), m.confusion.at(1, 0), m.confusion.at(1, 1));
    os << line;
    return os.str();
}

std::string format_metrics_json(const MetricsReport& m) {
    nlohmann::json rec{
        {"accuracy", m.accuracy},
        {"macro_f1", m.macro_f1},
        {"per_class",
         {{{"precision", m.per_class[0].precision}, {"recall", m.per_class[0].recall}, {"f1", m.per_class[0].f1}},
          {{"precision", m.per_class[1].precision}, {"recall", m.per_class[1].recall}, {"f1", m.per_class[1].f1}}}},
        {"confusion",
         {{m.confusion.at(0, 0), m.confusion.at(0, 1)}, {m.confusion.at(1, 0), m.confusion.at(1, 1)}}},
    };
    return rec.dump();
}

}  // namespace sarc
