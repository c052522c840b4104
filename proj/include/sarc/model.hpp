#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sarc/data.hpp"
#include "sarc/layers.hpp"

namespace sarc {

// FNV-1a 64-bit over a string; used to derive stable per-parameter seeds.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Architecture description: dimensions plus which stages of the stack
// (embedding -> conv -> GRU -> BiLSTM -> attention -> pooling -> classifier)
// are present. Disabling a stage connects its neighbours directly.
struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 100;
    int max_len = 20;
    int conv_filters = 128;
    int conv_width = 3;
    int gru_hidden = 128;
    int lstm_hidden = 128;
    int heads = 4;
    int num_classes = 2;
    bool biases_enabled = true;
    std::uint64_t seed = 0;

    bool use_cnn = true;
    bool use_gru = true;
    bool use_lstm = true;
    bool use_attention = true;

    int conv_out_dim() const { return use_cnn ? conv_filters : embed_dim; }
    int gru_out_dim() const { return use_gru ? gru_hidden : conv_out_dim(); }
    // Width of the per-position vectors that reach attention/pooling.
    int model_dim() const { return use_lstm ? 2 * lstm_hidden : gru_out_dim(); }

    void validate() const {
        if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2 (pad and unk ids), got " +
                                              std::to_string(vocab_size));
        if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
        if (max_len < 1) throw ConfigError("max_len must be >= 1");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (!use_cnn && !use_gru && !use_lstm)
            throw ConfigError("at least one encoder stage (cnn, gru, lstm) must be enabled");
        if (use_cnn) {
            if (conv_filters < 1) throw ConfigError("conv_filters must be >= 1");
            if (conv_width < 1 || conv_width % 2 == 0)
                throw ConfigError("conv_width must be odd and >= 1, got " + std::to_string(conv_width));
            if (max_len < conv_width)
                throw ConfigError("max_len " + std::to_string(max_len) + " is shorter than conv_width " +
                                  std::to_string(conv_width));
        }
        if (use_gru && gru_hidden < 1) throw ConfigError("gru_hidden must be >= 1");
        if (use_lstm && lstm_hidden < 1) throw ConfigError("lstm_hidden must be >= 1");
        if (use_attention) {
            if (heads < 1) throw ConfigError("heads must be >= 1");
            if (model_dim() % heads != 0)
                throw ConfigError("attention width " + std::to_string(model_dim()) +
                                  " not divisible by " + std::to_string(heads) + " heads");
        }
    }
};

// One trainable tensor with its stable name. `frozen_row` >= 0 marks a row the
// optimizer must keep at zero (the embedding pad row).
template <typename T>
struct NamedParam {
    std::string name;
    TensorPtr<T> tensor;
    int frozen_row = -1;
};

template <typename T>
struct ModelParams {
    ModelConfig config;
    EmbeddingParams<T> embedding;
    ConvParams<T> conv;
    GruParams<T> gru;
    LstmParams<T> lstm_fwd, lstm_bwd;
    MhaParams<T> mha;
    TensorPtr<T> classifier_w;  // [model_dim x num_classes]
    TensorPtr<T> classifier_b;  // [num_classes] or null

    // Every trainable tensor, in a fixed order shared by the optimizer, the
    // checkpoint writer, and the gradient checker.
    std::vector<NamedParam<T>> named() const {
        std::vector<NamedParam<T>> out;
        auto push = [&out](const std::string& name, const TensorPtr<T>& t, int frozen_row = -1) {
            if (t) out.push_back({name, t, frozen_row});
        };
        push("embedding.table", embedding.table, embedding.pad_id);
        push("conv.kernels", conv.kernels);
        push("conv.bias", conv.bias);
        push("gru.w_r", gru.w_r);
        push("gru.w_z", gru.w_z);
        push("gru.w_h", gru.w_h);
        push("gru.b_r", gru.b_r);
        push("gru.b_z", gru.b_z);
        push("gru.b_h", gru.b_h);
        const LstmParams<T>* dirs[2] = {&lstm_fwd, &lstm_bwd};
        const char* dir_names[2] = {"lstm_fwd", "lstm_bwd"};
        for (int d = 0; d < 2; ++d) {
            const std::string base = dir_names[d];
            push(base + ".w_i", dirs[d]->w_i);
            push(base + ".w_f", dirs[d]->w_f);
            push(base + ".w_o", dirs[d]->w_o);
            push(base + ".w_c", dirs[d]->w_c);
            push(base + ".b_i", dirs[d]->b_i);
            push(base + ".b_f", dirs[d]->b_f);
            push(base + ".b_o", dirs[d]->b_o);
            push(base + ".b_c", dirs[d]->b_c);
        }
        for (std::size_t h = 0; h < mha.heads.size(); ++h) {
            const std::string base = "mha.head" + std::to_string(h);
            push(base + ".w_q", mha.heads[h].w_q);
            push(base + ".w_k", mha.heads[h].w_k);
            push(base + ".w_v", mha.heads[h].w_v);
        }
        push("mha.w_out", mha.w_out);
        push("classifier.weight", classifier_w);
        push("classifier.bias", classifier_b);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : named()) n += p.tensor->size();
        return n;
    }
};

namespace detail {

// Weight init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), seeded from the
// model seed and the parameter name so the draw order never depends on how
// many other parameters exist.
template <typename T>
TensorPtr<T> init_weight(std::vector<int> shape, int fan_in, std::uint64_t seed, const std::string& name) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor<T>::uniform(std::move(shape), -bound, bound, seed ^ fnv1a64(name), true);
}

template <typename T>
TensorPtr<T> init_bias(int n, bool enabled) {
    return enabled ? Tensor<T>::zeros({n}, true) : nullptr;
}

}  // namespace detail

template <typename T>
ModelParams<T> build_model(const ModelConfig& config) {
    config.validate();
    ModelParams<T> m;
    m.config = config;
    const std::uint64_t seed = config.seed;
    const bool biases = config.biases_enabled;

    // Embedding rows start as small uniform noise; callers wanting pre-trained
    // vectors overwrite the table afterwards (init_embeddings). The pad row is
    // pinned to zero either way.
    m.embedding.table = Tensor<T>::uniform({config.vocab_size, config.embed_dim}, -0.05, 0.05,
                                           seed ^ fnv1a64("embedding.table"), true);
    m.embedding.pad_id = Vocabulary::kPadId;
    for (int j = 0; j < config.embed_dim; ++j) m.embedding.table->at(m.embedding.pad_id, j) = T(0);

    if (config.use_cnn) {
        m.conv.kernels = detail::init_weight<T>({config.conv_filters, config.conv_width, config.embed_dim},
                                                config.conv_width * config.embed_dim, seed, "conv.kernels");
        m.conv.bias = detail::init_bias<T>(config.conv_filters, biases);
    }
    if (config.use_gru) {
        const int in = config.conv_out_dim();
        const int h = config.gru_hidden;
        for (const char* gate : {"w_r", "w_z", "w_h"}) {
            auto w = detail::init_weight<T>({h, h + in}, h + in, seed, std::string("gru.") + gate);
            if (gate[2] == 'r') m.gru.w_r = w;
            else if (gate[2] == 'z') m.gru.w_z = w;
            else m.gru.w_h = w;
        }
        m.gru.b_r = detail::init_bias<T>(h, biases);
        m.gru.b_z = detail::init_bias<T>(h, biases);
        m.gru.b_h = detail::init_bias<T>(h, biases);
    }
    if (config.use_lstm) {
        const int in = config.gru_out_dim();
        const int h = config.lstm_hidden;
        LstmParams<T>* dirs[2] = {&m.lstm_fwd, &m.lstm_bwd};
        const char* dir_names[2] = {"lstm_fwd", "lstm_bwd"};
        for (int d = 0; d < 2; ++d) {
            const std::string base = dir_names[d];
            dirs[d]->w_i = detail::init_weight<T>({h, h + in}, h + in, seed, base + ".w_i");
            dirs[d]->w_f = detail::init_weight<T>({h, h + in}, h + in, seed, base + ".w_f");
            dirs[d]->w_o = detail::init_weight<T>({h, h + in}, h + in, seed, base + ".w_o");
            dirs[d]->w_c = detail::init_weight<T>({h, h + in}, h + in, seed, base + ".w_c");
            dirs[d]->b_i = detail::init_bias<T>(h, biases);
            dirs[d]->b_f = detail::init_bias<T>(h, biases);
            dirs[d]->b_o = detail::init_bias<T>(h, biases);
            dirs[d]->b_c = detail::init_bias<T>(h, biases);
        }
    }
    if (config.use_attention) {
        const int d_model = config.model_dim();
        const int d_head = d_model / config.heads;
        m.mha.model_dim = d_model;
        m.mha.head_dim = d_head;
        m.mha.heads.resize(config.heads);
        for (int h = 0; h < config.heads; ++h) {
            const std::string base = "mha.head" + std::to_string(h);
            m.mha.heads[h].w_q = detail::init_weight<T>({d_model, d_head}, d_model, seed, base + ".w_q");
            m.mha.heads[h].w_k = detail::init_weight<T>({d_model, d_head}, d_model, seed, base + ".w_k");
            m.mha.heads[h].w_v = detail::init_weight<T>({d_model, d_head}, d_model, seed, base + ".w_v");
        }
        m.mha.w_out = detail::init_weight<T>({config.heads * d_head, d_model}, config.heads * d_head, seed,
                                             "mha.w_out");
    }
    m.classifier_w = detail::init_weight<T>({config.model_dim(), config.num_classes}, config.model_dim(), seed,
                                            "classifier.weight");
    m.classifier_b = detail::init_bias<T>(config.num_classes, biases);
    return m;
}

// Full forward pass over a batch of fixed-length encoded examples:
// embed -> conv -> GRU -> BiLSTM -> attention -> masked mean pool ->
// affine classifier. Returns logits [B x num_classes].
template <typename T>
TensorPtr<T> forward(const ModelParams<T>& params, const std::vector<EncodedExample>& batch) {
    const ModelConfig& cfg = params.config;
    if (batch.empty()) throw ContractError("forward on an empty batch");
    const int B = static_cast<int>(batch.size());
    const int L = cfg.max_len;
    BatchMask mask = BatchMask::make(B, L);
    for (int b = 0; b < B; ++b) {
        const auto& ex = batch[b];
        if (static_cast<int>(ex.ids.size()) != L || static_cast<int>(ex.mask.size()) != L)
            throw ShapeError("example " + std::to_string(b) + " has length " + std::to_string(ex.ids.size()) +
                             ", model expects " + std::to_string(L));
        for (int t = 0; t < L; ++t) mask.set(b, t, ex.mask[t] != 0);
    }

    // Timestep-major batched run through the sequence stages.
    std::vector<TensorPtr<T>> steps(L);
    for (int t = 0; t < L; ++t) {
        std::vector<int> ids(B);
        for (int b = 0; b < B; ++b) ids[b] = batch[b].ids[t];
        steps[t] = embed(ids, params.embedding);
    }
    if (cfg.use_cnn) steps = conv1d_same_steps(steps, params.conv);
    if (cfg.use_gru) steps = gru_layer_steps(steps, params.gru, mask);
    if (cfg.use_lstm) steps = bilstm_layer_steps(steps, params.lstm_fwd, params.lstm_bwd, mask);

    // Attention and pooling act on one sequence at a time.
    std::vector<TensorPtr<T>> pooled(B);
    for (int b = 0; b < B; ++b) {
        auto x = stack_timestep_rows(steps, b);  // [L x model_dim]
        PadMask row_mask = mask.row(b);
        if (cfg.use_attention) x = multi_head_attention(x, params.mha, row_mask);
        pooled[b] = masked_mean_rows(x, row_mask);
    }
    auto features = B == 1 ? pooled[0] : concat(pooled, 0);  // [B x model_dim]
    auto logits = matmul(features, params.classifier_w);
    if (params.classifier_b) logits = add_row_bias(logits, params.classifier_b);
    return logits;
}

// One classified text. When the text normalizes to nothing there is no input
// to classify; the result is flagged instead of being given a default class.
struct Prediction {
    bool unclassifiable = false;
    int label = -1;
    double p_non_sarcastic = 0.0;
    double p_sarcastic = 0.0;
};

// Preprocess raw texts with the supplied vocabulary, run the model, and
// return per-text labels with class probabilities.
template <typename T>
std::vector<Prediction> predict(const ModelParams<T>& params, const Vocabulary& vocab,
                                const std::vector<std::string>& texts) {
    NoGradGuard no_grad;
    std::vector<Prediction> out(texts.size());
    std::vector<EncodedExample> batch;
    std::vector<std::size_t> batch_slot;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto enc = encode(tokenize(normalize(texts[i])), vocab, params.config.max_len);
        if (!enc) {
            out[i].unclassifiable = true;
            continue;
        }
        batch.push_back(std::move(*enc));
        batch_slot.push_back(i);
    }
    if (batch.empty()) return out;
    auto logits = forward(params, batch);
    for (std::size_t j = 0; j < batch_slot.size(); ++j) {
        Prediction& p = out[batch_slot[j]];
        const double l0 = static_cast<double>(logits->at(static_cast<int>(j), 0));
        const double l1 = static_cast<double>(logits->at(static_cast<int>(j), 1));
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        p.p_non_sarcastic = e0 / (e0 + e1);
        p.p_sarcastic = e1 / (e0 + e1);
        p.label = l1 > l0 ? 1 : 0;
    }
    return out;
}

}  // namespace sarc
