#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sarc/ops.hpp"

namespace sarc {

// Prefix validity mask for one sequence: m[t] true at real tokens, false at
// trailing pads.
using PadMask = std::vector<std::uint8_t>;

// Row-major [batch x len] validity bits for a batch of sequences.
struct BatchMask {
    int batch = 0;
    int len = 0;
    std::vector<std::uint8_t> bits;

    static BatchMask make(int batch, int len) {
        BatchMask m;
        m.batch = batch;
        m.len = len;
        m.bits.assign(static_cast<std::size_t>(batch) * len, 0);
        return m;
    }
    static BatchMask single(const PadMask& mask) {
        BatchMask m = make(1, static_cast<int>(mask.size()));
        std::copy(mask.begin(), mask.end(), m.bits.begin());
        return m;
    }
    std::uint8_t at(int b, int t) const { return bits[static_cast<std::size_t>(b) * len + t]; }
    void set(int b, int t, bool v) { bits[static_cast<std::size_t>(b) * len + t] = v ? 1 : 0; }
    std::vector<std::uint8_t> col(int t) const {
        std::vector<std::uint8_t> c(batch);
        for (int b = 0; b < batch; ++b) c[b] = at(b, t);
        return c;
    }
    PadMask row(int b) const {
        return PadMask(bits.begin() + static_cast<std::size_t>(b) * len,
                       bits.begin() + static_cast<std::size_t>(b + 1) * len);
    }
    int real_len(int b) const {
        int n = 0;
        for (int t = 0; t < len; ++t) n += at(b, t) ? 1 : 0;
        return n;
    }
};

inline bool all_set(const std::vector<std::uint8_t>& bits) {
    for (auto b : bits)
        if (!b) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Parameter bundles. Bias tensors are null when the model runs bias-free
// (the exact-equation mode used by gradient checking).
// ---------------------------------------------------------------------------

template <typename T>
struct EmbeddingParams {
    TensorPtr<T> table;  // [vocab x embed_dim]; row pad_id is pinned to zero
    int pad_id = 0;
};

template <typename T>
struct ConvParams {
    TensorPtr<T> kernels;  // [filters x width x in_dim], width odd
    TensorPtr<T> bias;     // [filters] or null
};

template <typename T>
struct GruParams {
    // Each gate weight is [hidden x (hidden + in_dim)] and reads the
    // concatenation [previous state, current input].
    TensorPtr<T> w_r, w_z, w_h;
    TensorPtr<T> b_r, b_z, b_h;  // [hidden] or null
    int hidden() const { return w_r->shape[0]; }
    int in_dim() const { return w_r->shape[1] - w_r->shape[0]; }
};

template <typename T>
struct LstmParams {
    TensorPtr<T> w_i, w_f, w_o, w_c;  // [hidden x (hidden + in_dim)]
    TensorPtr<T> b_i, b_f, b_o, b_c;  // [hidden] or null
    int hidden() const { return w_i->shape[0]; }
    int in_dim() const { return w_i->shape[1] - w_i->shape[0]; }
};

template <typename T>
struct MhaParams {
    struct Head {
        TensorPtr<T> w_q, w_k, w_v;  // each [model_dim x head_dim]
    };
    std::vector<Head> heads;
    TensorPtr<T> w_out;  // [(heads * head_dim) x model_dim]
    int head_dim = 0;
    int model_dim = 0;
};

namespace detail {
template <typename T>
TensorPtr<T> linear(const TensorPtr<T>& rows, const TensorPtr<T>& w, const TensorPtr<T>& bias) {
    auto out = matmul_nt(rows, w);  // rows * w^T, w stored [out_dim x in_dim]
    return bias ? add_row_bias(out, bias) : out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

// Looks up one sequence of token ids: [L x embed_dim]. Pad positions hit the
// pinned zero row of the table.
template <typename T>
TensorPtr<T> embed(const std::vector<int>& ids, const EmbeddingParams<T>& p) {
    return take_rows(p.table, ids);
}

// ---------------------------------------------------------------------------
// 1-D convolution over time, output length == input length (zero padding at
// the borders), rectifier nonlinearity.
// ---------------------------------------------------------------------------

// Batched per-timestep form: steps[t] is [B x in_dim]; returns [B x filters]
// per t. A tap outside [0, L) contributes nothing (zero padding).
template <typename T>
std::vector<TensorPtr<T>> conv1d_same_steps(const std::vector<TensorPtr<T>>& steps, const ConvParams<T>& p) {
    if (steps.empty()) throw ContractError("conv1d_same on an empty sequence");
    const int width = p.kernels->shape[1];
    const int in_dim = p.kernels->shape[2];
    if (width % 2 == 0) throw ConfigError("conv kernel width must be odd, got " + std::to_string(width));
    for (const auto& s : steps)
        if (s->cols() != in_dim)
            throw ShapeError("conv input width " + s->shape_str() + " does not match kernels " +
                             p.kernels->shape_str());
    const int L = static_cast<int>(steps.size());
    const int center = width / 2;
    std::vector<TensorPtr<T>> taps(width);
    for (int k = 0; k < width; ++k) taps[k] = conv_tap(p.kernels, k);
    std::vector<TensorPtr<T>> out(L);
    for (int t = 0; t < L; ++t) {
        TensorPtr<T> acc;
        for (int k = 0; k < width; ++k) {
            const int src = t + k - center;
            if (src < 0 || src >= L) continue;
            auto term = matmul(steps[src], taps[k]);
            acc = acc ? add(acc, term) : term;
        }
        if (p.bias) acc = add_row_bias(acc, p.bias);
        out[t] = relu(acc);
    }
    return out;
}

// Single-sequence form: x is [L x in_dim] -> [L x filters].
template <typename T>
TensorPtr<T> conv1d_same(const TensorPtr<T>& x, const ConvParams<T>& p) {
    detail::require_rank2(x, "conv1d_same");
    std::vector<TensorPtr<T>> steps(x->shape[0]);
    for (int t = 0; t < x->shape[0]; ++t) steps[t] = take_rows(x, {t});
    return concat(conv1d_same_steps(steps, p), 0);
}

// ---------------------------------------------------------------------------
// GRU. Gate convention: update gate z == 1 carries the previous state through
// unchanged; the candidate enters with weight (1 - z).
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> gru_cell(const TensorPtr<T>& x_t, const TensorPtr<T>& h_prev, const GruParams<T>& p) {
    detail::require_rank2(x_t, "gru_cell");
    detail::require_rank2(h_prev, "gru_cell");
    if (x_t->shape[1] != p.in_dim() || h_prev->shape[1] != p.hidden() || x_t->shape[0] != h_prev->shape[0])
        throw ShapeError("gru_cell got x " + x_t->shape_str() + ", h " + h_prev->shape_str() +
                         " for weights " + p.w_r->shape_str());
    auto u = concat<T>({h_prev, x_t}, 1);
    auto r = sigmoid(detail::linear(u, p.w_r, p.b_r));
    auto z = sigmoid(detail::linear(u, p.w_z, p.b_z));
    auto u_reset = concat<T>({mul(r, h_prev), x_t}, 1);
    auto h_cand = tanh(detail::linear(u_reset, p.w_h, p.b_h));
    return add(mul(z, h_prev), mul(one_minus(z), h_cand));
}

// Batched unrolled GRU; state starts at zero and is carried through unchanged
// at masked positions, whose outputs therefore repeat the carried state.
template <typename T>
std::vector<TensorPtr<T>> gru_layer_steps(const std::vector<TensorPtr<T>>& steps, const GruParams<T>& p,
                                          const BatchMask& mask) {
    if (steps.empty()) throw ContractError("gru_layer on an empty sequence");
    const int B = steps[0]->shape[0];
    if (mask.batch != B || mask.len != static_cast<int>(steps.size()))
        throw ShapeError("gru_layer mask is " + std::to_string(mask.batch) + " x " + std::to_string(mask.len) +
                         " for a " + std::to_string(B) + " x " + std::to_string(steps.size()) + " batch");
    auto h = Tensor<T>::zeros({B, p.hidden()});
    std::vector<TensorPtr<T>> out(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
        auto cand = gru_cell(steps[t], h, p);
        auto col = mask.col(static_cast<int>(t));
        h = all_set(col) ? cand : select_rows(cand, h, col);
        out[t] = h;
    }
    return out;
}

// Single-sequence form: x is [L x in_dim] -> [L x hidden].
template <typename T>
TensorPtr<T> gru_layer(const TensorPtr<T>& x, const GruParams<T>& p, const PadMask& mask) {
    detail::require_rank2(x, "gru_layer");
    if (static_cast<int>(mask.size()) != x->shape[0])
        throw ShapeError("gru_layer mask length " + std::to_string(mask.size()) + " for input " + x->shape_str());
    std::vector<TensorPtr<T>> steps(x->shape[0]);
    for (int t = 0; t < x->shape[0]; ++t) steps[t] = take_rows(x, {t});
    return concat(gru_layer_steps(steps, p, BatchMask::single(mask)), 0);
}

// ---------------------------------------------------------------------------
// LSTM / BiLSTM
// ---------------------------------------------------------------------------

template <typename T>
std::pair<TensorPtr<T>, TensorPtr<T>> lstm_cell(const TensorPtr<T>& x_t, const TensorPtr<T>& h_prev,
                                                const TensorPtr<T>& c_prev, const LstmParams<T>& p) {
    detail::require_rank2(x_t, "lstm_cell");
    detail::require_rank2(h_prev, "lstm_cell");
    detail::require_rank2(c_prev, "lstm_cell");
    if (x_t->shape[1] != p.in_dim() || h_prev->shape[1] != p.hidden() || c_prev->shape[1] != p.hidden() ||
        x_t->shape[0] != h_prev->shape[0] || x_t->shape[0] != c_prev->shape[0])
        throw ShapeError("lstm_cell got x " + x_t->shape_str() + ", h " + h_prev->shape_str() + ", c " +
                         c_prev->shape_str() + " for weights " + p.w_i->shape_str());
    auto u = concat<T>({h_prev, x_t}, 1);
    auto i = sigmoid(detail::linear(u, p.w_i, p.b_i));
    auto f = sigmoid(detail::linear(u, p.w_f, p.b_f));
    auto o = sigmoid(detail::linear(u, p.w_o, p.b_o));
    auto c_cand = tanh(detail::linear(u, p.w_c, p.b_c));
    auto c = add(mul(f, c_prev), mul(i, c_cand));
    auto h = mul(o, tanh(c));
    return {h, c};
}

namespace detail {
// One direction of an unrolled LSTM over [B x in_dim] steps; `reversed` walks
// right-to-left. Masked positions carry both h and c through unchanged.
template <typename T>
std::vector<TensorPtr<T>> lstm_direction(const std::vector<TensorPtr<T>>& steps, const LstmParams<T>& p,
                                         const BatchMask& mask, bool reversed) {
    const int B = steps[0]->shape[0];
    const int L = static_cast<int>(steps.size());
    auto h = Tensor<T>::zeros({B, p.hidden()});
    auto c = Tensor<T>::zeros({B, p.hidden()});
    std::vector<TensorPtr<T>> out(L);
    for (int i = 0; i < L; ++i) {
        const int t = reversed ? L - 1 - i : i;
        auto [h_new, c_new] = lstm_cell(steps[t], h, c, p);
        auto col = mask.col(t);
        if (all_set(col)) {
            h = h_new;
            c = c_new;
        } else {
            h = select_rows(h_new, h, col);
            c = select_rows(c_new, c, col);
        }
        out[t] = h;
    }
    return out;
}
}  // namespace detail

// Batched BiLSTM: per timestep, the forward and backward hidden states are
// concatenated, giving [B x 2*hidden] per step.
template <typename T>
std::vector<TensorPtr<T>> bilstm_layer_steps(const std::vector<TensorPtr<T>>& steps, const LstmParams<T>& fwd,
                                             const LstmParams<T>& bwd, const BatchMask& mask) {
    if (steps.empty()) throw ContractError("bilstm_layer on an empty sequence");
    if (fwd.hidden() != bwd.hidden() || fwd.in_dim() != bwd.in_dim())
        throw ShapeError("bilstm directions disagree: " + fwd.w_i->shape_str() + " vs " + bwd.w_i->shape_str());
    const int B = steps[0]->shape[0];
    if (mask.batch != B || mask.len != static_cast<int>(steps.size()))
        throw ShapeError("bilstm_layer mask is " + std::to_string(mask.batch) + " x " + std::to_string(mask.len) +
                         " for a " + std::to_string(B) + " x " + std::to_string(steps.size()) + " batch");
    auto out_f = detail::lstm_direction(steps, fwd, mask, false);
    auto out_b = detail::lstm_direction(steps, bwd, mask, true);
    std::vector<TensorPtr<T>> out(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) out[t] = concat<T>({out_f[t], out_b[t]}, 1);
    return out;
}

// Single-sequence form: x is [L x in_dim] -> [L x 2*hidden].
template <typename T>
TensorPtr<T> bilstm_layer(const TensorPtr<T>& x, const LstmParams<T>& fwd, const LstmParams<T>& bwd,
                          const PadMask& mask) {
    detail::require_rank2(x, "bilstm_layer");
    if (static_cast<int>(mask.size()) != x->shape[0])
        throw ShapeError("bilstm_layer mask length " + std::to_string(mask.size()) + " for input " + x->shape_str());
    std::vector<TensorPtr<T>> steps(x->shape[0]);
    for (int t = 0; t < x->shape[0]; ++t) steps[t] = take_rows(x, {t});
    return concat(bilstm_layer_steps(steps, fwd, bwd, BatchMask::single(mask)), 0);
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// softmax(q k^T / sqrt(d_k)) v with pad keys excluded (weight exactly 0).
template <typename T>
TensorPtr<T> scaled_dot_attention(const TensorPtr<T>& q, const TensorPtr<T>& k, const TensorPtr<T>& v,
                                  const PadMask& key_mask) {
    detail::require_rank2(q, "scaled_dot_attention");
    detail::require_rank2(k, "scaled_dot_attention");
    detail::require_rank2(v, "scaled_dot_attention");
    if (q->shape[1] != k->shape[1])
        throw ShapeError("attention query/key widths disagree: " + q->shape_str() + " vs " + k->shape_str());
    if (k->shape[0] != v->shape[0])
        throw ShapeError("attention key/value counts disagree: " + k->shape_str() + " vs " + v->shape_str());
    if (static_cast<int>(key_mask.size()) != k->shape[0])
        throw ShapeError("attention mask length " + std::to_string(key_mask.size()) + " for keys " + k->shape_str());
    const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q->shape[1]));
    auto scores = scale(matmul_nt(q, k), inv_sqrt_dk);
    auto weights = masked_softmax_rows(scores, key_mask);
    return matmul(weights, v);
}

// Multi-head attention over one sequence x [L x model_dim]: per-head q/k/v
// projections to head_dim, scaled dot-product attention per head, heads
// concatenated and mixed by the shared output projection.
template <typename T>
TensorPtr<T> multi_head_attention(const TensorPtr<T>& x, const MhaParams<T>& p, const PadMask& key_mask) {
    detail::require_rank2(x, "multi_head_attention");
    if (p.heads.empty()) throw ConfigError("multi_head_attention with zero heads");
    if (static_cast<int>(p.heads.size()) * p.head_dim != p.model_dim)
        throw ConfigError("attention dims do not factor: " + std::to_string(p.heads.size()) + " heads x " +
                          std::to_string(p.head_dim) + " != model dim " + std::to_string(p.model_dim));
    if (x->shape[1] != p.model_dim)
        throw ShapeError("multi_head_attention input " + x->shape_str() + " does not match model dim " +
                         std::to_string(p.model_dim));
    std::vector<TensorPtr<T>> per_head(p.heads.size());
    for (std::size_t i = 0; i < p.heads.size(); ++i) {
        auto q = matmul(x, p.heads[i].w_q);
        auto k = matmul(x, p.heads[i].w_k);
        auto v = matmul(x, p.heads[i].w_v);
        per_head[i] = scaled_dot_attention(q, k, v, key_mask);
    }
    return matmul(concat(per_head, 1), p.w_out);
}

// Mean over the unmasked rows of x [L x D] -> [1 x D], as a constant-weight
// matmul so the gradient flows only through x.
template <typename T>
TensorPtr<T> masked_mean_rows(const TensorPtr<T>& x, const PadMask& mask) {
    detail::require_rank2(x, "masked_mean_rows");
    if (static_cast<int>(mask.size()) != x->shape[0])
        throw ShapeError("masked_mean_rows mask length " + std::to_string(mask.size()) + " for input " +
                         x->shape_str());
    int live = 0;
    for (auto b : mask) live += b ? 1 : 0;
    if (live == 0) throw ContractError("masked_mean_rows: every position is masked");
    std::vector<T> w(mask.size(), T(0));
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (mask[t]) w[t] = T(1) / static_cast<T>(live);
    auto weights = Tensor<T>::create({1, static_cast<int>(mask.size())}, std::move(w));
    return matmul(weights, x);
}

}  // namespace sarc
