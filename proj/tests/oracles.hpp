#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written as direct scalar loops over the defining
// formulas, with nested-vector storage and loop orders chosen differently
// from the library kernels, sharing no code with them.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using LD = long double;
using Vec = std::vector<LD>;
using Mat = std::vector<Vec>;  // [rows][cols]

inline Mat zeros(int r, int c) { return Mat(r, Vec(c, 0.0L)); }

inline Mat random_mat(std::mt19937_64& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Mat m = zeros(r, c);
    for (auto& row : m)
        for (auto& v : row) v = static_cast<LD>(dist(rng));
    return m;
}

inline LD sigmoid(LD x) { return 1.0L / (1.0L + std::exp(-x)); }

// Plain i-j-k product (the library uses i-k-j loops or BLAS).
inline Mat matmul(const Mat& a, const Mat& b) {
    const int m = static_cast<int>(a.size());
    const int k = static_cast<int>(b.size());
    const int n = static_cast<int>(b[0].size());
    Mat c = zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            LD s = 0.0L;
            for (int p = 0; p < k; ++p) s += a[i][p] * b[p][j];
            c[i][j] = s;
        }
    return c;
}

// One GRU step straight from the gate equations, one batch row at a time.
// Weights are [hidden][hidden + in] and read the concatenation [h, x].
// A null bias pointer means the bias-free form.
inline Mat gru_cell(const Mat& x, const Mat& h, const Mat& wr, const Mat& wz, const Mat& wh, const Vec* br,
                    const Vec* bz, const Vec* bh) {
    const int B = static_cast<int>(x.size());
    const int H = static_cast<int>(wr.size());
    const int I = static_cast<int>(x[0].size());
    Mat out = zeros(B, H);
    for (int b = 0; b < B; ++b) {
        Vec u(H + I);
        for (int j = 0; j < H; ++j) u[j] = h[b][j];
        for (int j = 0; j < I; ++j) u[H + j] = x[b][j];
        Vec r(H), z(H);
        for (int j = 0; j < H; ++j) {
            LD sr = br ? (*br)[j] : 0.0L, sz = bz ? (*bz)[j] : 0.0L;
            for (int k = 0; k < H + I; ++k) {
                sr += wr[j][k] * u[k];
                sz += wz[j][k] * u[k];
            }
            r[j] = sigmoid(sr);
            z[j] = sigmoid(sz);
        }
        Vec ur(H + I);
        for (int j = 0; j < H; ++j) ur[j] = r[j] * h[b][j];
        for (int j = 0; j < I; ++j) ur[H + j] = x[b][j];
        for (int j = 0; j < H; ++j) {
            LD sc = bh ? (*bh)[j] : 0.0L;
            for (int k = 0; k < H + I; ++k) sc += wh[j][k] * ur[k];
            const LD cand = std::tanh(sc);
            out[b][j] = z[j] * h[b][j] + (1.0L - z[j]) * cand;
        }
    }
    return out;
}

// One LSTM step from the gate equations; returns {h, c}.
inline std::pair<Mat, Mat> lstm_cell(const Mat& x, const Mat& h, const Mat& c, const Mat& wi, const Mat& wf,
                                     const Mat& wo, const Mat& wc, const Vec* bi, const Vec* bf, const Vec* bo,
                                     const Vec* bc) {
    const int B = static_cast<int>(x.size());
    const int H = static_cast<int>(wi.size());
    const int I = static_cast<int>(x[0].size());
    Mat h_new = zeros(B, H), c_new = zeros(B, H);
    for (int b = 0; b < B; ++b) {
        Vec u(H + I);
        for (int j = 0; j < H; ++j) u[j] = h[b][j];
        for (int j = 0; j < I; ++j) u[H + j] = x[b][j];
        for (int j = 0; j < H; ++j) {
            LD si = bi ? (*bi)[j] : 0.0L, sf = bf ? (*bf)[j] : 0.0L;
            LD so = bo ? (*bo)[j] : 0.0L, sc = bc ? (*bc)[j] : 0.0L;
            for (int k = 0; k < H + I; ++k) {
                si += wi[j][k] * u[k];
                sf += wf[j][k] * u[k];
                so += wo[j][k] * u[k];
                sc += wc[j][k] * u[k];
            }
            const LD gi = sigmoid(si), gf = sigmoid(sf), go = sigmoid(so);
            const LD cand = std::tanh(sc);
            c_new[b][j] = gf * c[b][j] + gi * cand;
            h_new[b][j] = go * std::tanh(c_new[b][j]);
        }
    }
    return {h_new, c_new};
}

struct LstmWeights {
    Mat wi, wf, wo, wc;
    const Vec *bi = nullptr, *bf = nullptr, *bo = nullptr, *bc = nullptr;
};

// Bidirectional LSTM over one sequence x[L][in] with a validity mask: each
// direction carries state through masked steps unchanged, and the per-step
// outputs are [forward h, backward h] concatenated.
inline Mat bilstm_layer(const Mat& x, const LstmWeights& fwd, const LstmWeights& bwd,
                        const std::vector<std::uint8_t>& mask) {
    const int L = static_cast<int>(x.size());
    const int H = static_cast<int>(fwd.wi.size());
    auto run = [&](const LstmWeights& w, bool reversed) {
        Mat outs = zeros(L, H);
        Mat h = zeros(1, H), c = zeros(1, H);
        for (int i = 0; i < L; ++i) {
            const int t = reversed ? L - 1 - i : i;
            Mat xt(1, x[t]);
            auto [hn, cn] = lstm_cell(xt, h, c, w.wi, w.wf, w.wo, w.wc, w.bi, w.bf, w.bo, w.bc);
            if (mask[t]) {
                h = hn;
                c = cn;
            }
            outs[t] = h[0];
        }
        return outs;
    };
    Mat f = run(fwd, false), b = run(bwd, true);
    Mat out = zeros(L, 2 * H);
    for (int t = 0; t < L; ++t) {
        for (int j = 0; j < H; ++j) {
            out[t][j] = f[t][j];
            out[t][H + j] = b[t][j];
        }
    }
    return out;
}

// Same-length 1-D convolution with rectifier: out[t][f] sums kernel taps over
// the centered window, skipping positions outside the sequence.
inline Mat conv1d_same(const Mat& x, const std::vector<Mat>& kernels, const Vec* bias) {
    const int L = static_cast<int>(x.size());
    const int F = static_cast<int>(kernels.size());
    const int W = static_cast<int>(kernels[0].size());
    const int E = static_cast<int>(x[0].size());
    const int center = W / 2;
    Mat out = zeros(L, F);
    for (int t = 0; t < L; ++t)
        for (int f = 0; f < F; ++f) {
            LD s = bias ? (*bias)[f] : 0.0L;
            for (int k = 0; k < W; ++k) {
                const int src = t + k - center;
                if (src < 0 || src >= L) continue;
                for (int e = 0; e < E; ++e) s += kernels[f][k][e] * x[src][e];
            }
            out[t][f] = s > 0.0L ? s : 0.0L;
        }
    return out;
}

// softmax(q kT / sqrt(dk)) v with masked keys excluded, computed row by row.
inline Mat scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v,
                                const std::vector<std::uint8_t>& key_mask) {
    const int Lq = static_cast<int>(q.size());
    const int Lk = static_cast<int>(k.size());
    const int D = static_cast<int>(q[0].size());
    const int Dv = static_cast<int>(v[0].size());
    const LD scale = 1.0L / std::sqrt(static_cast<LD>(D));
    Mat out = zeros(Lq, Dv);
    for (int i = 0; i < Lq; ++i) {
        Vec score(Lk, 0.0L);
        LD mx = -1e30L;
        for (int j = 0; j < Lk; ++j) {
            for (int d = 0; d < D; ++d) score[j] += q[i][d] * k[j][d];
            score[j] *= scale;
            if (key_mask[j] && score[j] > mx) mx = score[j];
        }
        Vec w(Lk, 0.0L);
        LD sum = 0.0L;
        for (int j = 0; j < Lk; ++j)
            if (key_mask[j]) {
                w[j] = std::exp(score[j] - mx);
                sum += w[j];
            }
        for (int j = 0; j < Lk; ++j) w[j] /= sum;
        for (int j = 0; j < Lk; ++j)
            for (int d = 0; d < Dv; ++d) out[i][d] += w[j] * v[j][d];
    }
    return out;
}

struct MhaWeights {
    std::vector<Mat> wq, wk, wv;  // per head, each [model_dim][head_dim]
    Mat w_out;                    // [(heads*head_dim)][model_dim]
};

inline Mat multi_head_attention(const Mat& x, const MhaWeights& w, const std::vector<std::uint8_t>& key_mask) {
    const int L = static_cast<int>(x.size());
    const int H = static_cast<int>(w.wq.size());
    const int dk = static_cast<int>(w.wq[0][0].size());
    Mat cat = zeros(L, H * dk);
    for (int h = 0; h < H; ++h) {
        Mat q = matmul(x, w.wq[h]), k = matmul(x, w.wk[h]), v = matmul(x, w.wv[h]);
        Mat head = scaled_dot_attention(q, k, v, key_mask);
        for (int t = 0; t < L; ++t)
            for (int d = 0; d < dk; ++d) cat[t][h * dk + d] = head[t][d];
    }
    return matmul(cat, w.w_out);
}

// Scalar Adam recurrence with decoupled decay, replayed step by step.
inline LD adam_scalar(LD theta, const Vec& grads, LD alpha, LD beta1, LD beta2, LD eps, LD decay) {
    LD m = 0.0L, v = 0.0L;
    for (std::size_t step = 1; step <= grads.size(); ++step) {
        const LD g = grads[step - 1];
        m = beta1 * m + (1.0L - beta1) * g;
        v = beta2 * v + (1.0L - beta2) * g * g;
        const LD mh = m / (1.0L - std::pow(beta1, static_cast<LD>(step)));
        const LD vh = v / (1.0L - std::pow(beta2, static_cast<LD>(step)));
        theta -= alpha * mh / (std::sqrt(vh) + eps);
        theta -= alpha * decay * theta;
    }
    return theta;
}

// Mean negative log softmax probability of the true class, direct formula.
inline LD cross_entropy(const Mat& logits, const std::vector<int>& labels) {
    LD total = 0.0L;
    for (std::size_t b = 0; b < logits.size(); ++b) {
        LD denom = 0.0L;
        for (LD l : logits[b]) denom += std::exp(l);
        const LD p = std::exp(logits[b][labels[b]]) / denom;
        total += -std::log(p);
    }
    return total / static_cast<LD>(logits.size());
}

}  // namespace oracle
