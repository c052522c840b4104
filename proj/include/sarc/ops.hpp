#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sarc/tensor.hpp"

#ifdef SARC_WITH_BLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace sarc {
namespace detail {

#ifdef SARC_WITH_BLAS
inline void pin_blas_threads() {
    // One thread keeps every reduction order fixed, which the reproducibility
    // contract (bitwise-identical runs) depends on.
    static const bool done = [] { openblas_set_num_threads(1); return true; }();
    (void)done;
}
#endif

// C[m x n] (+)= op(A)[m x k] * op(B)[k x n], all row-major with natural
// leading dimensions. beta is 0 (overwrite) or 1 (accumulate).
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c, T beta) {
#ifdef SARC_WITH_BLAS
    if constexpr (std::is_same_v<T, float> || std::is_same_v<T, double>) {
        pin_blas_threads();
        const int lda = trans_a ? m : k;
        const int ldb = trans_b ? k : n;
        if constexpr (std::is_same_v<T, float>)
            cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                        trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b, ldb, beta, c, n);
        else
            cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                        trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b, ldb, beta, c, n);
        return;
    }
#endif
    if (beta == T(0))
        for (std::size_t i = 0, e = static_cast<std::size_t>(m) * n; i < e; ++i) c[i] = T(0);
    auto idx_a = [&](int r, int col) { return trans_a ? static_cast<std::size_t>(col) * m + r
                                                     : static_cast<std::size_t>(r) * k + col; };
    auto idx_b = [&](int r, int col) { return trans_b ? static_cast<std::size_t>(col) * k + r
                                                      : static_cast<std::size_t>(r) * n + col; };
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const T av = a[idx_a(i, p)];
            if (av == T(0)) continue;
            for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i) * n + j] += av * b[idx_b(p, j)];
        }
}

template <typename T>
void require_rank2(const TensorPtr<T>& t, const char* op) {
    if (t->rank() != 2) throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " + t->shape_str());
}

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* op) {
    if (a->shape != b->shape)
        throw ShapeError(std::string(op) + " shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

// out = a * b for a[m x k], b[k x n].
template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a->shape[1] != b->shape[0])
        throw ShapeError("matmul inner dimensions disagree: " + a->shape_str() + " vs " + b->shape_str());
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<T> out(static_cast<std::size_t>(m) * n);
    detail::gemm<T>(false, false, m, n, k, a->data.data(), b->data.data(), out.data(), T(0));
    auto node = make_node<T>({m, n}, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b, m, n, k] {
            const T* g = self->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                detail::gemm<T>(false, true, m, k, n, g, b->data.data(), a->grad.data(), T(1));
            }
            if (b->requires_grad) {
                b->ensure_grad();
                detail::gemm<T>(true, false, k, n, m, a->data.data(), g, b->grad.data(), T(1));
            }
        };
    return node;
}

// out = a * b^T for a[m x k], b[n x k]. The natural "rows through a weight
// matrix stored output-major" form; avoids materializing transposes.
template <typename T>
TensorPtr<T> matmul_nt(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_rank2(a, "matmul_nt");
    detail::require_rank2(b, "matmul_nt");
    if (a->shape[1] != b->shape[1])
        throw ShapeError("matmul_nt inner dimensions disagree: " + a->shape_str() + " vs " + b->shape_str());
    const int m = a->shape[0], k = a->shape[1], n = b->shape[0];
    std::vector<T> out(static_cast<std::size_t>(m) * n);
    detail::gemm<T>(false, true, m, n, k, a->data.data(), b->data.data(), out.data(), T(0));
    auto node = make_node<T>({m, n}, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b, m, n, k] {
            const T* g = self->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                detail::gemm<T>(false, false, m, k, n, g, b->data.data(), a->grad.data(), T(1));
            }
            if (b->requires_grad) {
                b->ensure_grad();
                detail::gemm<T>(true, false, n, k, m, g, a->data.data(), b->grad.data(), T(1));
            }
        };
    return node;
}

template <typename T>
TensorPtr<T> transpose(const TensorPtr<T>& a) {
    detail::require_rank2(a, "transpose");
    const int m = a->shape[0], n = a->shape[1];
    std::vector<T> out(a->size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = a->at(i, j);
    auto node = make_node<T>({n, m}, std::move(out), {a});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, m, n] {
            a->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) a->grad[static_cast<std::size_t>(i) * n + j] += self->grad[static_cast<std::size_t>(j) * m + i];
        };
    return node;
}

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<T> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    auto node = make_node<T>(a->shape, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b] {
            if (a->requires_grad) a->accum_grad(self->grad.data(), self->grad.size());
            if (b->requires_grad) b->accum_grad(self->grad.data(), self->grad.size());
        };
    return node;
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<T> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    auto node = make_node<T>(a->shape, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b] {
            if (a->requires_grad) a->accum_grad(self->grad.data(), self->grad.size());
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) b->grad[i] -= self->grad[i];
            }
        };
    return node;
}

// Elementwise (Hadamard) product; shapes must match exactly.
template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<T> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    auto node = make_node<T>(a->shape, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) a->grad[i] += self->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < self->grad.size(); ++i) b->grad[i] += self->grad[i] * a->data[i];
            }
        };
    return node;
}

// out = scale_by * x + shift, scalar coefficients (the only scalar-by-tensor
// broadcasting the core allows).
template <typename T>
TensorPtr<T> affine(const TensorPtr<T>& x, T scale_by, T shift) {
    std::vector<T> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale_by * x->data[i] + shift;
    auto node = make_node<T>(x->shape, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x, scale_by] {
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) x->grad[i] += scale_by * self->grad[i];
        };
    return node;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, T c) {
    return affine(x, c, T(0));
}

template <typename T>
TensorPtr<T> one_minus(const TensorPtr<T>& x) {
    return affine(x, T(-1), T(1));
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
    std::vector<T> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(x->data[i]);
    auto node = make_node<T>(x->shape, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x] {
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                const T y = self->data[i];
                x->grad[i] += self->grad[i] * y * (T(1) - y);
            }
        };
    return node;
}

template <typename T>
TensorPtr<T> tanh(const TensorPtr<T>& x) {
    std::vector<T> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->data[i]);
    auto node = make_node<T>(x->shape, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x] {
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) {
                const T y = self->data[i];
                x->grad[i] += self->grad[i] * (T(1) - y * y);
            }
        };
    return node;
}

template <typename T>
TensorPtr<T> relu(const TensorPtr<T>& x) {
    std::vector<T> out(x->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    auto node = make_node<T>(x->shape, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x] {
            x->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                if (x->data[i] > T(0)) x->grad[i] += self->grad[i];
        };
    return node;
}

// Adds bias[n] to every row of x[m x n].
template <typename T>
TensorPtr<T> add_row_bias(const TensorPtr<T>& x, const TensorPtr<T>& bias) {
    detail::require_rank2(x, "add_row_bias");
    if (bias->rank() != 1 || bias->shape[0] != x->shape[1])
        throw ShapeError("add_row_bias needs bias [" + std::to_string(x->shape[1]) + "], got " +
                         bias->shape_str() + " for input " + x->shape_str());
    const int m = x->shape[0], n = x->shape[1];
    std::vector<T> out(x->size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = x->at(i, j) + bias->data[j];
    auto node = make_node<T>({m, n}, std::move(out), {x, bias});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x, bias, m, n] {
            if (x->requires_grad) x->accum_grad(self->grad.data(), self->grad.size());
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) bias->grad[j] += self->grad[static_cast<std::size_t>(i) * n + j];
            }
        };
    return node;
}

namespace detail {
// In-place max-subtracted softmax over a strided slice, plus the shared
// backward rule dx_i = y_i * (g_i - sum_j g_j y_j).
template <typename T>
void softmax_slice(const T* x, T* y, int n, std::size_t stride) {
    T mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    T sum = T(0);
    for (int i = 0; i < n; ++i) {
        const T e = std::exp(x[i * stride] - mx);
        y[i * stride] = e;
        sum += e;
    }
    for (int i = 0; i < n; ++i) y[i * stride] /= sum;
}

template <typename T>
void softmax_slice_backward(const T* y, const T* g, T* gx, int n, std::size_t stride) {
    T dot = T(0);
    for (int i = 0; i < n; ++i) dot += g[i * stride] * y[i * stride];
    for (int i = 0; i < n; ++i) gx[i * stride] += y[i * stride] * (g[i * stride] - dot);
}
}  // namespace detail

// Softmax along `axis` of a rank-1 or rank-2 tensor.
template <typename T>
TensorPtr<T> softmax(const TensorPtr<T>& x, int axis) {
    if (axis < 0 || axis >= x->rank())
        throw ContractError("softmax axis " + std::to_string(axis) + " out of range for " + x->shape_str());
    if (x->rank() > 2) throw ShapeError("softmax supports rank 1 or 2, got " + x->shape_str());
    std::vector<T> out(x->size());
    const int m = x->rank() == 2 ? x->shape[0] : 1;
    const int n = x->rank() == 2 ? x->shape[1] : x->shape[0];
    const bool along_rows = (x->rank() == 1) || axis == 1;
    if (along_rows)
        for (int i = 0; i < m; ++i)
            detail::softmax_slice(x->data.data() + static_cast<std::size_t>(i) * n,
                                  out.data() + static_cast<std::size_t>(i) * n, n, 1);
    else
        for (int j = 0; j < n; ++j) detail::softmax_slice(x->data.data() + j, out.data() + j, m, n);
    auto node = make_node<T>(x->shape, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x, m, n, along_rows] {
            x->ensure_grad();
            if (along_rows)
                for (int i = 0; i < m; ++i)
                    detail::softmax_slice_backward(self->data.data() + static_cast<std::size_t>(i) * n,
                                                   self->grad.data() + static_cast<std::size_t>(i) * n,
                                                   x->grad.data() + static_cast<std::size_t>(i) * n, n, 1);
            else
                for (int j = 0; j < n; ++j)
                    detail::softmax_slice_backward(self->data.data() + j, self->grad.data() + j,
                                                   x->grad.data() + j, m, n);
        };
    return node;
}

// Row-wise softmax over the key-mask-true columns of scores[m x n]; masked
// columns get weight exactly 0. Throws if the mask excludes every key.
template <typename T>
TensorPtr<T> masked_softmax_rows(const TensorPtr<T>& scores, const std::vector<std::uint8_t>& key_mask) {
    detail::require_rank2(scores, "masked_softmax_rows");
    const int m = scores->shape[0], n = scores->shape[1];
    if (static_cast<int>(key_mask.size()) != n)
        throw ShapeError("masked_softmax_rows mask length " + std::to_string(key_mask.size()) +
                         " does not match " + std::to_string(n) + " keys");
    int live = 0;
    for (auto b : key_mask) live += b ? 1 : 0;
    if (live == 0) throw ContractError("masked_softmax_rows: mask excludes every key");
    std::vector<T> out(scores->size(), T(0));
    for (int i = 0; i < m; ++i) {
        const T* row = scores->data.data() + static_cast<std::size_t>(i) * n;
        T* yrow = out.data() + static_cast<std::size_t>(i) * n;
        T mx = T(0);
        bool first = true;
        for (int j = 0; j < n; ++j)
            if (key_mask[j]) { mx = first ? row[j] : std::max(mx, row[j]); first = false; }
        T sum = T(0);
        for (int j = 0; j < n; ++j)
            if (key_mask[j]) { yrow[j] = std::exp(row[j] - mx); sum += yrow[j]; }
        for (int j = 0; j < n; ++j)
            if (key_mask[j]) yrow[j] /= sum;
    }
    auto node = make_node<T>({m, n}, std::move(out), {scores});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), scores, key_mask, m, n] {
            scores->ensure_grad();
            // y is 0 at masked columns, so the unrestricted rule already sends
            // them zero gradient.
            for (int i = 0; i < m; ++i)
                detail::softmax_slice_backward(self->data.data() + static_cast<std::size_t>(i) * n,
                                               self->grad.data() + static_cast<std::size_t>(i) * n,
                                               scores->grad.data() + static_cast<std::size_t>(i) * n, n, 1);
        };
    return node;
}

// Concatenates tensors of equal rank along `axis`; all other dims must match.
template <typename T>
TensorPtr<T> concat(const std::vector<TensorPtr<T>>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat of an empty tensor list");
    const int rank = parts[0]->rank();
    if (axis < 0 || axis >= rank)
        throw ContractError("concat axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    int axis_total = 0;
    for (const auto& p : parts) {
        if (p->rank() != rank)
            throw ShapeError("concat rank mismatch: " + parts[0]->shape_str() + " vs " + p->shape_str());
        for (int d = 0; d < rank; ++d)
            if (d != axis && p->shape[d] != parts[0]->shape[d])
                throw ShapeError("concat shape mismatch along dim " + std::to_string(d) + ": " +
                                 parts[0]->shape_str() + " vs " + p->shape_str());
        axis_total += p->shape[axis];
    }
    std::vector<int> out_shape = parts[0]->shape;
    out_shape[axis] = axis_total;
    std::size_t outer = 1, tail = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < rank; ++d) tail *= out_shape[d];
    std::size_t out_size = outer * axis_total * tail;
    std::vector<T> out(out_size);
    std::size_t offset = 0;  // in elements, within one outer block
    for (const auto& p : parts) {
        const std::size_t block = static_cast<std::size_t>(p->shape[axis]) * tail;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p->data.data() + o * block, block, out.data() + o * (axis_total * tail) + offset);
        offset += block;
    }
    auto node = make_node<T>(std::move(out_shape), std::move(out), parts);
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), parts, outer, axis_total, tail, axis] {
            (void)axis;
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t block = static_cast<std::size_t>(p->shape[axis]) * tail;
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const T* g = self->grad.data() + o * (static_cast<std::size_t>(axis_total) * tail) + offset;
                        T* dst = p->grad.data() + o * block;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
                    }
                }
                offset += block;
            }
        };
    return node;
}

// Sum of all elements, as a scalar node.
template <typename T>
TensorPtr<T> sum_all(const TensorPtr<T>& x) {
    T s = T(0);
    for (const T& v : x->data) s += v;
    auto node = make_node<T>({1}, {s}, {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x] {
            x->ensure_grad();
            const T g = self->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    return node;
}

// out[i, :] = x[ids[i], :]. Rows may repeat; backward scatter-adds.
template <typename T>
TensorPtr<T> take_rows(const TensorPtr<T>& x, const std::vector<int>& ids) {
    detail::require_rank2(x, "take_rows");
    if (ids.empty()) throw ContractError("take_rows with an empty id list");
    const int n = x->shape[1], rows = x->shape[0];
    for (int id : ids)
        if (id < 0 || id >= rows)
            throw IndexError("row id " + std::to_string(id) + " out of range for " + x->shape_str());
    std::vector<T> out(ids.size() * static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(x->data.data() + static_cast<std::size_t>(ids[i]) * n, n, out.data() + i * n);
    auto node = make_node<T>({static_cast<int>(ids.size()), n}, std::move(out), {x});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), x, ids, n] {
            x->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const T* g = self->grad.data() + i * n;
                T* dst = x->grad.data() + static_cast<std::size_t>(ids[i]) * n;
                for (int j = 0; j < n; ++j) dst[j] += g[j];
            }
        };
    return node;
}

// Stacks one row (index `row`) of each step tensor: out[t, :] = steps[t][row, :].
// Turns a list of per-timestep [B x D] tensors into one example's [L x D].
template <typename T>
TensorPtr<T> stack_timestep_rows(const std::vector<TensorPtr<T>>& steps, int row) {
    if (steps.empty()) throw ContractError("stack_timestep_rows with no steps");
    const int n = steps[0]->cols();
    for (const auto& s : steps) {
        detail::require_rank2(s, "stack_timestep_rows");
        if (s->shape[1] != n)
            throw ShapeError("stack_timestep_rows width mismatch: " + steps[0]->shape_str() + " vs " + s->shape_str());
        if (row < 0 || row >= s->shape[0])
            throw IndexError("row " + std::to_string(row) + " out of range for " + s->shape_str());
    }
    const int L = static_cast<int>(steps.size());
    std::vector<T> out(static_cast<std::size_t>(L) * n);
    for (int t = 0; t < L; ++t)
        std::copy_n(steps[t]->data.data() + static_cast<std::size_t>(row) * n, n, out.data() + static_cast<std::size_t>(t) * n);
    auto node = make_node<T>({L, n}, std::move(out), steps);
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), steps, row, n, L] {
            for (int t = 0; t < L; ++t) {
                const auto& s = steps[t];
                if (!s->requires_grad) continue;
                s->ensure_grad();
                const T* g = self->grad.data() + static_cast<std::size_t>(t) * n;
                T* dst = s->grad.data() + static_cast<std::size_t>(row) * n;
                for (int j = 0; j < n; ++j) dst[j] += g[j];
            }
        };
    return node;
}

// Row multiplexer: out row i = a row i where take_a[i], else b row i.
// Carries recurrent state through pad positions without breaking the graph.
template <typename T>
TensorPtr<T> select_rows(const TensorPtr<T>& a, const TensorPtr<T>& b, const std::vector<std::uint8_t>& take_a) {
    detail::require_same_shape(a, b, "select_rows");
    detail::require_rank2(a, "select_rows");
    const int m = a->shape[0], n = a->shape[1];
    if (static_cast<int>(take_a.size()) != m)
        throw ShapeError("select_rows mask length " + std::to_string(take_a.size()) + " does not match " +
                         a->shape_str());
    std::vector<T> out(a->size());
    for (int i = 0; i < m; ++i) {
        const auto& src = take_a[i] ? a : b;
        std::copy_n(src->data.data() + static_cast<std::size_t>(i) * n, n, out.data() + static_cast<std::size_t>(i) * n);
    }
    auto node = make_node<T>({m, n}, std::move(out), {a, b});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), a, b, take_a, m, n] {
            for (int i = 0; i < m; ++i) {
                const auto& dst = take_a[i] ? a : b;
                if (!dst->requires_grad) continue;
                dst->ensure_grad();
                const T* g = self->grad.data() + static_cast<std::size_t>(i) * n;
                T* d = dst->grad.data() + static_cast<std::size_t>(i) * n;
                for (int j = 0; j < n; ++j) d[j] += g[j];
            }
        };
    return node;
}

// One tap of a [filters x width x in_dim] kernel bank as an [in_dim x filters]
// matrix, so a tap application is a plain matmul.
template <typename T>
TensorPtr<T> conv_tap(const TensorPtr<T>& kernels, int tap) {
    if (kernels->rank() != 3)
        throw ShapeError("conv_tap expects [filters x width x in_dim] kernels, got " + kernels->shape_str());
    const int f = kernels->shape[0], w = kernels->shape[1], e = kernels->shape[2];
    if (tap < 0 || tap >= w) throw IndexError("conv tap " + std::to_string(tap) + " out of range for width " + std::to_string(w));
    std::vector<T> out(static_cast<std::size_t>(e) * f);
    for (int fi = 0; fi < f; ++fi)
        for (int ei = 0; ei < e; ++ei)
            out[static_cast<std::size_t>(ei) * f + fi] =
                kernels->data[(static_cast<std::size_t>(fi) * w + tap) * e + ei];
    auto node = make_node<T>({e, f}, std::move(out), {kernels});
    if (node->requires_grad)
        node->backward_fn = [self = node.get(), kernels, tap, f, w, e] {
            kernels->ensure_grad();
            for (int fi = 0; fi < f; ++fi)
                for (int ei = 0; ei < e; ++ei)
                    kernels->grad[(static_cast<std::size_t>(fi) * w + tap) * e + ei] +=
                        self->grad[static_cast<std::size_t>(ei) * f + fi];
        };
    return node;
}

// Central-difference gradient of f with respect to theta: (f(+h) - f(-h)) / 2h
// per coordinate. f must be a pure function of theta's current contents; theta
// is perturbed in place and restored exactly.
template <typename T>
std::vector<T> finite_diff_grad(const std::function<T()>& f, const TensorPtr<T>& theta, T h = T(1e-4)) {
    if (!(h > T(0))) throw ContractError("finite_diff_grad needs h > 0");
    std::vector<T> g(theta->size());
    for (std::size_t i = 0; i < theta->size(); ++i) {
        const T saved = theta->data[i];
        theta->data[i] = saved + h;
        const T fp = f();
        theta->data[i] = saved - h;
        const T fm = f();
        theta->data[i] = saved;
        if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
            throw NumericError("finite_diff_grad: objective returned a non-finite value");
        g[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

}  // namespace sarc
