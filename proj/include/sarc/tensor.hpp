#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sarc/errors.hpp"

namespace sarc {

template <typename T>
struct Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

// Thread-local switch: while false, ops compute values but record nothing on
// the graph (used for evaluation/prediction so no closures pile up).
inline bool& autograd_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(autograd_enabled()) { autograd_enabled() = false; }
    ~NoGradGuard() { autograd_enabled() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major tensor, doubling as a node of the define-by-run graph.
// Ops allocate a fresh Tensor for their result; when any input requires
// gradients the op also stores its inputs in `parents` and a closure in
// `backward_fn` that routes the node's gradient to the inputs.
template <typename T>
struct Tensor : std::enable_shared_from_this<Tensor<T>> {
    std::vector<int> shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;   // sized lazily; same layout as data
    std::vector<TensorPtr<T>> parents;
    std::function<void()> backward_fn;

    Tensor(std::vector<int> s, std::vector<T> d, bool rg)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        std::size_t n = 1;
        for (int dim : shape) {
            if (dim < 1) throw ContractError("tensor dimensions must be >= 1, got " + shape_str());
            n *= static_cast<std::size_t>(dim);
        }
        if (shape.empty()) throw ContractError("tensor rank must be >= 1");
        if (n != data.size())
            throw ContractError("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str());
    }
    Tensor(const Tensor&) = delete;
    Tensor& operator=(const Tensor&) = delete;

    static TensorPtr<T> create(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
    }
    static TensorPtr<T> zeros(std::vector<int> shape, bool requires_grad = false) {
        std::size_t n = 1;
        for (int dim : shape) n *= static_cast<std::size_t>(dim < 0 ? 0 : dim);
        return create(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }
    static TensorPtr<T> full(std::vector<int> shape, T value, bool requires_grad = false) {
        std::size_t n = 1;
        for (int dim : shape) n *= static_cast<std::size_t>(dim < 0 ? 0 : dim);
        return create(std::move(shape), std::vector<T>(n, value), requires_grad);
    }
    static TensorPtr<T> scalar(T value, bool requires_grad = false) {
        return create({1}, {value}, requires_grad);
    }
    // Seeded uniform fill. Values are drawn in double and cast, so the same
    // seed produces numerically matching tensors across scalar instantiations.
    static TensorPtr<T> uniform(std::vector<int> shape, double lo, double hi, std::uint64_t seed,
                                bool requires_grad = false) {
        std::size_t n = 1;
        for (int dim : shape) n *= static_cast<std::size_t>(dim < 0 ? 0 : dim);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> dist(lo, hi);
        std::vector<T> data(n);
        for (auto& v : data) v = static_cast<T>(dist(rng));
        return create(std::move(shape), std::move(data), requires_grad);
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return size() == 1; }
    int rows() const { return shape[0]; }
    int cols() const { return rank() >= 2 ? shape[1] : 1; }
    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
        os << "]";
        return os.str();
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
    // Adds g (same layout as data) into this tensor's gradient.
    void accum_grad(const T* g, std::size_t n) {
        ensure_grad();
        for (std::size_t i = 0; i < n; ++i) grad[i] += g[i];
    }
};

// Creates the result node of an op: requires_grad is inherited from the inputs
// (and suppressed entirely under NoGradGuard), and inputs are retained as
// parents only when a backward pass could reach them.
template <typename T>
TensorPtr<T> make_node(std::vector<int> shape, std::vector<T> data, std::vector<TensorPtr<T>> parents) {
    bool rg = false;
    if (autograd_enabled())
        for (const auto& p : parents)
            if (p && p->requires_grad) { rg = true; break; }
    auto out = Tensor<T>::create(std::move(shape), std::move(data), rg);
    if (rg) out->parents = std::move(parents);
    return out;
}

// The recorded operations of one forward pass, in topological order (every
// node's parents precede it). Rebuilt from the loss node each pass; replaying
// it in reverse visits each node exactly once.
template <typename T>
class GradTape {
  public:
    static GradTape record(const TensorPtr<T>& root) {
        if (!root) throw ContractError("cannot record a tape from a null tensor");
        GradTape tape;
        tape.root_ = root;
        if (!root->requires_grad) return tape;  // nothing upstream to reach
        std::unordered_set<const Tensor<T>*> visited;
        // Iterative post-order DFS; recursion depth on an unrolled recurrent
        // graph would scale with sequence length times ops per step.
        std::vector<std::pair<TensorPtr<T>, std::size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root.get());
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->parents.size()) {
                TensorPtr<T> child = node->parents[next_child++];
                if (child && child->requires_grad && !visited.count(child.get())) {
                    visited.insert(child.get());
                    stack.emplace_back(std::move(child), 0);
                }
            } else {
                tape.order_.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    // Seeds d(root)/d(root) = 1 and runs every recorded backward rule in
    // reverse topological order. Gradients accumulate additively, so shared
    // subexpressions receive contributions from every use.
    void backward() {
        if (!root_) throw ContractError("backward on an empty tape");
        if (!root_->is_scalar())
            throw ContractError("backward requires a scalar loss, got shape " + root_->shape_str());
        if (!root_->requires_grad) return;
        root_->ensure_grad();
        root_->grad[0] += T(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it)
            if ((*it)->backward_fn) (*it)->backward_fn();
    }

    // Severs the graph so the nodes free without deep recursive destruction.
    void release() {
        for (auto& node : order_) {
            node->parents.clear();
            node->backward_fn = nullptr;
        }
        order_.clear();
        root_.reset();
    }

    std::size_t size() const { return order_.size(); }
    const std::vector<TensorPtr<T>>& nodes() const { return order_; }

  private:
    TensorPtr<T> root_;
    std::vector<TensorPtr<T>> order_;
};

// Records and immediately replays the tape for `loss`. The graph stays intact
// (callers that train in a loop should use GradTape directly and release()).
template <typename T>
void backward(const TensorPtr<T>& loss) {
    auto tape = GradTape<T>::record(loss);
    tape.backward();
}

}  // namespace sarc
