#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "segicl/errors.hpp"

namespace segicl {

class Rng;

// Dense row-major tensor. Copies are shallow: data and grad are shared, so a
// parameter held by a model and the same parameter inside a backward closure
// see one buffer. Data is immutable after the creating op; only grad mutates.
template <typename T>
struct TensorBase {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad;  // non-null iff requires_grad
    bool requires_grad = false;
    std::uint64_t id = 0;  // creation order on the recording graph; 0 = leaf

    bool defined() const { return static_cast<bool>(data); }
    int rank() const { return static_cast<int>(shape.size()); }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    // Negative axes count from the back.
    int dim(int axis) const {
        const int r = rank();
        if (axis < 0) axis += r;
        if (axis < 0 || axis >= r)
            throw dimension_error("dim: axis out of range for rank " + std::to_string(r));
        return shape[static_cast<std::size_t>(axis)];
    }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T* gptr() { return grad->data(); }
    const T* gptr() const { return grad->data(); }

    T item() const {
        if (numel() != 1)
            throw contract_error("item: tensor is not scalar");
        return (*data)[0];
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }
};

using Tensor = TensorBase<float>;

// Define-by-run tape. Each op appends one record at creation, so the list is
// topological by construction; backward() replays it exactly once in reverse
// and then frees every record. One instance per thread; independent threads
// run independent graphs.
template <typename T>
class GraphT {
public:
    void record(const char* op, const std::vector<const TensorBase<T>*>& inputs,
                TensorBase<T>& out, std::function<void()> fn);
    void backward(TensorBase<T>& loss);
    void clear();

    std::size_t size() const { return nodes_.size(); }
    bool recording() const { return enabled_; }
    void set_recording(bool on) { enabled_ = on; }

    static GraphT& current();

private:
    struct Node {
        const char* op;
        std::function<void()> fn;
    };
    std::vector<Node> nodes_;
    std::uint64_t next_id_ = 1;
    bool enabled_ = true;
};

using Graph = GraphT<float>;

// Suspends recording on the current thread's graph while alive. Sampling and
// evaluation run under one of these so no activations are retained.
template <typename T>
class NoGradT {
public:
    NoGradT() : prev_(GraphT<T>::current().recording()) {
        GraphT<T>::current().set_recording(false);
    }
    ~NoGradT() { GraphT<T>::current().set_recording(prev_); }
    NoGradT(const NoGradT&) = delete;
    NoGradT& operator=(const NoGradT&) = delete;

private:
    bool prev_;
};

using NoGrad = NoGradT<float>;

// Leaf constructors.
template <typename T>
TensorBase<T> zeros(std::vector<int> shape, bool requires_grad = false);
template <typename T>
TensorBase<T> full(std::vector<int> shape, T value, bool requires_grad = false);
template <typename T>
TensorBase<T> from_vector(std::vector<int> shape, const std::vector<T>& values,
                          bool requires_grad = false);
template <typename T>
TensorBase<T> randn(Rng& rng, std::vector<int> shape, T stddev,
                    bool requires_grad = false);

// Leaf copy that shares nothing and tracks nothing.
template <typename T>
TensorBase<T> detach(const TensorBase<T>& x);

// 2D x 2D, or 3D x 3D with equal leading (group) extent.
template <typename T>
TensorBase<T> matmul(const TensorBase<T>& a, const TensorBase<T>& b);

template <typename T>
TensorBase<T> transpose(const TensorBase<T>& x);  // 2D
template <typename T>
TensorBase<T> permute(const TensorBase<T>& x, const std::vector<int>& axes);
template <typename T>
TensorBase<T> reshape(const TensorBase<T>& x, std::vector<int> shape);  // one -1 ok
template <typename T>
TensorBase<T> concat(const std::vector<TensorBase<T>>& xs, int axis);
template <typename T>
TensorBase<T> concat(std::initializer_list<TensorBase<T>> xs, int axis) {
    return concat(std::vector<TensorBase<T>>(xs), axis);
}
template <typename T>
TensorBase<T> slice(const TensorBase<T>& x, int axis, int start, int len);

template <typename T>
TensorBase<T> add(const TensorBase<T>& a, const TensorBase<T>& b);
template <typename T>
TensorBase<T> sub(const TensorBase<T>& a, const TensorBase<T>& b);
template <typename T>
TensorBase<T> mul(const TensorBase<T>& a, const TensorBase<T>& b);
template <typename T>
TensorBase<T> add_scalar(const TensorBase<T>& x, T c);
template <typename T>
TensorBase<T> mul_scalar(const TensorBase<T>& x, T c);

// x[..., n] + v[n]
template <typename T>
TensorBase<T> add_rowvec(const TensorBase<T>& x, const TensorBase<T>& v);
// x[B,C,H,W] + v[C] or + v[B,C] (broadcast over spatial dims)
template <typename T>
TensorBase<T> add_channels(const TensorBase<T>& x, const TensorBase<T>& v);
// x[G,m,n] + m2[m,n] (broadcast over the group axis)
template <typename T>
TensorBase<T> add_bcast0(const TensorBase<T>& x, const TensorBase<T>& m2);
// x[B,...] with batch slice b scaled by coef[b]
template <typename T>
TensorBase<T> scale_batch(const TensorBase<T>& x, const TensorBase<T>& coef);

template <typename T>
TensorBase<T> softmax(const TensorBase<T>& x, int axis);
template <typename T>
TensorBase<T> layer_norm(const TensorBase<T>& x, const TensorBase<T>& gain,
                         const TensorBase<T>& bias, T eps = T(1e-5));
template <typename T>
TensorBase<T> gelu(const TensorBase<T>& x);
template <typename T>
TensorBase<T> silu(const TensorBase<T>& x);

// 3x3 kernel, stride 1, zero padding 1; x[B,C,H,W], w[O,C,3,3] -> [B,O,H,W].
template <typename T>
TensorBase<T> conv2d(const TensorBase<T>& x, const TensorBase<T>& w);

// table[V,d], ids in [0,V) -> [len(ids), d]
template <typename T>
TensorBase<T> embedding_lookup(const TensorBase<T>& table, const std::vector<int>& ids);

template <typename T>
TensorBase<T> sum(const TensorBase<T>& x);
template <typename T>
TensorBase<T> mean(const TensorBase<T>& x);
template <typename T>
TensorBase<T> mse(const TensorBase<T>& a, const TensorBase<T>& b);
// logits[n,V], mean negative log-likelihood of targets.
template <typename T>
TensorBase<T> cross_entropy(const TensorBase<T>& logits, const std::vector<int>& targets);

// Runs reverse-mode accumulation on the current thread's graph, then frees it.
// Grads add across calls until explicitly zeroed.
template <typename T>
void backward(TensorBase<T>& loss);

}  // namespace segicl
