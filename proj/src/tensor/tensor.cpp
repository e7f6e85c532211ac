#include "segicl/tensor.hpp"

#include <cassert>
#include <cmath>
#include <cstring>

#include "segicl/kernels.hpp"
#include "segicl/rng.hpp"
#include "segicl/util.hpp"

namespace segicl {

namespace {

template <typename T>
TensorBase<T> alloc(std::vector<int> shape, bool rg) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0)
            throw dimension_error("tensor: bad extent in " + shape_to_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    TensorBase<T> t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<T>>(n, T(0));
    t.requires_grad = rg;
    if (rg) t.grad = std::make_shared<std::vector<T>>(n, T(0));
    return t;
}

template <typename T>
bool track(std::initializer_list<const TensorBase<T>*> ins) {
    if (!GraphT<T>::current().recording()) return false;
    for (const auto* t : ins)
        if (t->requires_grad) return true;
    return false;
}

template <typename T>
void check_finite(const char* op, const TensorBase<T>& t) {
    if (!finite_checks_enabled()) return;
    for (T v : *t.data)
        if (!std::isfinite(v))
            throw numeric_error(std::string(op) + ": non-finite output");
}

template <typename T>
void finish(const char* op, const std::vector<const TensorBase<T>*>& ins,
            TensorBase<T>& out, std::function<void()> fn) {
    check_finite(op, out);
    if (out.requires_grad)
        GraphT<T>::current().record(op, ins, out, std::move(fn));
}

template <typename T>
void require_same_shape(const char* op, const TensorBase<T>& a, const TensorBase<T>& b) {
    if (a.shape != b.shape)
        throw dimension_error(std::string(op) + ": shape mismatch " +
                              shape_to_string(a.shape) + " vs " +
                              shape_to_string(b.shape));
}

long prod(const std::vector<int>& v, int lo, int hi) {
    long p = 1;
    for (int i = lo; i < hi; ++i) p *= v[static_cast<std::size_t>(i)];
    return p;
}

int norm_axis(const char* op, int axis, int rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw dimension_error(std::string(op) + ": axis out of range for rank " +
                              std::to_string(rank));
    return axis;
}

}  // namespace

template <typename T>
void GraphT<T>::record(const char* op,
                       const std::vector<const TensorBase<T>*>& inputs,
                       TensorBase<T>& out, std::function<void()> fn) {
    if (!enabled_) return;
    out.id = next_id_++;
#ifndef NDEBUG
    // Creation order is the topological order; every input must precede its
    // consumer (leaves carry id 0).
    for (const auto* in : inputs) assert(in->id < out.id);
#else
    (void)inputs;
#endif
    nodes_.push_back(Node{op, std::move(fn)});
}

template <typename T>
void GraphT<T>::backward(TensorBase<T>& loss) {
    if (!loss.requires_grad)
        throw contract_error("backward: loss is not tracked by the graph");
    if (loss.numel() != 1)
        throw contract_error("backward: loss must be scalar, got " +
                             shape_to_string(loss.shape));
    (*loss.grad)[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
    clear();
}

template <typename T>
void GraphT<T>::clear() {
    nodes_.clear();
    next_id_ = 1;
}

template <typename T>
GraphT<T>& GraphT<T>::current() {
    static thread_local GraphT<T> g;
    return g;
}

template <typename T>
TensorBase<T> zeros(std::vector<int> shape, bool requires_grad) {
    return alloc<T>(std::move(shape), requires_grad);
}

template <typename T>
TensorBase<T> full(std::vector<int> shape, T value, bool requires_grad) {
    auto t = alloc<T>(std::move(shape), requires_grad);
    std::fill(t.data->begin(), t.data->end(), value);
    return t;
}

template <typename T>
TensorBase<T> from_vector(std::vector<int> shape, const std::vector<T>& values,
                          bool requires_grad) {
    auto t = alloc<T>(std::move(shape), requires_grad);
    if (t.numel() != values.size())
        throw dimension_error("from_vector: " + std::to_string(values.size()) +
                              " values for shape " + shape_to_string(t.shape));
    std::copy(values.begin(), values.end(), t.data->begin());
    return t;
}

template <typename T>
TensorBase<T> randn(Rng& rng, std::vector<int> shape, T stddev, bool requires_grad) {
    auto t = alloc<T>(std::move(shape), requires_grad);
    for (auto& v : *t.data) v = static_cast<T>(rng.normal()) * stddev;
    return t;
}

template <typename T>
TensorBase<T> detach(const TensorBase<T>& x) {
    auto t = alloc<T>(x.shape, false);
    *t.data = *x.data;
    return t;
}

template <typename T>
TensorBase<T> matmul(const TensorBase<T>& a, const TensorBase<T>& b) {
    if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3)))
        throw dimension_error("matmul: shape mismatch " + shape_to_string(a.shape) +
                              " x " + shape_to_string(b.shape));
    const bool batched = a.rank() == 3;
    const int g = batched ? a.shape[0] : 1;
    const int m = a.shape[batched ? 1 : 0];
    const int k = a.shape[batched ? 2 : 1];
    const int k2 = b.shape[batched ? 1 : 0];
    const int n = b.shape[batched ? 2 : 1];
    if (k != k2 || (batched && b.shape[0] != g))
        throw dimension_error("matmul: shape mismatch " + shape_to_string(a.shape) +
                              " x " + shape_to_string(b.shape));

    auto out = alloc<T>(batched ? std::vector<int>{g, m, n} : std::vector<int>{m, n},
                        track<T>({&a, &b}));
    for (int gi = 0; gi < g; ++gi)
        kern::gemm_nn(m, n, k, a.ptr() + static_cast<long>(gi) * m * k,
                      b.ptr() + static_cast<long>(gi) * k * n,
                      out.ptr() + static_cast<long>(gi) * m * n);

    finish<T>("matmul", {&a, &b}, out, [a, b, out, g, m, n, k]() {
        for (int gi = 0; gi < g; ++gi) {
            const T* gy = out.gptr() + static_cast<long>(gi) * m * n;
            if (a.requires_grad)
                kern::gemm_nt(m, k, n, gy, b.ptr() + static_cast<long>(gi) * k * n,
                              a.grad->data() + static_cast<long>(gi) * m * k);
            if (b.requires_grad)
                kern::gemm_tn(k, n, m, a.ptr() + static_cast<long>(gi) * m * k, gy,
                              b.grad->data() + static_cast<long>(gi) * k * n);
        }
    });
    return out;
}

template <typename T>
TensorBase<T> permute(const TensorBase<T>& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r)
        throw dimension_error("permute: " + std::to_string(axes.size()) +
                              " axes for rank " + std::to_string(r));
    std::vector<bool> used(static_cast<std::size_t>(r), false);
    std::vector<int> oshape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const int ax = norm_axis("permute", axes[static_cast<std::size_t>(i)], r);
        if (used[static_cast<std::size_t>(ax)])
            throw dimension_error("permute: duplicate axis " + std::to_string(ax));
        used[static_cast<std::size_t>(ax)] = true;
        oshape[static_cast<std::size_t>(i)] = x.shape[static_cast<std::size_t>(ax)];
    }

    std::vector<long> in_stride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_stride[static_cast<std::size_t>(i)] =
            in_stride[static_cast<std::size_t>(i + 1)] * x.shape[static_cast<std::size_t>(i + 1)];
    std::vector<long> out_stride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        out_stride[static_cast<std::size_t>(i)] =
            out_stride[static_cast<std::size_t>(i + 1)] * oshape[static_cast<std::size_t>(i + 1)];
    std::vector<long> map_stride(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i)
        map_stride[static_cast<std::size_t>(i)] =
            in_stride[static_cast<std::size_t>(norm_axis("permute", axes[static_cast<std::size_t>(i)], r))];

    auto out = alloc<T>(oshape, track<T>({&x}));
    const long total = static_cast<long>(out.numel());
    {
        const T* src = x.ptr();
        T* dst = out.ptr();
#pragma omp parallel for schedule(static)
        for (long o = 0; o < total; ++o) {
            long rem = o, in_flat = 0;
            for (int i = 0; i < r; ++i) {
                const long c = rem / out_stride[static_cast<std::size_t>(i)];
                rem -= c * out_stride[static_cast<std::size_t>(i)];
                in_flat += c * map_stride[static_cast<std::size_t>(i)];
            }
            dst[o] = src[in_flat];
        }
    }

    finish<T>("permute", {&x}, out, [x, out, out_stride, map_stride, r, total]() {
        if (!x.requires_grad) return;
        const T* gy = out.gptr();
        T* gx = x.grad->data();
        // The index map is a bijection, so parallel writes never collide.
#pragma omp parallel for schedule(static)
        for (long o = 0; o < total; ++o) {
            long rem = o, in_flat = 0;
            for (int i = 0; i < r; ++i) {
                const long c = rem / out_stride[static_cast<std::size_t>(i)];
                rem -= c * out_stride[static_cast<std::size_t>(i)];
                in_flat += c * map_stride[static_cast<std::size_t>(i)];
            }
            gx[in_flat] += gy[o];
        }
    });
    return out;
}

template <typename T>
TensorBase<T> transpose(const TensorBase<T>& x) {
    if (x.rank() != 2)
        throw dimension_error("transpose: expected rank 2, got " +
                              shape_to_string(x.shape));
    return permute(x, {1, 0});
}

template <typename T>
TensorBase<T> reshape(const TensorBase<T>& x, std::vector<int> shape) {
    long known = 1;
    int infer = -1;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
        if (shape[static_cast<std::size_t>(i)] == -1) {
            if (infer >= 0) throw dimension_error("reshape: multiple -1 extents");
            infer = i;
        } else {
            known *= shape[static_cast<std::size_t>(i)];
        }
    }
    const long n = static_cast<long>(x.numel());
    if (infer >= 0) {
        if (known == 0 || n % known != 0)
            throw dimension_error("reshape: cannot infer extent for " +
                                  shape_to_string(shape) + " from " +
                                  shape_to_string(x.shape));
        shape[static_cast<std::size_t>(infer)] = static_cast<int>(n / known);
        known *= shape[static_cast<std::size_t>(infer)];
    }
    if (known != n)
        throw dimension_error("reshape: size mismatch " + shape_to_string(x.shape) +
                              " -> " + shape_to_string(shape));

    // Shares the data buffer; only the grad buffer is fresh.
    TensorBase<T> out;
    out.shape = std::move(shape);
    out.data = x.data;
    out.requires_grad = track<T>({&x});
    if (out.requires_grad)
        out.grad = std::make_shared<std::vector<T>>(x.numel(), T(0));

    finish<T>("reshape", {&x}, out, [x, out, n]() {
        if (!x.requires_grad) return;
        const T* gy = out.gptr();
        T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gx[i] += gy[i];
    });
    return out;
}

template <typename T>
TensorBase<T> concat(const std::vector<TensorBase<T>>& xs, int axis) {
    if (xs.empty()) throw dimension_error("concat: no inputs");
    const int r = xs[0].rank();
    const int ax = norm_axis("concat", axis, r);
    int ntot = 0;
    for (const auto& x : xs) {
        if (x.rank() != r)
            throw dimension_error("concat: rank mismatch " + shape_to_string(x.shape) +
                                  " vs " + shape_to_string(xs[0].shape));
        for (int i = 0; i < r; ++i)
            if (i != ax && x.shape[static_cast<std::size_t>(i)] !=
                               xs[0].shape[static_cast<std::size_t>(i)])
                throw dimension_error("concat: shape mismatch " +
                                      shape_to_string(x.shape) + " vs " +
                                      shape_to_string(xs[0].shape));
        ntot += x.shape[static_cast<std::size_t>(ax)];
    }
    std::vector<int> oshape = xs[0].shape;
    oshape[static_cast<std::size_t>(ax)] = ntot;

    std::vector<const TensorBase<T>*> ins;
    bool rg = false;
    for (const auto& x : xs) {
        ins.push_back(&x);
        rg = rg || x.requires_grad;
    }
    rg = rg && GraphT<T>::current().recording();

    auto out = alloc<T>(oshape, rg);
    const long inner = prod(oshape, ax + 1, r);
    const long outer = prod(oshape, 0, ax);
    long off = 0;
    for (const auto& x : xs) {
        const long ni = x.shape[static_cast<std::size_t>(ax)];
        const T* src = x.ptr();
        T* dst = out.ptr();
#pragma omp parallel for schedule(static)
        for (long o = 0; o < outer; ++o)
            std::memcpy(dst + (o * ntot + off) * inner, src + o * ni * inner,
                        static_cast<std::size_t>(ni * inner) * sizeof(T));
        off += ni;
    }

    auto parts = xs;  // shallow copies keep the grad buffers alive
    finish<T>("concat", ins, out, [parts, out, outer, inner, ntot, ax]() {
        long off2 = 0;
        for (const auto& x : parts) {
            const long ni = x.shape[static_cast<std::size_t>(ax)];
            if (x.requires_grad) {
                const T* gy = out.gptr();
                T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
                for (long o = 0; o < outer; ++o) {
                    const T* s = gy + (o * ntot + off2) * inner;
                    T* d = gx + o * ni * inner;
                    for (long i = 0; i < ni * inner; ++i) d[i] += s[i];
                }
            }
            off2 += ni;
        }
    });
    return out;
}

template <typename T>
TensorBase<T> slice(const TensorBase<T>& x, int axis, int start, int len) {
    const int r = x.rank();
    const int ax = norm_axis("slice", axis, r);
    const int n = x.shape[static_cast<std::size_t>(ax)];
    if (start < 0 || len < 1 || start + len > n)
        throw dimension_error("slice: range [" + std::to_string(start) + ", " +
                              std::to_string(start + len) + ") out of bounds for " +
                              shape_to_string(x.shape));
    std::vector<int> oshape = x.shape;
    oshape[static_cast<std::size_t>(ax)] = len;

    auto out = alloc<T>(oshape, track<T>({&x}));
    const long inner = prod(x.shape, ax + 1, r);
    const long outer = prod(x.shape, 0, ax);
    {
        const T* src = x.ptr();
        T* dst = out.ptr();
#pragma omp parallel for schedule(static)
        for (long o = 0; o < outer; ++o)
            std::memcpy(dst + o * len * inner, src + (o * n + start) * inner,
                        static_cast<std::size_t>(len * inner) * sizeof(T));
    }

    finish<T>("slice", {&x}, out, [x, out, outer, inner, n, start, len]() {
        if (!x.requires_grad) return;
        const T* gy = out.gptr();
        T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
        for (long o = 0; o < outer; ++o) {
            const T* s = gy + o * len * inner;
            T* d = gx + (o * n + start) * inner;
            for (long i = 0; i < len * inner; ++i) d[i] += s[i];
        }
    });
    return out;
}

namespace {

// Shared shell for same-shape binary elementwise ops.
template <typename T, typename FwdFn, typename BwdFn>
TensorBase<T> ewise2(const char* op, const TensorBase<T>& a, const TensorBase<T>& b,
                     FwdFn fwd, BwdFn bwd) {
    require_same_shape(op, a, b);
    auto out = alloc<T>(a.shape, track<T>({&a, &b}));
    const long n = static_cast<long>(out.numel());
    {
        const T* pa = a.ptr();
        const T* pb = b.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    }
    finish<T>(op, {&a, &b}, out, [a, b, out, n, bwd]() {
        const T* gy = out.gptr();
        const T* pa = a.ptr();
        const T* pb = b.ptr();
        T* ga = a.requires_grad ? a.grad->data() : nullptr;
        T* gb = b.requires_grad ? b.grad->data() : nullptr;
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) bwd(gy[i], pa[i], pb[i], ga ? ga + i : nullptr,
                                         gb ? gb + i : nullptr);
    });
    return out;
}

}  // namespace

template <typename T>
TensorBase<T> add(const TensorBase<T>& a, const TensorBase<T>& b) {
    return ewise2<T>(
        "add", a, b, [](T x, T y) { return x + y; },
        [](T g, T, T, T* ga, T* gb) {
            if (ga) *ga += g;
            if (gb) *gb += g;
        });
}

template <typename T>
TensorBase<T> sub(const TensorBase<T>& a, const TensorBase<T>& b) {
    return ewise2<T>(
        "sub", a, b, [](T x, T y) { return x - y; },
        [](T g, T, T, T* ga, T* gb) {
            if (ga) *ga += g;
            if (gb) *gb -= g;
        });
}

template <typename T>
TensorBase<T> mul(const TensorBase<T>& a, const TensorBase<T>& b) {
    return ewise2<T>(
        "mul", a, b, [](T x, T y) { return x * y; },
        [](T g, T x, T y, T* ga, T* gb) {
            if (ga) *ga += g * y;
            if (gb) *gb += g * x;
        });
}

namespace {

// Shared shell for unary elementwise ops; bwd receives (g, x) and returns dx.
template <typename T, typename FwdFn, typename BwdFn>
TensorBase<T> ewise1(const char* op, const TensorBase<T>& x, FwdFn fwd, BwdFn bwd) {
    auto out = alloc<T>(x.shape, track<T>({&x}));
    const long n = static_cast<long>(out.numel());
    {
        const T* px = x.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) po[i] = fwd(px[i]);
    }
    finish<T>(op, {&x}, out, [x, out, n, bwd]() {
        if (!x.requires_grad) return;
        const T* gy = out.gptr();
        const T* px = x.ptr();
        T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gx[i] += bwd(gy[i], px[i]);
    });
    return out;
}

}  // namespace

template <typename T>
TensorBase<T> add_scalar(const TensorBase<T>& x, T c) {
    return ewise1<T>(
        "add_scalar", x, [c](T v) { return v + c; }, [](T g, T) { return g; });
}

template <typename T>
TensorBase<T> mul_scalar(const TensorBase<T>& x, T c) {
    return ewise1<T>(
        "mul_scalar", x, [c](T v) { return v * c; }, [c](T g, T) { return g * c; });
}

template <typename T>
TensorBase<T> gelu(const TensorBase<T>& x) {
    // Exact form x * Phi(x).
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
    const T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
    return ewise1<T>(
        "gelu", x,
        [inv_sqrt2](T v) {
            return v * static_cast<T>(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        },
        [inv_sqrt2, inv_sqrt2pi](T g, T v) {
            const T phi = static_cast<T>(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T dens = inv_sqrt2pi * std::exp(static_cast<T>(-0.5) * v * v);
            return g * (phi + v * dens);
        });
}

template <typename T>
TensorBase<T> silu(const TensorBase<T>& x) {
    return ewise1<T>(
        "silu", x,
        [](T v) { return v / (T(1) + std::exp(-v)); },
        [](T g, T v) {
            const T s = T(1) / (T(1) + std::exp(-v));
            return g * s * (T(1) + v * (T(1) - s));
        });
}

template <typename T>
TensorBase<T> add_rowvec(const TensorBase<T>& x, const TensorBase<T>& v) {
    if (v.rank() != 1 || x.rank() < 1 || x.dim(-1) != v.shape[0])
        throw dimension_error("add_rowvec: shape mismatch " + shape_to_string(x.shape) +
                              " vs " + shape_to_string(v.shape));
    const long n = v.shape[0];
    const long rows = static_cast<long>(x.numel()) / n;
    auto out = alloc<T>(x.shape, track<T>({&x, &v}));
    {
        const T* px = x.ptr();
        const T* pv = v.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static)
        for (long r = 0; r < rows; ++r)
            for (long j = 0; j < n; ++j) po[r * n + j] = px[r * n + j] + pv[j];
    }
    finish<T>("add_rowvec", {&x, &v}, out, [x, v, out, rows, n]() {
        const T* gy = out.gptr();
        if (x.requires_grad) {
            T* gx = x.grad->data();
            const long total = rows * n;
#pragma omp parallel for schedule(static)
            for (long i = 0; i < total; ++i) gx[i] += gy[i];
        }
        if (v.requires_grad) {
            T* gv = v.grad->data();
#pragma omp parallel for schedule(static)
            for (long j = 0; j < n; ++j) {
                double acc = 0.0;
                for (long r = 0; r < rows; ++r)
                    acc += static_cast<double>(gy[r * n + j]);
                gv[j] += static_cast<T>(acc);
            }
        }
    });
    return out;
}

template <typename T>
TensorBase<T> add_channels(const TensorBase<T>& x, const TensorBase<T>& v) {
    if (x.rank() != 4)
        throw dimension_error("add_channels: expected rank 4, got " +
                              shape_to_string(x.shape));
    const int B = x.shape[0], C = x.shape[1];
    const long hw = static_cast<long>(x.shape[2]) * x.shape[3];
    const bool per_batch = v.rank() == 2;
    if (!((v.rank() == 1 && v.shape[0] == C) ||
          (per_batch && v.shape[0] == B && v.shape[1] == C)))
        throw dimension_error("add_channels: shape mismatch " +
                              shape_to_string(x.shape) + " vs " +
                              shape_to_string(v.shape));

    auto out = alloc<T>(x.shape, track<T>({&x, &v}));
    {
        const T* px = x.ptr();
        const T* pv = v.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static) collapse(2)
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                const T s = per_batch ? pv[static_cast<long>(b) * C + c] : pv[c];
                const long base = (static_cast<long>(b) * C + c) * hw;
                for (long i = 0; i < hw; ++i) po[base + i] = px[base + i] + s;
            }
    }
    finish<T>("add_channels", {&x, &v}, out, [x, v, out, B, C, hw, per_batch]() {
        const T* gy = out.gptr();
        if (x.requires_grad) {
            T* gx = x.grad->data();
            const long total = static_cast<long>(B) * C * hw;
#pragma omp parallel for schedule(static)
            for (long i = 0; i < total; ++i) gx[i] += gy[i];
        }
        if (v.requires_grad) {
            T* gv = v.grad->data();
            if (per_batch) {
#pragma omp parallel for schedule(static) collapse(2)
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        double acc = 0.0;
                        const long base = (static_cast<long>(b) * C + c) * hw;
                        for (long i = 0; i < hw; ++i)
                            acc += static_cast<double>(gy[base + i]);
                        gv[static_cast<long>(b) * C + c] += static_cast<T>(acc);
                    }
            } else {
#pragma omp parallel for schedule(static)
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const long base = (static_cast<long>(b) * C + c) * hw;
                        for (long i = 0; i < hw; ++i)
                            acc += static_cast<double>(gy[base + i]);
                    }
                    gv[c] += static_cast<T>(acc);
                }
            }
        }
    });
    return out;
}

template <typename T>
TensorBase<T> add_bcast0(const TensorBase<T>& x, const TensorBase<T>& m2) {
    if (x.rank() != 3 || m2.rank() != 2 || x.shape[1] != m2.shape[0] ||
        x.shape[2] != m2.shape[1])
        throw dimension_error("add_bcast0: shape mismatch " + shape_to_string(x.shape) +
                              " vs " + shape_to_string(m2.shape));
    const int G = x.shape[0];
    const long mn = static_cast<long>(x.shape[1]) * x.shape[2];
    auto out = alloc<T>(x.shape, track<T>({&x, &m2}));
    {
        const T* px = x.ptr();
        const T* pm = m2.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static)
        for (int g = 0; g < G; ++g) {
            const long base = static_cast<long>(g) * mn;
            for (long i = 0; i < mn; ++i) po[base + i] = px[base + i] + pm[i];
        }
    }
    finish<T>("add_bcast0", {&x, &m2}, out, [x, m2, out, G, mn]() {
        const T* gy = out.gptr();
        if (x.requires_grad) {
            T* gx = x.grad->data();
            const long total = static_cast<long>(G) * mn;
#pragma omp parallel for schedule(static)
            for (long i = 0; i < total; ++i) gx[i] += gy[i];
        }
        if (m2.requires_grad) {
            T* gm = m2.grad->data();
#pragma omp parallel for schedule(static)
            for (long i = 0; i < mn; ++i) {
                double acc = 0.0;
                for (int g = 0; g < G; ++g)
                    acc += static_cast<double>(gy[static_cast<long>(g) * mn + i]);
                gm[i] += static_cast<T>(acc);
            }
        }
    });
    return out;
}

template <typename T>
TensorBase<T> scale_batch(const TensorBase<T>& x, const TensorBase<T>& coef) {
    if (coef.rank() != 1 || x.rank() < 1 || coef.shape[0] != x.shape[0])
        throw dimension_error("scale_batch: shape mismatch " + shape_to_string(x.shape) +
                              " vs " + shape_to_string(coef.shape));
    const int B = x.shape[0];
    const long inner = static_cast<long>(x.numel()) / B;
    auto out = alloc<T>(x.shape, track<T>({&x, &coef}));
    {
        const T* px = x.ptr();
        const T* pc = coef.ptr();
        T* po = out.ptr();
#pragma omp parallel for schedule(static)
        for (int b = 0; b < B; ++b) {
            const T s = pc[b];
            const long base = static_cast<long>(b) * inner;
            for (long i = 0; i < inner; ++i) po[base + i] = px[base + i] * s;
        }
    }
    finish<T>("scale_batch", {&x, &coef}, out, [x, coef, out, B, inner]() {
        const T* gy = out.gptr();
        if (x.requires_grad) {
            T* gx = x.grad->data();
            const T* pc = coef.ptr();
#pragma omp parallel for schedule(static)
            for (int b = 0; b < B; ++b) {
                const T s = pc[b];
                const long base = static_cast<long>(b) * inner;
                for (long i = 0; i < inner; ++i) gx[base + i] += gy[base + i] * s;
            }
        }
        if (coef.requires_grad) {
            T* gc = coef.grad->data();
            const T* px = x.ptr();
#pragma omp parallel for schedule(static)
            for (int b = 0; b < B; ++b) {
                double acc = 0.0;
                const long base = static_cast<long>(b) * inner;
                for (long i = 0; i < inner; ++i)
                    acc += static_cast<double>(gy[base + i]) *
                           static_cast<double>(px[base + i]);
                gc[b] += static_cast<T>(acc);
            }
        }
    });
    return out;
}

template <typename T>
TensorBase<T> softmax(const TensorBase<T>& x, int axis) {
    const int ax = norm_axis("softmax", axis, x.rank());
    const int n = x.shape[static_cast<std::size_t>(ax)];
    const long outer = prod(x.shape, 0, ax);
    const long inner = prod(x.shape, ax + 1, x.rank());

    auto out = alloc<T>(x.shape, track<T>({&x}));
    kern::softmax_strided(x.ptr(), out.ptr(), outer, n, inner);

    finish<T>("softmax", {&x}, out, [x, out, outer, n, inner]() {
        if (!x.requires_grad) return;
        kern::softmax_backward_strided(out.ptr(), out.gptr(), x.grad->data(), outer,
                                       n, inner);
    });
    return out;
}

template <typename T>
TensorBase<T> layer_norm(const TensorBase<T>& x, const TensorBase<T>& gain,
                         const TensorBase<T>& bias, T eps) {
    const int n = x.dim(-1);
    if (gain.rank() != 1 || bias.rank() != 1 || gain.shape[0] != n ||
        bias.shape[0] != n)
        throw dimension_error("layer_norm: affine shapes " + shape_to_string(gain.shape) +
                              "/" + shape_to_string(bias.shape) + " for last axis " +
                              std::to_string(n));
    const long rows = static_cast<long>(x.numel()) / n;
    auto out = alloc<T>(x.shape, track<T>({&x, &gain, &bias}));
    kern::layer_norm_rows(x.ptr(), gain.ptr(), bias.ptr(), out.ptr(), rows, n, eps);

    finish<T>("layer_norm", {&x, &gain, &bias}, out, [x, gain, bias, out, rows, n, eps]() {
        const bool need_aff = gain.requires_grad || bias.requires_grad;
        std::vector<T> junk;
        if (need_aff && (!gain.requires_grad || !bias.requires_grad))
            junk.assign(static_cast<std::size_t>(n), T(0));
        kern::layer_norm_backward_rows(
            x.ptr(), gain.ptr(), out.gptr(),
            x.requires_grad ? x.grad->data() : nullptr,
            gain.requires_grad ? gain.grad->data() : junk.data(),
            bias.requires_grad ? bias.grad->data() : junk.data(), rows, n, eps,
            x.requires_grad, need_aff);
    });
    return out;
}

template <typename T>
TensorBase<T> conv2d(const TensorBase<T>& x, const TensorBase<T>& w) {
    if (x.rank() != 4 || w.rank() != 4 || w.shape[2] != 3 || w.shape[3] != 3 ||
        w.shape[1] != x.shape[1])
        throw dimension_error("conv2d: shape mismatch " + shape_to_string(x.shape) +
                              " vs " + shape_to_string(w.shape));
    const int B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int O = w.shape[0];
    const long hw = static_cast<long>(H) * W;
    const long chw = C * hw;
    const long c9 = static_cast<long>(C) * 9;

    auto out = alloc<T>({B, O, H, W}, track<T>({&x, &w}));
    {
        std::vector<T> cols(static_cast<std::size_t>(c9 * hw));
        for (int b = 0; b < B; ++b) {
            kern::im2col3x3(x.ptr() + b * chw, C, H, W, cols.data());
            kern::gemm_nn(O, static_cast<int>(hw), static_cast<int>(c9), w.ptr(),
                          cols.data(), out.ptr() + static_cast<long>(b) * O * hw);
        }
    }

    finish<T>("conv2d", {&x, &w}, out, [x, w, out, B, C, H, W, O, hw, chw, c9]() {
        std::vector<T> cols(static_cast<std::size_t>(c9 * hw));
        std::vector<T> dcols;
        if (x.requires_grad) dcols.resize(static_cast<std::size_t>(c9 * hw));
        for (int b = 0; b < B; ++b) {
            const T* gy = out.gptr() + static_cast<long>(b) * O * hw;
            if (w.requires_grad) {
                kern::im2col3x3(x.ptr() + b * chw, C, H, W, cols.data());
                kern::gemm_nt(O, static_cast<int>(c9), static_cast<int>(hw), gy,
                              cols.data(), w.grad->data());
            }
            if (x.requires_grad) {
                std::fill(dcols.begin(), dcols.end(), T(0));
                kern::gemm_tn(static_cast<int>(c9), static_cast<int>(hw), O, w.ptr(),
                              gy, dcols.data());
                kern::col2im3x3_add(dcols.data(), C, H, W, x.grad->data() + b * chw);
            }
        }
    });
    return out;
}

template <typename T>
TensorBase<T> embedding_lookup(const TensorBase<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2)
        throw dimension_error("embedding_lookup: expected rank 2 table, got " +
                              shape_to_string(table.shape));
    const int V = table.shape[0], d = table.shape[1];
    for (int id : ids)
        if (id < 0 || id >= V)
            throw dimension_error("embedding_lookup: id " + std::to_string(id) +
                                  " outside table " + shape_to_string(table.shape));
    const int n = static_cast<int>(ids.size());
    auto out = alloc<T>({n, d}, track<T>({&table}));
    {
        const T* src = table.ptr();
        T* dst = out.ptr();
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i)
            std::memcpy(dst + static_cast<long>(i) * d,
                        src + static_cast<long>(ids[static_cast<std::size_t>(i)]) * d,
                        static_cast<std::size_t>(d) * sizeof(T));
    }
    finish<T>("embedding_lookup", {&table}, out, [table, out, ids, n, d]() {
        if (!table.requires_grad) return;
        // Serial: ids may repeat, so a parallel scatter would race.
        const T* gy = out.gptr();
        T* gt = table.grad->data();
        for (int i = 0; i < n; ++i) {
            T* row = gt + static_cast<long>(ids[static_cast<std::size_t>(i)]) * d;
            const T* g = gy + static_cast<long>(i) * d;
            for (int j = 0; j < d; ++j) row[j] += g[j];
        }
    });
    return out;
}

template <typename T>
TensorBase<T> sum(const TensorBase<T>& x) {
    auto out = alloc<T>({1}, track<T>({&x}));
    const long n = static_cast<long>(x.numel());
    double acc = 0.0;
    const T* px = x.ptr();
    for (long i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    (*out.data)[0] = static_cast<T>(acc);

    finish<T>("sum", {&x}, out, [x, out, n]() {
        if (!x.requires_grad) return;
        const T g = (*out.grad)[0];
        T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gx[i] += g;
    });
    return out;
}

template <typename T>
TensorBase<T> mean(const TensorBase<T>& x) {
    auto out = alloc<T>({1}, track<T>({&x}));
    const long n = static_cast<long>(x.numel());
    double acc = 0.0;
    const T* px = x.ptr();
    for (long i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    (*out.data)[0] = static_cast<T>(acc / static_cast<double>(n));

    finish<T>("mean", {&x}, out, [x, out, n]() {
        if (!x.requires_grad) return;
        const T g = (*out.grad)[0] / static_cast<T>(n);
        T* gx = x.grad->data();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gx[i] += g;
    });
    return out;
}

template <typename T>
TensorBase<T> mse(const TensorBase<T>& a, const TensorBase<T>& b) {
    require_same_shape("mse", a, b);
    auto out = alloc<T>({1}, track<T>({&a, &b}));
    const long n = static_cast<long>(a.numel());
    {
        double acc = 0.0;
        const T* pa = a.ptr();
        const T* pb = b.ptr();
        for (long i = 0; i < n; ++i) {
            const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
            acc += d * d;
        }
        (*out.data)[0] = static_cast<T>(acc / static_cast<double>(n));
    }
    finish<T>("mse", {&a, &b}, out, [a, b, out, n]() {
        const T g = (*out.grad)[0] * T(2) / static_cast<T>(n);
        const T* pa = a.ptr();
        const T* pb = b.ptr();
        T* ga = a.requires_grad ? a.grad->data() : nullptr;
        T* gb = b.requires_grad ? b.grad->data() : nullptr;
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) {
            const T d = g * (pa[i] - pb[i]);
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    });
    return out;
}

template <typename T>
TensorBase<T> cross_entropy(const TensorBase<T>& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2)
        throw dimension_error("cross_entropy: expected rank 2 logits, got " +
                              shape_to_string(logits.shape));
    const int n = logits.shape[0], V = logits.shape[1];
    if (static_cast<int>(targets.size()) != n)
        throw dimension_error("cross_entropy: " + std::to_string(targets.size()) +
                              " targets for " + std::to_string(n) + " rows");
    for (int t : targets)
        if (t < 0 || t >= V)
            throw dimension_error("cross_entropy: target " + std::to_string(t) +
                                  " outside vocab " + std::to_string(V));

    auto out = alloc<T>({1}, track<T>({&logits}));
    {
        double acc = 0.0;
        const T* pl = logits.ptr();
        for (int r = 0; r < n; ++r) {
            const T* row = pl + static_cast<long>(r) * V;
            T mx = row[0];
            for (int j = 1; j < V; ++j) mx = row[j] > mx ? row[j] : mx;
            double s = 0.0;
            for (int j = 0; j < V; ++j)
                s += std::exp(static_cast<double>(row[j]) - static_cast<double>(mx));
            const double lse = static_cast<double>(mx) + std::log(s);
            acc += lse - static_cast<double>(row[targets[static_cast<std::size_t>(r)]]);
        }
        (*out.data)[0] = static_cast<T>(acc / n);
    }
    finish<T>("cross_entropy", {&logits}, out, [logits, out, targets, n, V]() {
        if (!logits.requires_grad) return;
        const T g = (*out.grad)[0] / static_cast<T>(n);
        const T* pl = logits.ptr();
        T* gl = logits.grad->data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < n; ++r) {
            const T* row = pl + static_cast<long>(r) * V;
            T* grow = gl + static_cast<long>(r) * V;
            T mx = row[0];
            for (int j = 1; j < V; ++j) mx = row[j] > mx ? row[j] : mx;
            double s = 0.0;
            for (int j = 0; j < V; ++j)
                s += std::exp(static_cast<double>(row[j]) - static_cast<double>(mx));
            const int t = targets[static_cast<std::size_t>(r)];
            for (int j = 0; j < V; ++j) {
                const T p = static_cast<T>(
                    std::exp(static_cast<double>(row[j]) - static_cast<double>(mx)) / s);
                grow[j] += g * (p - (j == t ? T(1) : T(0)));
            }
        }
    });
    return out;
}

template <typename T>
void backward(TensorBase<T>& loss) {
    GraphT<T>::current().backward(loss);
}

#define SEGICL_INSTANTIATE_OPS(T)                                                     \
    template class GraphT<T>;                                                         \
    template TensorBase<T> zeros<T>(std::vector<int>, bool);                          \
    template TensorBase<T> full<T>(std::vector<int>, T, bool);                        \
    template TensorBase<T> from_vector<T>(std::vector<int>, const std::vector<T>&,    \
                                          bool);                                      \
    template TensorBase<T> randn<T>(Rng&, std::vector<int>, T, bool);                 \
    template TensorBase<T> detach<T>(const TensorBase<T>&);                           \
    template TensorBase<T> matmul<T>(const TensorBase<T>&, const TensorBase<T>&);     \
    template TensorBase<T> transpose<T>(const TensorBase<T>&);                        \
    template TensorBase<T> permute<T>(const TensorBase<T>&, const std::vector<int>&); \
    template TensorBase<T> reshape<T>(const TensorBase<T>&, std::vector<int>);        \
    template TensorBase<T> concat<T>(const std::vector<TensorBase<T>>&, int);         \
    template TensorBase<T> slice<T>(const TensorBase<T>&, int, int, int);             \
    template TensorBase<T> add<T>(const TensorBase<T>&, const TensorBase<T>&);        \
    template TensorBase<T> sub<T>(const TensorBase<T>&, const TensorBase<T>&);        \
    template TensorBase<T> mul<T>(const TensorBase<T>&, const TensorBase<T>&);        \
    template TensorBase<T> add_scalar<T>(const TensorBase<T>&, T);                    \
    template TensorBase<T> mul_scalar<T>(const TensorBase<T>&, T);                    \
    template TensorBase<T> add_rowvec<T>(const TensorBase<T>&, const TensorBase<T>&); \
    template TensorBase<T> add_channels<T>(const TensorBase<T>&,                      \
                                           const TensorBase<T>&);                     \
    template TensorBase<T> add_bcast0<T>(const TensorBase<T>&, const TensorBase<T>&); \
    template TensorBase<T> scale_batch<T>(const TensorBase<T>&, const TensorBase<T>&);\
    template TensorBase<T> softmax<T>(const TensorBase<T>&, int);                     \
    template TensorBase<T> layer_norm<T>(const TensorBase<T>&, const TensorBase<T>&,  \
                                         const TensorBase<T>&, T);                    \
    template TensorBase<T> gelu<T>(const TensorBase<T>&);                             \
    template TensorBase<T> silu<T>(const TensorBase<T>&);                             \
    template TensorBase<T> conv2d<T>(const TensorBase<T>&, const TensorBase<T>&);     \
    template TensorBase<T> embedding_lookup<T>(const TensorBase<T>&,                  \
                                               const std::vector<int>&);              \
    template TensorBase<T> sum<T>(const TensorBase<T>&);                              \
    template TensorBase<T> mean<T>(const TensorBase<T>&);                             \
    template TensorBase<T> mse<T>(const TensorBase<T>&, const TensorBase<T>&);        \
    template TensorBase<T> cross_entropy<T>(const TensorBase<T>&,                     \
                                            const std::vector<int>&);                 \
    template void backward<T>(TensorBase<T>&);

SEGICL_INSTANTIATE_OPS(float)
SEGICL_INSTANTIATE_OPS(double)

#undef SEGICL_INSTANTIATE_OPS

}  // namespace segicl
