#include "segicl/nn.hpp"

#include <cmath>

#include "segicl/optim.hpp"
#include "segicl/util.hpp"

namespace segicl {

template <typename T>
TensorBase<T>& ParamRegistryT<T>::add(const std::string& name, TensorBase<T> t) {
    if (params_.count(name))
        throw state_error("ParamRegistry: duplicate parameter " + name);
    if (!t.requires_grad)
        throw contract_error("ParamRegistry: parameter " + name + " must require grad");
    return params_.emplace(name, std::move(t)).first->second;
}

template <typename T>
TensorBase<T>& ParamRegistryT<T>::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
        throw state_error("ParamRegistry: unknown parameter " + name);
    return it->second;
}

template <typename T>
const TensorBase<T>& ParamRegistryT<T>::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
        throw state_error("ParamRegistry: unknown parameter " + name);
    return it->second;
}

template <typename T>
std::size_t ParamRegistryT<T>::total_params() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

template <typename T>
void ParamRegistryT<T>::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

template <typename T>
std::uint64_t ParamRegistryT<T>::checksum() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, t] : params_) {
        h = fnv1a64(name, h);
        h = fnv1a64(t.data->data(), t.numel() * sizeof(T), h);
    }
    return h;
}

template <typename T>
void LinearT<T>::init(ParamRegistryT<T>& reg, const std::string& name, int in,
                      int out, Rng& rng, T w_scale, bool bias) {
    w = reg.add(name + ".w", randn<T>(rng, {in, out}, w_scale, true));
    if (bias) b = reg.add(name + ".b", zeros<T>({out}, true));
}

template <typename T>
TensorBase<T> LinearT<T>::operator()(const TensorBase<T>& x) const {
    TensorBase<T> h = x;
    const bool fold = x.rank() != 2;
    if (fold) h = reshape(x, {-1, x.dim(-1)});
    h = matmul(h, w);
    if (b.defined()) h = add_rowvec(h, b);
    if (fold) {
        std::vector<int> oshape = x.shape;
        oshape.back() = w.shape[1];
        h = reshape(h, oshape);
    }
    return h;
}

template <typename T>
void LayerNormT<T>::init(ParamRegistryT<T>& reg, const std::string& name, int n) {
    g = reg.add(name + ".g", full<T>({n}, T(1), true));
    b = reg.add(name + ".b", zeros<T>({n}, true));
}

template <typename T>
void Conv3x3T<T>::init(ParamRegistryT<T>& reg, const std::string& name, int in,
                       int out, Rng& rng, T w_scale) {
    w = reg.add(name + ".w", randn<T>(rng, {out, in, 3, 3}, w_scale, true));
    b = reg.add(name + ".b", zeros<T>({out}, true));
}

template <typename T>
void AdamWT<T>::step(T lr) {
    ++step_;
    const double b1 = static_cast<double>(cfg_.beta1);
    const double b2 = static_cast<double>(cfg_.beta2);
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (auto& [name, p] : reg_.params()) {
        if (!p.grad)
            throw contract_error("adamw_step: parameter " + name + " has no grad");
        const std::size_t n = p.numel();
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(n, T(0));
            v.assign(n, T(0));
        }
        const T* g = p.gptr();
        T* pd = p.ptr();
        const T wd = p.rank() >= 2 ? cfg_.weight_decay : T(0);
        const T lr_t = lr;
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(n); ++i) {
            m[static_cast<std::size_t>(i)] =
                static_cast<T>(b1) * m[static_cast<std::size_t>(i)] +
                (T(1) - static_cast<T>(b1)) * g[i];
            v[static_cast<std::size_t>(i)] =
                static_cast<T>(b2) * v[static_cast<std::size_t>(i)] +
                (T(1) - static_cast<T>(b2)) * g[i] * g[i];
            const T mhat = m[static_cast<std::size_t>(i)] / static_cast<T>(bc1);
            const T vhat = v[static_cast<std::size_t>(i)] / static_cast<T>(bc2);
            pd[i] -= lr_t * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * pd[i]);
        }
    }
}

#define SEGICL_INSTANTIATE_NN(T)    \
    template class ParamRegistryT<T>; \
    template struct LinearT<T>;       \
    template struct LayerNormT<T>;    \
    template struct Conv3x3T<T>;      \
    template class AdamWT<T>;

SEGICL_INSTANTIATE_NN(float)
SEGICL_INSTANTIATE_NN(double)

#undef SEGICL_INSTANTIATE_NN

}  // namespace segicl
