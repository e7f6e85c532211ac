#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "segicl/rng.hpp"
#include "segicl/tensor.hpp"

namespace segicl {

// Owns the named trainable tensors of one model component. The map keeps
// names sorted, which fixes the iteration order for the optimizer, the
// checkpoint writer and the checksum.
template <typename T>
class ParamRegistryT {
public:
    TensorBase<T>& add(const std::string& name, TensorBase<T> t);
    TensorBase<T>& at(const std::string& name);
    const TensorBase<T>& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    const std::map<std::string, TensorBase<T>>& params() const { return params_; }
    std::map<std::string, TensorBase<T>>& params() { return params_; }
    std::size_t total_params() const;
    void zero_grads();

    // FNV over (name, raw value bytes) in name order; the freeze contract for
    // stage 2 compares these before and after training.
    std::uint64_t checksum() const;

private:
    std::map<std::string, TensorBase<T>> params_;
};

using ParamRegistry = ParamRegistryT<float>;

template <typename T>
struct LinearT {
    TensorBase<T> w;  // [in, out]
    TensorBase<T> b;  // [out]; undefined when bias-free

    void init(ParamRegistryT<T>& reg, const std::string& name, int in, int out,
              Rng& rng, T w_scale, bool bias = true);
    // Folds any leading dims into rows, applies x*w + b, unfolds.
    TensorBase<T> operator()(const TensorBase<T>& x) const;
};

template <typename T>
struct LayerNormT {
    TensorBase<T> g, b;

    void init(ParamRegistryT<T>& reg, const std::string& name, int n);
    TensorBase<T> operator()(const TensorBase<T>& x) const { return layer_norm(x, g, b); }
};

template <typename T>
struct Conv3x3T {
    TensorBase<T> w;  // [out, in, 3, 3]
    TensorBase<T> b;  // [out]

    void init(ParamRegistryT<T>& reg, const std::string& name, int in, int out,
              Rng& rng, T w_scale);
    TensorBase<T> operator()(const TensorBase<T>& x) const {
        return add_channels(conv2d(x, w), b);
    }
};

using Linear = LinearT<float>;
using LayerNorm = LayerNormT<float>;
using Conv3x3 = Conv3x3T<float>;

}  // namespace segicl
