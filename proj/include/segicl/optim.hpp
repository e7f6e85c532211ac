#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "segicl/nn.hpp"

namespace segicl {

template <typename T>
struct AdamWConfigT {
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(0.01);
};

// Decoupled-weight-decay Adam with bias correction. Decay applies only to
// rank >= 2 tensors (matrices, conv kernels); biases, norms and embeddings-as
// -vectors are exempt. Moment buffers live here keyed by parameter name so
// the checkpoint writer can serialize them as opt.m.<name> / opt.v.<name>.
template <typename T>
class AdamWT {
public:
    AdamWT(ParamRegistryT<T>& reg, AdamWConfigT<T> cfg) : reg_(reg), cfg_(cfg) {}

    void step(T lr);

    std::int64_t steps() const { return step_; }
    const AdamWConfigT<T>& config() const { return cfg_; }

    std::map<std::string, std::vector<T>>& moments1() { return m_; }
    std::map<std::string, std::vector<T>>& moments2() { return v_; }
    void set_steps(std::int64_t s) { step_ = s; }

private:
    ParamRegistryT<T>& reg_;
    AdamWConfigT<T> cfg_;
    std::map<std::string, std::vector<T>> m_, v_;
    std::int64_t step_ = 0;
};

using AdamWConfig = AdamWConfigT<float>;
using AdamW = AdamWT<float>;

}  // namespace segicl
