#pragma once

#include <cstdint>
#include <vector>

#include "segicl/corpus.hpp"
#include "segicl/nn.hpp"

namespace segicl {

// Shared MLP from a binary mask to the condition vector: the decoder's
// conditioning input during stage 1 and the encoder's regression target
// during stage 2 (same parameters, frozen for the latter).
template <typename T>
class CondEncoderT {
public:
    CondEncoderT(Rng& rng, int hidden = 512, int out = 256);

    // mask in {0,1} at 32x32, mapped to [-1,1] before the MLP -> [out].
    TensorBase<T> encode_mask(const std::vector<std::uint8_t>& mask) const;

    // Rows of pre-scaled masks: [n, 1024] -> [n, out].
    TensorBase<T> encode_flat(const TensorBase<T>& x) const;

    ParamRegistryT<T>& params() { return reg_; }
    const ParamRegistryT<T>& params() const { return reg_; }
    int out_dim() const { return out_; }

private:
    int out_;
    ParamRegistryT<T> reg_;
    LinearT<T> fc1_, fc2_;
};

// Mean squared distance between the projected state and the condition target;
// scalar, averaged over every element.
template <typename T>
TensorBase<T> regression_loss(const TensorBase<T>& s, const TensorBase<T>& c);

using CondEncoder = CondEncoderT<float>;

}  // namespace segicl
