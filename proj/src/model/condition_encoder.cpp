#include "segicl/condition_encoder.hpp"

#include <cmath>

#include "segicl/errors.hpp"
#include "segicl/util.hpp"

namespace segicl {

template <typename T>
CondEncoderT<T>::CondEncoderT(Rng& rng, int hidden, int out) : out_(out) {
    const int in = corpus::kRes * corpus::kRes;
    fc1_.init(reg_, "fc1", in, hidden, rng, T(1) / std::sqrt(T(in)));
    fc2_.init(reg_, "fc2", hidden, out, rng, T(1) / std::sqrt(T(hidden)));
}

template <typename T>
TensorBase<T> CondEncoderT<T>::encode_mask(const std::vector<std::uint8_t>& mask) const {
    const int in = corpus::kRes * corpus::kRes;
    if (static_cast<int>(mask.size()) != in)
        throw dimension_error("encode_mask: expected " + std::to_string(in) +
                              " pixels, got " + std::to_string(mask.size()));
    std::vector<T> vals(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        vals[i] = mask[i] ? T(1) : T(-1);
    return reshape(encode_flat(from_vector<T>({1, in}, vals)), {out_});
}

template <typename T>
TensorBase<T> CondEncoderT<T>::encode_flat(const TensorBase<T>& x) const {
    return fc2_(gelu(fc1_(x)));
}

template <typename T>
TensorBase<T> regression_loss(const TensorBase<T>& s, const TensorBase<T>& c) {
    if (s.shape != c.shape)
        throw contract_error("regression_loss: shape " + shape_to_string(s.shape) +
                             " vs " + shape_to_string(c.shape));
    return mse(s, c);
}

template class CondEncoderT<float>;
template class CondEncoderT<double>;
template TensorBase<float> regression_loss(const TensorBase<float>&,
                                           const TensorBase<float>&);
template TensorBase<double> regression_loss(const TensorBase<double>&,
                                            const TensorBase<double>&);

}  // namespace segicl
