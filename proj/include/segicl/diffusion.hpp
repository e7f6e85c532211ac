#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segicl/nn.hpp"

namespace segicl {

// Linear-beta DDPM schedule with cumulative products kept in double.
// The defaults satisfy alpha_bar_T < 0.05 at T=200.
struct NoiseSchedule {
    int steps;
    std::vector<double> beta;       // beta[t], t in [1, steps]; index 0 unused
    std::vector<double> alpha_bar;  // alpha_bar[0] = 1

    explicit NoiseSchedule(int T = 200, double beta_start = 1e-4,
                           double beta_end = 0.05);
};

struct DenoiserConfig {
    int res = 32;       // input/output side; divisible by 4
    int base = 32;      // channels at full resolution; doubles per level
    int temb_dim = 64;  // sinusoidal timestep embedding width
    int cond_tokens = 8;
    int token_dim = 32;  // per-token dim of keyword and condition tokens

    void validate() const;
    int temb_hidden() const { return 2 * temb_dim; }
};

// Structure-keyword table; unknown words fall back to a dedicated <unk> row.
template <typename T>
class KeywordEmbeddingT {
public:
    KeywordEmbeddingT(ParamRegistryT<T>& reg, int dim, Rng& rng);

    // [n, dim] with n in [1, cap]; empty input embeds as a single <unk>.
    TensorBase<T> tokens(const std::vector<std::string>& words, int cap = 8) const;

    int row_of(const std::string& word) const;  // <unk> row when absent
    int unk_row() const;

private:
    TensorBase<T> table_;  // rows: disc, ring, blobs, wedge, <unk>
};

// U-Net denoiser: three resolutions (res -> res/2 -> res/4), two residual
// blocks and one cross-attention per level, channel mults 1/2/4. Down- and
// up-sampling are pixel shuffles followed by 3x3 convs, so every kernel in
// the net is the stock stride-1 conv.
template <typename T>
class UNetT {
public:
    UNetT(const DenoiserConfig& cfg, Rng& rng);

    // x [B,1,res,res], ts per-item timesteps (>= 1), ctx [B,M,token_dim].
    TensorBase<T> forward(const TensorBase<T>& x, const std::vector<int>& ts,
                          const TensorBase<T>& ctx) const;

    ParamRegistryT<T>& params() { return reg_; }
    const ParamRegistryT<T>& params() const { return reg_; }
    const DenoiserConfig& config() const { return cfg_; }

private:
    struct ResBlock {
        LayerNormT<T> n1, n2;
        Conv3x3T<T> c1, c2;
        LinearT<T> temb;
    };
    struct CrossAttn {
        LayerNormT<T> norm;
        LinearT<T> wq, wk, wv, wo;
    };

    void init_res_block(ResBlock& rb, const std::string& name, int ch, Rng& rng);
    void init_cross_attn(CrossAttn& xa, const std::string& name, int ch, Rng& rng);
    TensorBase<T> res_block(const ResBlock& rb, const TensorBase<T>& x,
                            const TensorBase<T>& temb) const;
    TensorBase<T> cross_attn(const CrossAttn& xa, const TensorBase<T>& x,
                             const TensorBase<T>& ctx) const;

    DenoiserConfig cfg_;
    ParamRegistryT<T> reg_;
    LinearT<T> temb_fc1_, temb_fc2_;
    Conv3x3T<T> stem_;
    ResBlock d_rb_[3][2];
    CrossAttn d_xa_[3];
    Conv3x3T<T> down_[2];
    ResBlock mid_;
    Conv3x3T<T> fuse_[2];
    ResBlock u_rb_[2][2];
    LayerNormT<T> out_norm_;
    Conv3x3T<T> out_conv_;  // zero-init: the untrained net predicts zero noise
};

// Channel-last layer norm and pixel shuffles, shared with tests.
template <typename T>
TensorBase<T> channel_norm(const TensorBase<T>& x, const TensorBase<T>& g,
                           const TensorBase<T>& b);
template <typename T>
TensorBase<T> pixel_unshuffle(const TensorBase<T>& x);  // [B,C,H,W] -> [B,4C,H/2,W/2]
template <typename T>
TensorBase<T> pixel_shuffle(const TensorBase<T>& x);  // [B,4C,H,W] -> [B,C,2H,2W]

// Conditional DDPM over masks scaled to [-1,1].
template <typename T>
class DiffusionDecoderT {
public:
    DiffusionDecoderT(const DenoiserConfig& cfg, const NoiseSchedule& sched, Rng& rng);

    // m_t = sqrt(ab_t) m0 + sqrt(1-ab_t) eps; t in [1, T].
    TensorBase<T> q_sample(const TensorBase<T>& m0, int t, const TensorBase<T>& eps) const;

    // Noise-prediction MSE over a batch: m0 [B,1,res,res] in [-1,1],
    // keywords per item, cond [B, cond_tokens*token_dim]. Draws per-item t
    // and noise from rng.
    TensorBase<T> denoise_loss(const TensorBase<T>& m0,
                               const std::vector<std::vector<std::string>>& keywords,
                               const TensorBase<T>& cond, Rng& rng) const;

    // Ancestral sampler from pure noise; returns res*res probabilities in [0,1].
    std::vector<T> sample(const std::vector<std::string>& keywords,
                          const TensorBase<T>& cond, Rng& rng) const;

    // Batched sampler with one rng stream per row; row b is bit-identical to
    // sample(keywords, cond, Rng(seeds[b])).
    std::vector<std::vector<T>> sample_batch(const std::vector<std::string>& keywords,
                                             const TensorBase<T>& cond,
                                             const std::vector<std::uint64_t>& seeds) const;

    const NoiseSchedule& schedule() const { return sched_; }
    const DenoiserConfig& config() const { return unet_.config(); }
    UNetT<T>& unet() { return unet_; }
    ParamRegistryT<T>& params() { return unet_.params(); }
    const ParamRegistryT<T>& params() const { return unet_.params(); }
    const KeywordEmbeddingT<T>& keywords() const { return keyword_; }

    // [B,M,token_dim] context rows: keyword tokens then condition tokens.
    TensorBase<T> make_context(const std::vector<std::vector<std::string>>& keywords,
                               const TensorBase<T>& cond) const;

private:
    NoiseSchedule sched_;
    UNetT<T> unet_;
    KeywordEmbeddingT<T> keyword_;
};

using DiffusionDecoder = DiffusionDecoderT<float>;
using KeywordEmbedding = KeywordEmbeddingT<float>;

}  // namespace segicl
