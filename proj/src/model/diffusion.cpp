#include "segicl/diffusion.hpp"

#include <cmath>

#include "segicl/errors.hpp"
#include "segicl/util.hpp"

namespace segicl {

NoiseSchedule::NoiseSchedule(int T, double beta_start, double beta_end) : steps(T) {
    if (T < 2) throw config_error("schedule: need at least 2 steps");
    if (beta_start <= 0 || beta_end >= 1 || beta_start > beta_end)
        throw config_error("schedule: betas must satisfy 0 < start <= end < 1");
    beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    alpha_bar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        beta[static_cast<std::size_t>(t)] =
            beta_start + (beta_end - beta_start) * double(t - 1) / double(T - 1);
        alpha_bar[static_cast<std::size_t>(t)] =
            alpha_bar[static_cast<std::size_t>(t - 1)] *
            (1.0 - beta[static_cast<std::size_t>(t)]);
    }
    for (int t = 1; t <= T; ++t) {
        const double ab = alpha_bar[static_cast<std::size_t>(t)];
        if (!(ab > 0.0 && ab < 1.0 && ab < alpha_bar[static_cast<std::size_t>(t - 1)]))
            throw config_error("schedule: alpha_bar must fall strictly within (0,1)");
    }
    if (alpha_bar[static_cast<std::size_t>(T)] >= 0.05)
        throw config_error("schedule: alpha_bar at T is " +
                           std::to_string(alpha_bar[static_cast<std::size_t>(T)]) +
                           ", must be < 0.05; raise beta_end or steps");
}

void DenoiserConfig::validate() const {
    if (res < 4 || res % 4 != 0)
        throw config_error("denoiser: res " + std::to_string(res) +
                           " must be a positive multiple of 4");
    if (base < 2 || base % 2 != 0)
        throw config_error("denoiser: base " + std::to_string(base) + " must be even");
    if (temb_dim < 2 || temb_dim % 2 != 0)
        throw config_error("denoiser: temb_dim must be even");
    if (cond_tokens < 1 || token_dim < 1)
        throw config_error("denoiser: token sizes must be positive");
}

namespace {

const std::vector<std::string>& keyword_rows() {
    static const std::vector<std::string> rows{"disc", "ring", "blobs", "wedge"};
    return rows;
}

}  // namespace

template <typename T>
KeywordEmbeddingT<T>::KeywordEmbeddingT(ParamRegistryT<T>& reg, int dim, Rng& rng) {
    const int rows = static_cast<int>(keyword_rows().size()) + 1;  // + <unk>
    table_ = reg.add("kw_table", randn<T>(rng, {rows, dim}, T(0.02), true));
}

template <typename T>
int KeywordEmbeddingT<T>::row_of(const std::string& word) const {
    const auto& rows = keyword_rows();
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i] == word) return static_cast<int>(i);
    return static_cast<int>(rows.size());  // <unk>
}

template <typename T>
int KeywordEmbeddingT<T>::unk_row() const {
    return static_cast<int>(keyword_rows().size());
}

template <typename T>
TensorBase<T> KeywordEmbeddingT<T>::tokens(const std::vector<std::string>& words,
                                           int cap) const {
    std::vector<int> ids;
    for (const auto& w : words) {
        if (static_cast<int>(ids.size()) == cap) break;
        ids.push_back(row_of(w));
    }
    if (ids.empty()) ids.push_back(row_of("<unk>"));
    return embedding_lookup(table_, ids);
}

template <typename T>
TensorBase<T> channel_norm(const TensorBase<T>& x, const TensorBase<T>& g,
                           const TensorBase<T>& b) {
    auto t = permute(x, {0, 2, 3, 1});
    t = layer_norm(t, g, b);
    return permute(t, {0, 3, 1, 2});
}

template <typename T>
TensorBase<T> pixel_unshuffle(const TensorBase<T>& x) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto t = reshape(x, {B, C, H / 2, 2, W / 2, 2});
    t = permute(t, {0, 1, 3, 5, 2, 4});
    return reshape(t, {B, 4 * C, H / 2, W / 2});
}

template <typename T>
TensorBase<T> pixel_shuffle(const TensorBase<T>& x) {
    const int B = x.dim(0), C4 = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto t = reshape(x, {B, C4 / 4, 2, 2, H, W});
    t = permute(t, {0, 1, 4, 2, 5, 3});
    return reshape(t, {B, C4 / 4, 2 * H, 2 * W});
}

template <typename T>
UNetT<T>::UNetT(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int b = cfg_.base;
    const int ch[3] = {b, 2 * b, 4 * b};
    const int th = cfg_.temb_hidden();

    temb_fc1_.init(reg_, "temb.fc1", cfg_.temb_dim, th, rng,
                   T(1) / std::sqrt(T(cfg_.temb_dim)));
    temb_fc2_.init(reg_, "temb.fc2", th, th, rng, T(1) / std::sqrt(T(th)));
    stem_.init(reg_, "stem", 1, ch[0], rng, T(1) / 3);

    for (int l = 0; l < 3; ++l) {
        const std::string pre = "d" + std::to_string(l) + ".";
        init_res_block(d_rb_[l][0], pre + "rb0", ch[l], rng);
        init_res_block(d_rb_[l][1], pre + "rb1", ch[l], rng);
        init_cross_attn(d_xa_[l], pre + "xa", ch[l], rng);
    }
    down_[0].init(reg_, "down0", 4 * ch[0], ch[1], rng,
                  T(1) / std::sqrt(T(9 * 4 * ch[0])));
    down_[1].init(reg_, "down1", 4 * ch[1], ch[2], rng,
                  T(1) / std::sqrt(T(9 * 4 * ch[1])));
    init_res_block(mid_, "mid", ch[2], rng);
    fuse_[1].init(reg_, "u1.fuse", ch[2] / 4 + ch[1], ch[1], rng,
                  T(1) / std::sqrt(T(9 * (ch[2] / 4 + ch[1]))));
    fuse_[0].init(reg_, "u0.fuse", ch[1] / 4 + ch[0], ch[0], rng,
                  T(1) / std::sqrt(T(9 * (ch[1] / 4 + ch[0]))));
    for (int l = 0; l < 2; ++l) {
        const std::string pre = "u" + std::to_string(l) + ".";
        init_res_block(u_rb_[l][0], pre + "rb0", ch[l], rng);
        init_res_block(u_rb_[l][1], pre + "rb1", ch[l], rng);
    }
    out_norm_.init(reg_, "out.norm", ch[0]);
    out_conv_.init(reg_, "out.conv", ch[0], 1, rng, T(0));
}

template <typename T>
void UNetT<T>::init_res_block(ResBlock& rb, const std::string& name, int ch, Rng& rng) {
    const T ws = T(1) / std::sqrt(T(9 * ch));
    rb.n1.init(reg_, name + ".n1", ch);
    rb.n2.init(reg_, name + ".n2", ch);
    rb.c1.init(reg_, name + ".c1", ch, ch, rng, ws);
    // second conv shrunk so a fresh residual branch barely perturbs the trunk
    rb.c2.init(reg_, name + ".c2", ch, ch, rng, ws / 4);
    rb.temb.init(reg_, name + ".temb", cfg_.temb_hidden(), ch, rng,
                 T(1) / std::sqrt(T(cfg_.temb_hidden())));
}

template <typename T>
void UNetT<T>::init_cross_attn(CrossAttn& xa, const std::string& name, int ch, Rng& rng) {
    const int dk = cfg_.token_dim;
    xa.norm.init(reg_, name + ".norm", ch);
    xa.wq.init(reg_, name + ".wq", ch, dk, rng, T(1) / std::sqrt(T(ch)));
    xa.wk.init(reg_, name + ".wk", dk, dk, rng, T(1) / std::sqrt(T(dk)));
    xa.wv.init(reg_, name + ".wv", dk, dk, rng, T(1) / std::sqrt(T(dk)));
    xa.wo.init(reg_, name + ".wo", dk, ch, rng, T(1) / std::sqrt(T(dk)) / 4);
}

template <typename T>
TensorBase<T> UNetT<T>::res_block(const ResBlock& rb, const TensorBase<T>& x,
                                  const TensorBase<T>& temb) const {
    auto h = rb.c1(silu(channel_norm(x, rb.n1.g, rb.n1.b)));
    h = add_channels(h, rb.temb(silu(temb)));  // temb [B, th] -> [B, ch]
    h = rb.c2(silu(channel_norm(h, rb.n2.g, rb.n2.b)));
    return add(x, h);
}

template <typename T>
TensorBase<T> UNetT<T>::cross_attn(const CrossAttn& xa, const TensorBase<T>& x,
                                   const TensorBase<T>& ctx) const {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto tokens = permute(reshape(channel_norm(x, xa.norm.g, xa.norm.b), {B, C, H * W}),
                          {0, 2, 1});                       // [B,HW,C]
    auto q = xa.wq(tokens);                                  // [B,HW,dk]
    auto kt = permute(xa.wk(ctx), {0, 2, 1});                // [B,dk,M]
    auto att = softmax(mul_scalar(matmul(q, kt),
                                  T(1) / std::sqrt(T(cfg_.token_dim))), -1);
    auto o = xa.wo(matmul(att, xa.wv(ctx)));                 // [B,HW,C]
    o = reshape(permute(o, {0, 2, 1}), {B, C, H, W});
    return add(x, o);
}

template <typename T>
TensorBase<T> UNetT<T>::forward(const TensorBase<T>& x, const std::vector<int>& ts,
                                const TensorBase<T>& ctx) const {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.res || x.dim(3) != cfg_.res)
        throw dimension_error("unet: input must be [B,1," + std::to_string(cfg_.res) +
                              "," + std::to_string(cfg_.res) + "], got " +
                              shape_to_string(x.shape));
    const int B = x.dim(0);
    if (static_cast<int>(ts.size()) != B)
        throw contract_error("unet: one timestep per batch item");
    if (ctx.rank() != 3 || ctx.dim(0) != B || ctx.dim(2) != cfg_.token_dim)
        throw dimension_error("unet: context must be [B,M," +
                              std::to_string(cfg_.token_dim) + "], got " +
                              shape_to_string(ctx.shape));

    // sinusoidal embedding, half sines half cosines over log-spaced frequencies
    const int half = cfg_.temb_dim / 2;
    std::vector<T> sv(static_cast<std::size_t>(B) * cfg_.temb_dim);
    for (int i = 0; i < B; ++i) {
        if (ts[static_cast<std::size_t>(i)] < 1)
            throw contract_error("unet: timestep must be >= 1");
        const double t = double(ts[static_cast<std::size_t>(i)]);
        for (int j = 0; j < half; ++j) {
            const double freq =
                std::exp(-std::log(10000.0) * double(j) / double(half - 1));
            sv[static_cast<std::size_t>(i) * cfg_.temb_dim + j] =
                static_cast<T>(std::sin(t * freq));
            sv[static_cast<std::size_t>(i) * cfg_.temb_dim + half + j] =
                static_cast<T>(std::cos(t * freq));
        }
    }
    auto temb = temb_fc2_(silu(temb_fc1_(from_vector<T>({B, cfg_.temb_dim}, sv))));

    auto h = stem_(x);
    h = res_block(d_rb_[0][0], h, temb);
    h = res_block(d_rb_[0][1], h, temb);
    h = cross_attn(d_xa_[0], h, ctx);
    auto skip0 = h;

    h = down_[0](pixel_unshuffle(h));
    h = res_block(d_rb_[1][0], h, temb);
    h = res_block(d_rb_[1][1], h, temb);
    h = cross_attn(d_xa_[1], h, ctx);
    auto skip1 = h;

    h = down_[1](pixel_unshuffle(h));
    h = res_block(d_rb_[2][0], h, temb);
    h = res_block(d_rb_[2][1], h, temb);
    h = cross_attn(d_xa_[2], h, ctx);
    h = res_block(mid_, h, temb);

    h = fuse_[1](concat({pixel_shuffle(h), skip1}, 1));
    h = res_block(u_rb_[1][0], h, temb);
    h = res_block(u_rb_[1][1], h, temb);

    h = fuse_[0](concat({pixel_shuffle(h), skip0}, 1));
    h = res_block(u_rb_[0][0], h, temb);
    h = res_block(u_rb_[0][1], h, temb);

    return out_conv_(silu(channel_norm(h, out_norm_.g, out_norm_.b)));
}

template <typename T>
DiffusionDecoderT<T>::DiffusionDecoderT(const DenoiserConfig& cfg,
                                        const NoiseSchedule& sched, Rng& rng)
    : sched_(sched), unet_(cfg, rng), keyword_(unet_.params(), cfg.token_dim, rng) {}

template <typename T>
TensorBase<T> DiffusionDecoderT<T>::q_sample(const TensorBase<T>& m0, int t,
                                             const TensorBase<T>& eps) const {
    if (t < 1 || t > sched_.steps)
        throw contract_error("q_sample: t " + std::to_string(t) +
                             " outside [1, " + std::to_string(sched_.steps) + "]");
    const double ab = sched_.alpha_bar[static_cast<std::size_t>(t)];
    return add(mul_scalar(m0, static_cast<T>(std::sqrt(ab))),
               mul_scalar(eps, static_cast<T>(std::sqrt(1.0 - ab))));
}

template <typename T>
TensorBase<T> DiffusionDecoderT<T>::make_context(
    const std::vector<std::vector<std::string>>& keywords,
    const TensorBase<T>& cond) const {
    const auto& cfg = unet_.config();
    const int B = cond.dim(0);
    if (static_cast<int>(keywords.size()) != B)
        throw contract_error("make_context: one keyword list per batch item");
    if (cond.rank() != 2 || cond.dim(1) != cfg.cond_tokens * cfg.token_dim)
        throw dimension_error("make_context: cond must be [B," +
                              std::to_string(cfg.cond_tokens * cfg.token_dim) +
                              "], got " + shape_to_string(cond.shape));
    std::vector<TensorBase<T>> rows;
    int m = -1;
    for (int i = 0; i < B; ++i) {
        auto kw = keyword_.tokens(keywords[static_cast<std::size_t>(i)]);
        auto ct = reshape(slice(cond, 0, i, 1), {cfg.cond_tokens, cfg.token_dim});
        auto item = concat({kw, ct}, 0);
        if (m < 0) m = item.dim(0);
        if (item.dim(0) != m)
            throw contract_error("make_context: keyword counts differ across batch");
        rows.push_back(item);
    }
    return reshape(concat(rows, 0), {B, m, cfg.token_dim});
}

template <typename T>
TensorBase<T> DiffusionDecoderT<T>::denoise_loss(
    const TensorBase<T>& m0, const std::vector<std::vector<std::string>>& keywords,
    const TensorBase<T>& cond, Rng& rng) const {
    const auto& cfg = unet_.config();
    if (m0.rank() != 4 || m0.dim(1) != 1 || m0.dim(2) != cfg.res || m0.dim(3) != cfg.res)
        throw dimension_error("denoise_loss: m0 must be [B,1," +
                              std::to_string(cfg.res) + "," + std::to_string(cfg.res) +
                              "], got " + shape_to_string(m0.shape));
    const int B = m0.dim(0);
    std::vector<int> ts(static_cast<std::size_t>(B));
    std::vector<T> sa(static_cast<std::size_t>(B)), so(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) {
        const int t = static_cast<int>(rng.uniform_int(1, sched_.steps));
        ts[static_cast<std::size_t>(i)] = t;
        const double ab = sched_.alpha_bar[static_cast<std::size_t>(t)];
        sa[static_cast<std::size_t>(i)] = static_cast<T>(std::sqrt(ab));
        so[static_cast<std::size_t>(i)] = static_cast<T>(std::sqrt(1.0 - ab));
    }
    auto eps = randn<T>(rng, m0.shape, T(1));
    auto m_t = add(scale_batch(m0, from_vector<T>({B}, sa)),
                   scale_batch(eps, from_vector<T>({B}, so)));
    auto pred = unet_.forward(m_t, ts, make_context(keywords, cond));
    return mse(pred, eps);
}

template <typename T>
std::vector<std::vector<T>> DiffusionDecoderT<T>::sample_batch(
    const std::vector<std::string>& keywords, const TensorBase<T>& cond,
    const std::vector<std::uint64_t>& seeds) const {
    const auto& cfg = unet_.config();
    if (cond.rank() != 1 || cond.dim(0) != cfg.cond_tokens * cfg.token_dim)
        throw dimension_error("sample: cond must be [" +
                              std::to_string(cfg.cond_tokens * cfg.token_dim) +
                              "], got " + shape_to_string(cond.shape));
    const int B = static_cast<int>(seeds.size());
    if (B < 1) throw contract_error("sample: need at least one seed");
    const int n = cfg.res * cfg.res;

    NoGradT<T> ng;
    auto cond2 = reshape(cond, {1, cfg.cond_tokens * cfg.token_dim});
    std::vector<TensorBase<T>> conds(static_cast<std::size_t>(B), cond2);
    auto ctx = make_context(
        std::vector<std::vector<std::string>>(static_cast<std::size_t>(B), keywords),
        concat(conds, 0));

    std::vector<Rng> streams;
    streams.reserve(static_cast<std::size_t>(B));
    for (auto s : seeds) streams.emplace_back(s);

    std::vector<T> xv(static_cast<std::size_t>(B) * n);
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i)
            xv[static_cast<std::size_t>(b) * n + i] =
                static_cast<T>(streams[static_cast<std::size_t>(b)].normal());

    for (int t = sched_.steps; t >= 1; --t) {
        auto x = from_vector<T>({B, 1, cfg.res, cfg.res}, xv);
        const auto pred =
            unet_.forward(x, std::vector<int>(static_cast<std::size_t>(B), t), ctx);
        const double bt = sched_.beta[static_cast<std::size_t>(t)];
        const double ab = sched_.alpha_bar[static_cast<std::size_t>(t)];
        const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - bt);
        const double coef = bt / std::sqrt(1.0 - ab);
        const double sigma = std::sqrt(bt);
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < n; ++i) {
                const std::size_t idx = static_cast<std::size_t>(b) * n + i;
                double v = inv_sqrt_a * (double(xv[idx]) - coef * double(pred.ptr()[idx]));
                if (t > 1) v += sigma * streams[static_cast<std::size_t>(b)].normal();
                xv[idx] = static_cast<T>(v);
            }
    }

    std::vector<std::vector<T>> out(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        auto& row = out[static_cast<std::size_t>(b)];
        row.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double p = (double(xv[static_cast<std::size_t>(b) * n + i]) + 1.0) / 2.0;
            row[static_cast<std::size_t>(i)] = static_cast<T>(std::clamp(p, 0.0, 1.0));
        }
    }
    return out;
}

template <typename T>
std::vector<T> DiffusionDecoderT<T>::sample(const std::vector<std::string>& keywords,
                                            const TensorBase<T>& cond, Rng& rng) const {
    // one-row batch fed from the caller's stream state
    const auto& cfg = unet_.config();
    if (cond.rank() != 1 || cond.dim(0) != cfg.cond_tokens * cfg.token_dim)
        throw dimension_error("sample: cond must be [" +
                              std::to_string(cfg.cond_tokens * cfg.token_dim) +
                              "], got " + shape_to_string(cond.shape));
    const int n = cfg.res * cfg.res;

    NoGradT<T> ng;
    auto ctx = make_context({keywords}, reshape(cond, {1, cfg.cond_tokens * cfg.token_dim}));

    std::vector<T> xv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) xv[static_cast<std::size_t>(i)] = static_cast<T>(rng.normal());

    for (int t = sched_.steps; t >= 1; --t) {
        auto x = from_vector<T>({1, 1, cfg.res, cfg.res}, xv);
        const auto pred = unet_.forward(x, {t}, ctx);
        const double bt = sched_.beta[static_cast<std::size_t>(t)];
        const double ab = sched_.alpha_bar[static_cast<std::size_t>(t)];
        const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - bt);
        const double coef = bt / std::sqrt(1.0 - ab);
        const double sigma = std::sqrt(bt);
        for (int i = 0; i < n; ++i) {
            double v = inv_sqrt_a * (double(xv[static_cast<std::size_t>(i)]) -
                                     coef * double(pred.ptr()[static_cast<std::size_t>(i)]));
            if (t > 1) v += sigma * rng.normal();
            xv[static_cast<std::size_t>(i)] = static_cast<T>(v);
        }
    }
    std::vector<T> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double p = (double(xv[static_cast<std::size_t>(i)]) + 1.0) / 2.0;
        out[static_cast<std::size_t>(i)] = static_cast<T>(std::clamp(p, 0.0, 1.0));
    }
    return out;
}

#define SEGICL_INSTANTIATE_DIFFUSION(T)                                            \
    template class KeywordEmbeddingT<T>;                                           \
    template class UNetT<T>;                                                       \
    template class DiffusionDecoderT<T>;                                           \
    template TensorBase<T> channel_norm(const TensorBase<T>&, const TensorBase<T>&, \
                                        const TensorBase<T>&);                     \
    template TensorBase<T> pixel_unshuffle(const TensorBase<T>&);                  \
    template TensorBase<T> pixel_shuffle(const TensorBase<T>&);

SEGICL_INSTANTIATE_DIFFUSION(float)
SEGICL_INSTANTIATE_DIFFUSION(double)

}  // namespace segicl
