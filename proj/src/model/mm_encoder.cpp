#include "segicl/mm_encoder.hpp"

#include <cmath>

#include "segicl/errors.hpp"

namespace segicl {

void EncoderConfig::validate() const {
    if (hidden < 1 || layers < 1 || heads < 1 || patch < 1 || max_seq < 1 ||
        state_dim < 1)
        throw config_error("encoder: sizes must be positive");
    if (hidden % heads != 0)
        throw config_error("encoder: hidden " + std::to_string(hidden) +
                           " not divisible by heads " + std::to_string(heads));
    if (corpus::kRes % patch != 0)
        throw config_error("encoder: patch " + std::to_string(patch) +
                           " does not divide resolution " + std::to_string(corpus::kRes));
    if (aux_weight < 0)
        throw config_error("encoder: aux_weight must be >= 0");
}

template <typename T>
MMEncoderT<T>::MMEncoderT(const EncoderConfig& cfg, const Vocab& vocab, Rng& rng)
    : cfg_(cfg), vocab_(vocab) {
    cfg_.validate();
    const int h = cfg_.hidden;
    const int p2 = cfg_.patch * cfg_.patch;
    tok_table_ = reg_.add("tok_table", randn<T>(rng, {vocab_.size(), h}, T(0.02), true));
    pos_table_ = reg_.add("pos_table", randn<T>(rng, {cfg_.max_seq, h}, T(0.02), true));
    kind_table_ = reg_.add("kind_table", randn<T>(rng, {4, h}, T(0.02), true));
    patch_.init(reg_, "patch", p2, h, rng, T(1) / std::sqrt(T(p2)));

    const T ws = T(1) / std::sqrt(T(h));
    blocks_.resize(static_cast<std::size_t>(cfg_.layers));
    for (int l = 0; l < cfg_.layers; ++l) {
        auto& blk = blocks_[static_cast<std::size_t>(l)];
        const std::string pre = "blk" + std::to_string(l) + ".";
        blk.ln1.init(reg_, pre + "ln1", h);
        blk.ln2.init(reg_, pre + "ln2", h);
        blk.qkv.init(reg_, pre + "qkv", h, 3 * h, rng, ws);
        // residual branches shrink with depth so the untrained net stays tame
        blk.attn_out.init(reg_, pre + "attn_out", h, h, rng,
                          ws / std::sqrt(T(2 * cfg_.layers)));
        blk.fc1.init(reg_, pre + "fc1", h, 4 * h, rng, ws);
        blk.fc2.init(reg_, pre + "fc2", 4 * h, h, rng,
                     T(1) / std::sqrt(T(4 * h)) / std::sqrt(T(2 * cfg_.layers)));
    }
    ln_f_.init(reg_, "ln_f", h);
    proj_fc1_.init(reg_, "proj.fc1", h, cfg_.state_dim, rng, ws);
    proj_fc2_.init(reg_, "proj.fc2", cfg_.state_dim, cfg_.state_dim, rng,
                   T(1) / std::sqrt(T(cfg_.state_dim)));
    lm_head_.init(reg_, "lm_head", h, vocab_.size(), rng, ws);
}

template <typename T>
typename MMEncoderT<T>::Sequence MMEncoderT<T>::tokenize(const corpus::Episode& ep,
                                                         int k_use) {
    if (k_use < 0 || k_use > static_cast<int>(ep.supports.size()))
        throw contract_error("tokenize: k_use " + std::to_string(k_use) +
                             " exceeds available supports " +
                             std::to_string(ep.supports.size()));
    const std::vector<int> wids = vocab_.encode_words(ep.instruction);

    Sequence seq;
    std::vector<TensorBase<T>> pieces;
    auto push_special = [&](int id) {
        pieces.push_back(embedding_lookup(tok_table_, {id}));
        seq.kinds.push_back(TokenKind::special);
    };
    auto push_image = [&](const std::vector<std::uint8_t>& px, TokenKind kind) {
        const int r = corpus::kRes;
        if (static_cast<int>(px.size()) != r * r)
            throw dimension_error("tokenize: sample is not " + std::to_string(r) +
                                  "x" + std::to_string(r));
        // images arrive as u8 intensities, masks as {0,1}; both map to [-1,1]
        const T scale = kind == TokenKind::mask_patch ? T(2) : T(2) / T(255);
        std::vector<T> vals(px.size());
        for (std::size_t i = 0; i < px.size(); ++i)
            vals[i] = scale * static_cast<T>(px[i]) - T(1);
        const int p = cfg_.patch, side = r / p;
        auto x = from_vector<T>({r, r}, vals);
        x = reshape(x, {side, p, side, p});
        x = permute(x, {0, 2, 1, 3});
        x = reshape(x, {side * side, p * p});
        pieces.push_back(patch_(x));
        seq.kinds.insert(seq.kinds.end(), static_cast<std::size_t>(side * side), kind);
    };

    for (int k = 0; k < k_use; ++k) {
        const auto& sup = ep.supports[static_cast<std::size_t>(k)];
        push_special(vocab_.img_id());
        push_image(sup.image, TokenKind::img_patch);
        push_special(vocab_.mask_id());
        push_image(sup.mask, TokenKind::mask_patch);
        push_special(vocab_.sep_id());
    }
    push_special(vocab_.img_id());
    push_image(ep.query.image, TokenKind::img_patch);
    push_special(vocab_.sep_id());

    if (!wids.empty()) {
        seq.text_start = static_cast<int>(seq.kinds.size());
        pieces.push_back(embedding_lookup(tok_table_, wids));
        seq.kinds.insert(seq.kinds.end(), wids.size(), TokenKind::text);
        seq.text_ids = wids;
    }
    push_special(vocab_.state_id());

    const int n = static_cast<int>(seq.kinds.size());
    seq.state_pos = n - 1;
    if (n > cfg_.max_seq)
        throw capacity_error("tokenize: sequence length " + std::to_string(n) +
                             " exceeds max " + std::to_string(cfg_.max_seq));

    std::vector<int> pos_ids(static_cast<std::size_t>(n));
    std::vector<int> kind_ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pos_ids[static_cast<std::size_t>(i)] = i;
        kind_ids[static_cast<std::size_t>(i)] = static_cast<int>(seq.kinds[static_cast<std::size_t>(i)]);
    }
    auto emb = concat(pieces, 0);
    emb = add(emb, embedding_lookup(pos_table_, pos_ids));
    seq.emb = add(emb, embedding_lookup(kind_table_, kind_ids));
    return seq;
}

template <typename T>
TensorBase<T> MMEncoderT<T>::attention(const TensorBase<T>& x, const Block& blk) const {
    const int n = x.dim(0), h = cfg_.hidden, nh = cfg_.heads, hd = h / nh;
    auto qkv = blk.qkv(x);  // [n, 3h]
    auto q = permute(reshape(slice(qkv, 1, 0, h), {n, nh, hd}), {1, 0, 2});
    auto kt = permute(reshape(slice(qkv, 1, h, h), {n, nh, hd}), {1, 2, 0});
    auto v = permute(reshape(slice(qkv, 1, 2 * h, h), {n, nh, hd}), {1, 0, 2});

    auto scores = mul_scalar(matmul(q, kt), T(1) / std::sqrt(T(hd)));  // [nh,n,n]
    std::vector<T> maskv(static_cast<std::size_t>(n) * n, T(0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            maskv[static_cast<std::size_t>(i) * n + j] = T(-1e9);
    auto att = softmax(add_bcast0(scores, from_vector<T>({n, n}, maskv)), -1);
    auto out = reshape(permute(matmul(att, v), {1, 0, 2}), {n, h});
    return blk.attn_out(out);
}

template <typename T>
TensorBase<T> MMEncoderT<T>::encode(const Sequence& seq) const {
    if (!seq.emb.defined()) throw contract_error("encode: empty sequence");
    const int n = seq.emb.dim(0);
    if (n > cfg_.max_seq)
        throw capacity_error("encode: sequence length " + std::to_string(n) +
                             " exceeds max " + std::to_string(cfg_.max_seq));
    auto x = seq.emb;
    for (const auto& blk : blocks_) {
        x = add(x, attention(blk.ln1(x), blk));
        x = add(x, blk.fc2(gelu(blk.fc1(blk.ln2(x)))));
    }
    return ln_f_(x);
}

template <typename T>
TensorBase<T> MMEncoderT<T>::project(const TensorBase<T>& h, const Sequence& seq) const {
    if (seq.state_pos < 0 || seq.state_pos >= h.dim(0))
        throw contract_error("project: no state position");
    auto s = slice(h, 0, seq.state_pos, 1);  // [1, hidden]
    s = proj_fc2_(gelu(proj_fc1_(s)));
    return reshape(s, {cfg_.state_dim});
}

template <typename T>
TensorBase<T> MMEncoderT<T>::language_head(const TensorBase<T>& h, const Sequence& seq) const {
    const int m = static_cast<int>(seq.text_ids.size());
    if (m == 0) {
        TensorBase<T> empty;
        empty.shape = {0, vocab_.size()};
        empty.data = std::make_shared<std::vector<T>>();
        return empty;
    }
    return lm_head_(slice(h, 0, seq.text_start, m));
}

template <typename T>
TensorBase<T> MMEncoderT<T>::aux_text_loss(const TensorBase<T>& h, const Sequence& seq) const {
    const int m = static_cast<int>(seq.text_ids.size());
    if (m < 2) return zeros<T>({1});
    auto logits = lm_head_(slice(h, 0, seq.text_start, m - 1));
    const std::vector<int> next(seq.text_ids.begin() + 1, seq.text_ids.end());
    return cross_entropy(logits, next);
}

template class MMEncoderT<float>;
template class MMEncoderT<double>;

}  // namespace segicl
