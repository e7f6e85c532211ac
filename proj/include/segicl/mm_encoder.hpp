#pragma once

#include <string>
#include <vector>

#include "segicl/corpus.hpp"
#include "segicl/nn.hpp"
#include "segicl/vocab.hpp"

namespace segicl {

enum class TokenKind : int { img_patch = 0, mask_patch = 1, text = 2, special = 3 };

struct EncoderConfig {
    int hidden = 128;
    int layers = 4;
    int heads = 4;
    int patch = 4;       // 4x4 pixels per token, 64 tokens per 32x32 image
    int max_seq = 512;
    int state_dim = 256;
    float aux_weight = 0.1f;  // language-head loss share; 0 skips the head

    void validate() const;  // config_error on violation
    int tokens_per_image() const {
        const int side = corpus::kRes / patch;
        return side * side;
    }
};

// Causal transformer over interleaved image/mask/text tokens plus the
// projector that reads off the final summary state.
//
// Sequence layout, fixed: [<img> support <mask> mask <sep>] x k,
// then [<img> query <sep>], then instruction words, then <state> last.
template <typename T>
class MMEncoderT {
public:
    struct Sequence {
        TensorBase<T> emb;            // [N, hidden], content + position + kind
        std::vector<TokenKind> kinds;
        std::vector<int> text_ids;    // word ids, in order
        int text_start = -1;          // position of the first word, -1 if none
        int state_pos = -1;           // always last position
        int length() const { return static_cast<int>(kinds.size()); }
    };

    MMEncoderT(const EncoderConfig& cfg, const Vocab& vocab, Rng& rng);

    // Embeds an episode prompt with k_use of its supports. Records onto the
    // current graph, so patch/table gradients flow during training.
    Sequence tokenize(const corpus::Episode& ep, int k_use);

    // Pre-norm causal transformer; output row i sees inputs [0, i] only.
    TensorBase<T> encode(const Sequence& seq) const;

    // Summary MLP at the <state> position: hidden -> state_dim.
    TensorBase<T> project(const TensorBase<T>& h, const Sequence& seq) const;

    // Logits over the vocabulary at every text position: [n_text, vocab].
    TensorBase<T> language_head(const TensorBase<T>& h, const Sequence& seq) const;

    // Mean next-word cross-entropy inside the text block; zero constant when
    // fewer than two words.
    TensorBase<T> aux_text_loss(const TensorBase<T>& h, const Sequence& seq) const;

    ParamRegistryT<T>& params() { return reg_; }
    const ParamRegistryT<T>& params() const { return reg_; }
    const EncoderConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }

private:
    struct Block {
        LayerNormT<T> ln1, ln2;
        LinearT<T> qkv, attn_out, fc1, fc2;
    };

    TensorBase<T> attention(const TensorBase<T>& x, const Block& blk) const;

    EncoderConfig cfg_;
    Vocab vocab_;
    ParamRegistryT<T> reg_;
    TensorBase<T> tok_table_;   // [vocab, hidden]
    TensorBase<T> pos_table_;   // [max_seq, hidden]
    TensorBase<T> kind_table_;  // [4, hidden]
    LinearT<T> patch_;
    std::vector<Block> blocks_;
    LayerNormT<T> ln_f_;
    LinearT<T> proj_fc1_, proj_fc2_;
    LinearT<T> lm_head_;
};

using MMEncoder = MMEncoderT<float>;

}  // namespace segicl
