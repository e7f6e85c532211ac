#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "segicl/condition_encoder.hpp"
#include "segicl/corpus.hpp"
#include "segicl/diffusion.hpp"
#include "segicl/mm_encoder.hpp"
#include "segicl/vocab.hpp"

namespace segicl {

// Everything needed to rebuild a model from scratch. The projector output,
// the condition-encoder output and the denoiser context width must agree,
// because inference feeds the projected state straight into the sampler.
struct ModelConfig {
    EncoderConfig enc;
    DenoiserConfig dec;
    int cond_hidden = 512;
    int sched_steps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.05;
    std::uint64_t init_seed = 0;

    int cond_dim() const { return dec.cond_tokens * dec.token_dim; }
    void validate() const;
};

// Owns the three trainable components. Parameter names are namespaced
// "enc." / "cond." / "dec." in the merged view and in checkpoints.
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    MMEncoder& encoder() { return enc_; }
    CondEncoder& cond() { return cond_; }
    DiffusionDecoder& decoder() { return dec_; }
    const MMEncoder& encoder() const { return enc_; }
    const CondEncoder& cond() const { return cond_; }
    const DiffusionDecoder& decoder() const { return dec_; }

    // Shallow views sharing storage with the components.
    ParamRegistry merged_params();
    ParamRegistry stage1_params();  // decoder + condition encoder

    // (decoder, condition encoder) checksums; the stage-2 freeze contract.
    std::pair<std::uint64_t, std::uint64_t> frozen_checksum() const;

private:
    ModelConfig cfg_;
    Rng init_rng_;
    MMEncoder enc_;
    CondEncoder cond_;
    DiffusionDecoder dec_;
};

struct TrainConfig {
    int stage = 1;
    int batch = 16;
    int steps = 20000;  // stage 2 runs shorter; the CLI defaults it to 10000
    float lr = 3e-4f;
    int warmup = 100;
    std::uint64_t seed = 0;
    float aux_weight = 0.1f;
    int k_max = 3;       // stage 2 samples k uniformly from {0..k_max}
    int eval_every = 500;
    std::string corpus_dir;
    std::string out_path;  // checkpoint destination; empty skips saving
    std::string log_path;  // CSV training log; empty skips logging

    void validate() const;
};

// Linear warmup then cosine decay to zero at the final step. 1-based.
float lr_at(const TrainConfig& cfg, int step);

// Block-majority reduction of a 32x32 binary mask; res must divide kRes.
// res == kRes returns the input unchanged.
std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& mask,
                                          int res);

// An in-memory split: manifest plus fully loaded episodes.
struct EpisodeSet {
    corpus::CorpusManifest manifest;
    std::vector<corpus::Episode> episodes;
};
EpisodeSet load_episodes(const std::string& dir);

struct CheckpointMeta {
    int format_version = 1;
    ModelConfig config;
    int stage = 0;
    std::int64_t step = 0;
    double running_loss = 0.0;
    std::string rng_state;
};

// Binary format: magic "SGICL1\n", an 8-byte little-endian header length,
// a JSON header (config snapshot, run metadata, tensor name/shape/offset
// table), then raw little-endian float32 payloads in name order.
void save_checkpoint(const std::string& path, Model& model,
                     const CheckpointMeta& meta);
CheckpointMeta peek_checkpoint(const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       CheckpointMeta* meta_out = nullptr);

// Stage 1: jointly trains the denoiser, the condition encoder and the keyword
// embeddings with the denoising objective on (query mask, keyword, condition)
// triples. Saves to cfg.out_path when set and returns the metadata.
CheckpointMeta train_stage1(Model& model, const TrainConfig& cfg,
                            const EpisodeSet& corpus);

// Stage 2: freezes decoder + condition encoder (checksum-verified) and trains
// the multimodal encoder to regress the condition vectors, plus the weighted
// auxiliary language loss. `prior` must come from a stage-1 checkpoint.
CheckpointMeta train_stage2(Model& model, const TrainConfig& cfg,
                            const EpisodeSet& corpus,
                            const CheckpointMeta& prior);

// tokenize -> encode -> project -> n_samples diffusion samples with seeds
// derived from `seed` -> pixel mean -> 0.5 threshold. Returns a res*res
// binary mask.
std::vector<std::uint8_t> infer(Model& model, const corpus::Episode& ep, int k,
                                int n_samples, std::uint64_t seed);

// Keyword-table words found in an instruction, in order of appearance.
std::vector<std::string> extract_keywords(const std::string& instruction,
                                          const KeywordEmbedding& kw);

}  // namespace segicl
