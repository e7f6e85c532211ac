#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segicl::corpus {

inline constexpr int kRes = 32;  // all images and masks are kRes x kRes

enum class Modality { M0_flat, M1_textured, M2_inverted, M3_speckle };
enum class Structure { disc, ring, blob_pair, wedge };

// Manifest / config spellings.
std::string modality_name(Modality m);
std::string structure_name(Structure s);
Modality modality_from_name(const std::string& s);
Structure structure_from_name(const std::string& s);

// Single-token spellings used inside instructions.
std::string modality_word(Modality m);
std::string structure_word(Structure s);

// One rendered (image, mask) pair. Images are 8-bit intensities; masks use
// {0,1}. Quantization happens at render time, so a PNG round trip is exact.
struct Sample {
    std::vector<std::uint8_t> image;  // kRes*kRes
    std::vector<std::uint8_t> mask;   // kRes*kRes, values 0/1
};

struct Episode {
    std::vector<Sample> supports;
    Sample query;
    std::string instruction;
    Modality modality = Modality::M0_flat;
    Structure structure = Structure::disc;
    std::uint64_t seed = 0;
};

struct EpisodeRecord {
    int index = 0;
    Modality modality = Modality::M0_flat;
    Structure structure = Structure::disc;
    std::uint64_t seed = 0;
    std::vector<std::string> images;  // supports..., query (relative paths)
    std::vector<std::string> masks;
    std::string instruction;
};

struct CorpusManifest {
    int format_version = 0;
    std::string split;
    std::string root_dir;
    std::vector<EpisodeRecord> episodes;
};

enum class Split { train, test_id, test_ood_modality, test_ood_structure };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

// Generator knobs. Render parameter sets per modality are fixed; only the
// episode-level contrast-flip probabilities are exposed because they control
// how much the task rewards reading the support pairs.
struct CorpusConfig {
    std::uint64_t seed = 20260817;
    int train_n = 2048;
    int test_id_n = 128;
    int test_ood_modality_n = 64;
    int test_ood_structure_n = 64;
    int k_supports = 3;
    double m1_flip_prob = 0.2;
    double m3_flip_prob = 0.5;
};

// key=value lines, '#' comments; unknown keys raise config_error.
CorpusConfig parse_corpus_config(const std::string& path);
std::string corpus_config_text(const CorpusConfig& cfg);

// Deterministic render: same (modality, structure, seed) gives identical
// bytes. Rejection-samples geometry until the mask area lies in [1%, 60%] and
// the pre-noise foreground/background mean gap is >= 0.15; generation_error
// after 100 attempts.
Sample render_sample(Modality m, Structure s, std::uint64_t seed);
Sample render_sample(Modality m, Structure s, std::uint64_t seed,
                     const CorpusConfig& cfg);

std::string make_instruction(Structure s, Modality m);

// Renders n episodes into out_dir (images/, masks/, manifest.jsonl) and
// returns the manifest. Every byte is a function of (cfg, split, n, seed).
CorpusManifest build_split(const CorpusConfig& cfg, Split split, int n,
                           std::uint64_t seed, const std::string& out_dir);

CorpusManifest load_manifest(const std::string& dir);
Episode load_episode(const CorpusManifest& manifest, int index);

// Reads a mask PNG written by build_split; pixels must be exactly 0 or 255.
std::vector<std::uint8_t> load_binary_mask(const std::string& path);

// Per-modality intensity-threshold baseline used by the learnability check.
std::vector<std::uint8_t> threshold_baseline(const std::vector<std::uint8_t>& image,
                                             bool bright_foreground);

// Model-boundary conversions.
std::vector<float> image_to_float(const std::vector<std::uint8_t>& image);  // /255
std::vector<float> mask_to_float(const std::vector<std::uint8_t>& mask);    // {0,1}

}  // namespace segicl::corpus
